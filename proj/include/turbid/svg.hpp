#pragma once

// Minimal static SVG charts: line chart with optional band, kernel density
// curves, and an observed-vs-predicted scatter.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "turbid/stats.hpp"

namespace turbid::svg {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"};

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity(), hi = -std::numeric_limits<double>::infinity();
    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad(double frac = 0.05) {
        if (!(hi >= lo)) lo = 0.0, hi = 1.0;
        if (hi == lo) lo -= 0.5, hi += 0.5;
        const double w = hi - lo;
        lo -= frac * w;
        hi += frac * w;
    }
};

/// Tick positions: about `count` round numbers covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi, int count = 5) {
    const double raw = (hi - lo) / count;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    return out;
}

class Canvas {
public:
    Canvas(std::string title, std::string xlabel, std::string ylabel, Range x, Range y, double width = 800, double height = 420)
        : w_(width), h_(height), x_(x), y_(y) {
        os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_) << "\" viewBox=\"0 0 "
            << num(w_) << ' ' << num(h_) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
        os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        os_ << "<text x=\"" << num(w_ / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
        os_ << "<text x=\"" << num(w_ / 2) << "\" y=\"" << num(h_ - 8) << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n";
        os_ << "<text x=\"16\" y=\"" << num(h_ / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << num(h_ / 2) << ")\">"
            << escape(ylabel) << "</text>\n";
        os_ << "<rect x=\"" << num(kL) << "\" y=\"" << num(kT) << "\" width=\"" << num(w_ - kL - kR) << "\" height=\""
            << num(h_ - kT - kB) << "\" fill=\"none\" stroke=\"black\"/>\n";
        for (double t : ticks(y_.lo, y_.hi)) {
            os_ << "<line x1=\"" << num(kL - 4) << "\" x2=\"" << num(kL) << "\" y1=\"" << num(py(t)) << "\" y2=\"" << num(py(t))
                << "\" stroke=\"black\"/><text x=\"" << num(kL - 6) << "\" y=\"" << num(py(t) + 4) << "\" text-anchor=\"end\">"
                << tick_label(t) << "</text>\n";
        }
    }

    double px(double x) const { return kL + (x - x_.lo) / (x_.hi - x_.lo) * (w_ - kL - kR); }
    double py(double y) const { return h_ - kB - (y - y_.lo) / (y_.hi - y_.lo) * (h_ - kT - kB); }

    void x_ticks() {
        for (double t : ticks(x_.lo, x_.hi)) x_tick(t, tick_label(t));
    }
    void x_tick(double x, const std::string& label) {
        os_ << "<line x1=\"" << num(px(x)) << "\" x2=\"" << num(px(x)) << "\" y1=\"" << num(h_ - kB) << "\" y2=\"" << num(h_ - kB + 4)
            << "\" stroke=\"black\"/><text x=\"" << num(px(x)) << "\" y=\"" << num(h_ - kB + 16) << "\" text-anchor=\"middle\">"
            << escape(label) << "</text>\n";
    }

    void polyline(std::span<const double> xs, std::span<const double> ys, const std::string& color, double width = 1.5,
                  const std::string& dash = {}) {
        os_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << '"';
        if (!dash.empty()) os_ << " stroke-dasharray=\"" << dash << '"';
        os_ << " points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i)
            if (std::isfinite(ys[i])) os_ << num(px(xs[i])) << ',' << num(py(ys[i])) << ' ';
        os_ << "\"/>\n";
    }

    void band(std::span<const double> xs, std::span<const double> lo, std::span<const double> hi, const std::string& color) {
        os_ << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) os_ << num(px(xs[i])) << ',' << num(py(hi[i])) << ' ';
        for (std::size_t i = xs.size(); i-- > 0;) os_ << num(px(xs[i])) << ',' << num(py(lo[i])) << ' ';
        os_ << "\"/>\n";
    }

    void points(std::span<const double> xs, std::span<const double> ys, const std::string& color) {
        for (std::size_t i = 0; i < xs.size(); ++i)
            os_ << "<circle cx=\"" << num(px(xs[i])) << "\" cy=\"" << num(py(ys[i])) << "\" r=\"2.5\" fill=\"" << color
                << "\" fill-opacity=\"0.7\"/>\n";
    }

    void legend(std::span<const std::string> labels, std::span<const std::string> colors) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double y = kT + 14 + 16 * static_cast<double>(i);
            os_ << "<rect x=\"" << num(kL + 10) << "\" y=\"" << num(y - 9) << "\" width=\"12\" height=\"10\" fill=\"" << colors[i]
                << "\"/><text x=\"" << num(kL + 28) << "\" y=\"" << num(y) << "\">" << escape(labels[i]) << "</text>\n";
        }
    }

    std::string finish() {
        os_ << "</svg>\n";
        return os_.str();
    }

private:
    static constexpr double kL = 60, kR = 20, kT = 30, kB = 45;

    static std::string tick_label(double t) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", t);
        return buf;
    }

    double w_, h_;
    Range x_, y_;
    std::ostringstream os_;
};

struct Series {
    std::string label;
    std::vector<double> y;
    std::optional<std::vector<double>> lower, upper;
};

/// Time-indexed lines; x values are 0..n-1 with `x_labels` drawn at a few
/// evenly spaced positions.
inline std::string line_chart(const std::string& title, const std::string& ylabel, std::span<const std::string> x_labels,
                              std::span<const Series> series) {
    const std::size_t n = x_labels.size();
    Range xr{0.0, std::max(1.0, double(n) - 1.0)}, yr;
    for (const auto& s : series) {
        for (double v : s.y) yr.include(v);
        if (s.lower)
            for (double v : *s.lower) yr.include(v);
        if (s.upper)
            for (double v : *s.upper) yr.include(v);
    }
    yr.pad();
    Canvas c(title, "date", ylabel, xr, yr);
    const std::size_t step = std::max<std::size_t>(1, n / 5);
    for (std::size_t i = 0; i < n; i += step) c.x_tick(double(i), x_labels[i]);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = double(i);
    std::vector<std::string> labels, colors;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::string col = kPalette[k % std::size(kPalette)];
        if (series[k].lower && series[k].upper) c.band(xs, *series[k].lower, *series[k].upper, col);
        c.polyline(xs, series[k].y, col, k == 0 ? 2.0 : 1.5, k == 0 ? "" : "5,3");
        labels.push_back(series[k].label);
        colors.push_back(col);
    }
    c.legend(labels, colors);
    return c.finish();
}

/// Gaussian kernel density with Silverman's bandwidth on a 200-point grid.
inline std::pair<std::vector<double>, std::vector<double>> kernel_density(std::span<const double> x, double lo, double hi) {
    const double n = double(x.size());
    double sd = std::sqrt(stats::variance(x));
    std::vector<double> sorted(x.begin(), x.end());
    const double iqr = stats::quantile(sorted, 0.75) - stats::quantile(sorted, 0.25);
    double bw = 0.9 * std::min(sd, iqr > 0 ? iqr / 1.34 : sd) * std::pow(n, -0.2);
    if (!(bw > 0.0)) bw = 1.0;
    std::vector<double> gx(200), gy(200);
    for (std::size_t i = 0; i < 200; ++i) {
        gx[i] = lo + (hi - lo) * double(i) / 199.0;
        double s = 0.0;
        for (double v : x) s += std::exp(-0.5 * std::pow((gx[i] - v) / bw, 2));
        gy[i] = s / (n * bw * std::sqrt(2.0 * std::numbers::pi));
    }
    return {gx, gy};
}

inline std::string density_chart(const std::string& title, const std::string& xlabel, std::span<const std::string> labels,
                                 std::span<const std::vector<double>> samples) {
    Range xr;
    for (const auto& s : samples)
        for (double v : s) xr.include(v);
    xr.pad(0.1);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> curves;
    Range yr{0.0, 0.0};
    for (const auto& s : samples) {
        curves.push_back(s.size() > 1 ? kernel_density(s, xr.lo, xr.hi) : std::pair<std::vector<double>, std::vector<double>>{});
        for (double v : curves.back().second) yr.include(v);
    }
    yr.pad();
    yr.lo = 0.0;
    Canvas c(title, xlabel, "density", xr, yr);
    c.x_ticks();
    std::vector<std::string> colors;
    for (std::size_t k = 0; k < curves.size(); ++k) {
        colors.push_back(kPalette[k % std::size(kPalette)]);
        c.polyline(curves[k].first, curves[k].second, colors.back());
    }
    c.legend(labels, colors);
    return c.finish();
}

inline std::string scatter_chart(const std::string& title, std::span<const double> observed, std::span<const std::string> labels,
                                 std::span<const std::vector<double>> predicted) {
    Range r;
    for (double v : observed) r.include(v);
    for (const auto& p : predicted)
        for (double v : p) r.include(v);
    r.pad();
    Canvas c(title, "observed", "predicted", r, r, 520, 520);
    c.x_ticks();
    const std::vector<double> diag{r.lo, r.hi};
    c.polyline(diag, diag, "#000000", 1.0, "4,4");
    std::vector<std::string> colors;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
        colors.push_back(kPalette[k % std::size(kPalette)]);
        c.points(observed, predicted[k], colors.back());
    }
    c.legend(labels, colors);
    return c.finish();
}

} // namespace turbid::svg

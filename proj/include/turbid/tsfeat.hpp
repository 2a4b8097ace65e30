#pragma once

// Window features for the meta-model: loess trend decomposition features,
// spectral entropy, and autocorrelation summaries of the raw and
// differenced window.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "turbid/common.hpp"
#include "turbid/dataset.hpp"
#include "turbid/stats.hpp"

namespace turbid::tsfeat {

/// Local quadratic regression of y on t = 0..n-1 with tricube weights over
/// the ceil(span * n) nearest indices.
inline std::vector<double> loess(std::span<const double> y, double span = 0.75, int degree = 2) {
    const std::size_t n = y.size();
    if (degree < 0 || degree > 2) throw std::invalid_argument("loess: degree must be 0, 1 or 2");
    const std::size_t q = std::min(n, static_cast<std::size_t>(std::ceil(span * static_cast<double>(n))));
    if (q < static_cast<std::size_t>(degree) + 2) throw std::invalid_argument("loess: too few points in span");
    std::vector<double> out(n);
    const Eigen::Index p = degree + 1;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[j] = std::abs(static_cast<double>(j) - static_cast<double>(i));
        std::vector<double> sorted = dist;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q - 1), sorted.end());
        double h = sorted[q - 1];
        if (span > 1.0) h *= span;
        h = std::max(h, 1.0) * (1.0 + 1e-10); // q-th neighbour gets a small positive weight
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd r(n);
        Eigen::Index rows = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double u = dist[j] / h;
            if (u >= 1.0) continue;
            const double w = std::sqrt(std::pow(1.0 - u * u * u, 3));
            const double dt = (static_cast<double>(j) - static_cast<double>(i)) / h;
            double pw = 1.0;
            for (Eigen::Index k = 0; k < p; ++k, pw *= dt) X(rows, k) = w * pw;
            r[rows] = w * y[j];
            ++rows;
        }
        // Centred at i, the fitted value is the intercept.
        const Eigen::VectorXd beta = X.topRows(rows).colPivHouseholderQr().solve(r.head(rows));
        out[i] = beta[0];
    }
    return out;
}

struct Decomposition {
    std::vector<double> trend, remainder;
};

inline Decomposition decompose_trend(std::span<const double> window) {
    if (window.size() < 10) throw std::invalid_argument("decompose_trend: window shorter than 10");
    Decomposition d;
    d.trend = loess(window, 0.75, 2);
    d.remainder.resize(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) d.remainder[i] = window[i] - d.trend[i];
    return d;
}

struct TrendFeatures {
    double trend_strength = 0.0, spike = 0.0, linearity = 0.0, curvature = 0.0;
};

/// Orthonormal degree-1 and degree-2 polynomial columns on 1..m (as R's
/// poly(t, 2)).
inline std::array<std::vector<double>, 2> orthonormal_poly2(std::size_t m) {
    std::vector<double> c0(m, 1.0 / std::sqrt(static_cast<double>(m))), p1(m), p2(m);
    const double tbar = (static_cast<double>(m) + 1.0) / 2.0;
    for (std::size_t i = 0; i < m; ++i) p1[i] = static_cast<double>(i + 1) - tbar;
    auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        for (double& x : v) x /= s;
    };
    normalize(p1);
    for (std::size_t i = 0; i < m; ++i) p2[i] = p1[i] * p1[i];
    for (const auto* basis : {&c0, &p1}) {
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += p2[i] * (*basis)[i];
        for (std::size_t i = 0; i < m; ++i) p2[i] -= dot * (*basis)[i];
    }
    normalize(p2);
    return {p1, p2};
}

inline TrendFeatures trend_features(std::span<const double> trend, std::span<const double> remainder) {
    const std::size_t m = trend.size();
    if (remainder.size() != m) throw std::invalid_argument("trend_features: length mismatch");
    if (m < 10) throw std::invalid_argument("trend_features: need at least 10 points");
    TrendFeatures f;
    std::vector<double> total(m);
    for (std::size_t i = 0; i < m; ++i) total[i] = trend[i] + remainder[i];
    const double vt = stats::variance(total);
    if (vt > 0.0) f.trend_strength = std::clamp(1.0 - stats::variance(remainder) / vt, 0.0, 1.0);

    // Leave-one-out variances from running sums: drop x_i from (S1, S2).
    const double s1 = std::accumulate(remainder.begin(), remainder.end(), 0.0);
    const double mbar = s1 / static_cast<double>(m);
    double s2c = 0.0;
    for (double r : remainder) s2c += (r - mbar) * (r - mbar);
    std::vector<double> loo(m);
    const double k = static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
        const double d = remainder[i] - mbar;
        // centred sum of squares without point i
        const double ss = s2c - d * d * static_cast<double>(m) / k;
        loo[i] = ss / (k - 1.0);
    }
    f.spike = stats::variance(loo);

    const auto [p1, p2] = orthonormal_poly2(m);
    for (std::size_t i = 0; i < m; ++i) {
        f.linearity += p1[i] * trend[i];
        f.curvature += p2[i] * trend[i];
    }
    return f;
}

/// Periodogram |DFT|^2 / n at Fourier frequencies k = 1..floor(n/2).
inline std::vector<double> periodogram(std::span<const double> x) {
    const std::size_t n = x.size();
    const double m = stats::mean(x);
    std::vector<double> out;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            re += (x[t] - m) * std::cos(ang);
            im -= (x[t] - m) * std::sin(ang);
        }
        out.push_back((re * re + im * im) / static_cast<double>(n));
    }
    return out;
}

/// Normalized Shannon entropy of the periodogram after one pass of the
/// modified Daniell kernel (1/4, 1/2, 1/4); weights are renormalized at the
/// ends of the frequency range.
inline double spectral_entropy(std::span<const double> window) {
    if (window.size() < 8) throw std::invalid_argument("spectral_entropy: window shorter than 8");
    const auto raw = periodogram(window);
    const std::size_t M = raw.size();
    std::vector<double> s(M);
    for (std::size_t k = 0; k < M; ++k) {
        double num = 0.5 * raw[k], den = 0.5;
        if (k > 0) num += 0.25 * raw[k - 1], den += 0.25;
        if (k + 1 < M) num += 0.25 * raw[k + 1], den += 0.25;
        s[k] = num / den;
    }
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    double scale = 0.0;
    for (double v : window) scale = std::max(scale, std::abs(v - window[0]));
    if (scale == 0.0 || !(total > 0.0))
        throw std::invalid_argument("spectral_entropy: constant window");
    double h = 0.0;
    for (double v : s)
        if (v > 0.0) h -= (v / total) * std::log(v / total);
    return std::clamp(h / std::log(static_cast<double>(M)), 0.0, 1.0);
}

struct AcfFeatures {
    double acf1 = 0.0, acf10 = 0.0;
    bool degenerate = false; ///< zero-variance series; values reported as 0
};

inline AcfFeatures acf_feature_set(std::span<const double> window, int diff_order) {
    if (diff_order < 0 || diff_order > 2) throw std::invalid_argument("acf_feature_set: diff_order must be 0, 1 or 2");
    const auto x = stats::difference(window, diff_order);
    if (x.size() < 12) throw std::invalid_argument("acf_feature_set: fewer than 12 points after differencing");
    AcfFeatures f;
    const double m = stats::mean(x);
    double c0 = 0.0, sq = 0.0;
    for (double v : x) c0 += (v - m) * (v - m), sq += v * v;
    if (!(c0 > 1e-20 * sq)) {
        f.degenerate = true;
        return f;
    }
    const auto r = stats::acf(x, 10);
    f.acf1 = r[0];
    for (double v : r) f.acf10 += v * v;
    return f;
}

// ---------------------------------------------------------------- vector

struct FeatureVector {
    double trend_strength = 0.0, spike = 0.0, linearity = 0.0, curvature = 0.0, entropy = 0.0;
    double x_acf1 = 0.0, x_acf10 = 0.0, diff1_acf1 = 0.0, diff1_acf10 = 0.0, diff2_acf1 = 0.0, diff2_acf10 = 0.0;
    std::optional<Date> window_end;
    std::vector<std::string> flags; ///< quality notes, e.g. "diff1_degenerate"

    static constexpr std::size_t kSize = 11;

    static const std::array<std::string, kSize>& names() {
        static const std::array<std::string, kSize> n{"trend_strength", "spike", "linearity", "curvature",
                                                      "entropy", "x_acf1", "x_acf10", "diff1_acf1",
                                                      "diff1_acf10", "diff2_acf1", "diff2_acf10"};
        return n;
    }
    std::array<double, kSize> values() const {
        return {trend_strength, spike, linearity, curvature, entropy, x_acf1, x_acf10,
                diff1_acf1, diff1_acf10, diff2_acf1, diff2_acf10};
    }
};

inline FeatureVector window_features(std::span<const double> window) {
    for (double v : window)
        if (!std::isfinite(v)) throw DataError("window_features: non-finite value in window");
    FeatureVector fv;
    const auto dec = decompose_trend(window);
    const auto tf = trend_features(dec.trend, dec.remainder);
    fv.trend_strength = tf.trend_strength;
    fv.spike = tf.spike;
    fv.linearity = tf.linearity;
    fv.curvature = tf.curvature;
    try {
        fv.entropy = spectral_entropy(window);
    } catch (const std::invalid_argument&) {
        fv.entropy = 0.0;
        fv.flags.push_back("constant_window");
    }
    const char* tags[] = {"x", "diff1", "diff2"};
    double* slots[][2] = {{&fv.x_acf1, &fv.x_acf10}, {&fv.diff1_acf1, &fv.diff1_acf10}, {&fv.diff2_acf1, &fv.diff2_acf10}};
    for (int d = 0; d < 3; ++d) {
        const auto a = acf_feature_set(window, d);
        *slots[d][0] = a.acf1;
        *slots[d][1] = a.acf10;
        if (a.degenerate) fv.flags.push_back(std::string(tags[d]) + "_degenerate");
    }
    return fv;
}

/// Features of series[t - window_len, t): the window_len values preceding
/// the 0-based index t.
inline FeatureVector extract_feature_vector(std::span<const double> series, std::size_t t, std::size_t window_len = 30) {
    if (t < window_len) throw std::invalid_argument("extract_feature_vector: insufficient history before t");
    if (t > series.size()) throw std::out_of_range("extract_feature_vector: t beyond series end");
    return window_features(series.subspan(t - window_len, window_len));
}

/// Feature vectors for each target index in `ts`, keyed by the last date
/// of the window.
inline std::vector<FeatureVector> extract_features(const TimeSeriesFrame& frame, std::string_view target,
                                                   std::span<const std::size_t> ts, std::size_t window_len = 30) {
    const auto y = frame.column(target);
    std::vector<FeatureVector> out;
    out.reserve(ts.size());
    for (std::size_t t : ts) {
        auto fv = extract_feature_vector(y, t, window_len);
        fv.window_end = frame.dates()[t - 1];
        out.push_back(std::move(fv));
    }
    return out;
}

inline void write_feature_csv(std::ostream& os, std::span<const FeatureVector> rows) {
    os << "window_end";
    for (const auto& n : FeatureVector::names()) os << ',' << n;
    os << ",flags\n";
    for (const auto& r : rows) {
        os << (r.window_end ? format_date(*r.window_end) : std::string{});
        for (double v : r.values()) os << ',' << format_real(v);
        os << ',';
        for (std::size_t k = 0; k < r.flags.size(); ++k) os << (k ? ";" : "") << r.flags[k];
        os << '\n';
    }
}

} // namespace turbid::tsfeat

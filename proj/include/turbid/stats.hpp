#pragma once

// Special functions and small descriptive statistics shared by the model
// families. The distribution tails are computed from the regularized
// incomplete gamma and beta functions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace turbid::stats {

namespace detail {

inline constexpr int kMaxIter = 1000;
inline constexpr double kEps = 1e-15;
inline constexpr double kTiny = 1e-300;

// Series expansion of P(a, x), valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < kMaxIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x), valid for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

// Continued fraction for the incomplete beta function.
inline double beta_cf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m < kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return h;
}

} // namespace detail

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_p: need a > 0 and x >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cf(a, x);
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

/// Regularized incomplete beta I_x(a, b).
inline double beta_inc(double a, double b, double x) {
    if (a <= 0.0 || b <= 0.0) throw std::domain_error("beta_inc: need a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double chi2_cdf(double x, double dof) { return x <= 0.0 ? 0.0 : gamma_p(0.5 * dof, 0.5 * x); }
inline double chi2_sf(double x, double dof) { return x <= 0.0 ? 1.0 : gamma_q(0.5 * dof, 0.5 * x); }

/// Upper tail of the F(d1, d2) distribution.
inline double f_sf(double f, double d1, double d2) {
    if (!(f > 0.0)) return 1.0;
    return beta_inc(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// ---------------------------------------------------------------------------
// descriptive

inline double mean(std::span<const double> x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance with the n-1 divisor.
inline double variance(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

/// Sample autocorrelations at lags 1..max_lag using the n divisor.
/// Returns all zeros for a zero-variance series.
inline std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
    const std::size_t n = x.size();
    std::vector<double> out(max_lag, 0.0);
    const double m = mean(x);
    double c0 = 0.0;
    for (double v : x) c0 += (v - m) * (v - m);
    if (!(c0 > 0.0)) return out;
    for (std::size_t k = 1; k <= max_lag && k < n; ++k) {
        double ck = 0.0;
        for (std::size_t t = k; t < n; ++t) ck += (x[t] - m) * (x[t - k] - m);
        out[k - 1] = ck / c0;
    }
    return out;
}

inline std::vector<double> difference(std::span<const double> x, int order = 1) {
    std::vector<double> out(x.begin(), x.end());
    for (int o = 0; o < order; ++o) {
        if (out.size() < 2) return {};
        for (std::size_t i = 0; i + 1 < out.size(); ++i) out[i] = out[i + 1] - out[i];
        out.pop_back();
    }
    return out;
}

/// Linear-interpolated sample quantile (type 7).
inline double quantile(std::vector<double> x, double prob) {
    if (x.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

/// KPSS level-stationarity statistic with a Bartlett long-run variance
/// estimate (lag truncation 4*(n/100)^(1/4)).
inline double kpss_level(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) throw std::invalid_argument("kpss_level: series too short");
    const double m = mean(x);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = x[i] - m;
    double s = 0.0, num = 0.0, gamma0 = 0.0;
    for (double v : e) {
        s += v;
        num += s * s;
        gamma0 += v * v;
    }
    const auto lags = static_cast<std::size_t>(std::floor(4.0 * std::pow(n / 100.0, 0.25)));
    double lrv = gamma0;
    for (std::size_t l = 1; l <= lags && l < n; ++l) {
        double g = 0.0;
        for (std::size_t t = l; t < n; ++t) g += e[t] * e[t - l];
        lrv += 2.0 * (1.0 - static_cast<double>(l) / (lags + 1.0)) * g;
    }
    lrv /= static_cast<double>(n);
    if (!(lrv > 0.0)) return 0.0;
    return num / (static_cast<double>(n) * static_cast<double>(n) * lrv);
}

/// 5% critical value of the KPSS level statistic.
inline constexpr double kKpssCritical5 = 0.463;

} // namespace turbid::stats

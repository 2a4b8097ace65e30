#pragma once

// Regression with ARIMA(p,d,q) errors.
//
//   y_t = b0 + b'x_t + e_t,   (1 - B)^d e_t ~ ARMA(p, q)
//
// The Gaussian likelihood is evaluated exactly with a Kalman filter on the
// d-times-differenced data. For fixed ARMA coefficients the innovations are
// linear in the observations, so the regression coefficients are profiled
// out by generalized least squares on the filtered columns; the optimizer
// only searches over the ARMA part. AR and MA coefficients are
// parameterized through partial autocorrelations mapped onto (-1, 1), which
// keeps every trial point stationary and invertible.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "turbid/common.hpp"
#include "turbid/dataset.hpp"
#include "turbid/optim.hpp"
#include "turbid/stats.hpp"

namespace turbid::arima {

struct ArimaOrder {
    int p = 0;
    int d = 0;
    int q = 0;

    static constexpr int kMaxP = 5;
    static constexpr int kMaxD = 2;
    static constexpr int kMaxQ = 5;

    bool valid() const { return p >= 0 && q >= 0 && d >= 0 && p <= kMaxP && q <= kMaxQ && d <= kMaxD; }
    friend bool operator==(const ArimaOrder&, const ArimaOrder&) = default;
};

inline std::string to_string(const ArimaOrder& o) {
    return "(" + std::to_string(o.p) + "," + std::to_string(o.d) + "," + std::to_string(o.q) + ")";
}

/// Corrected Akaike information criterion.
inline double aicc(double log_likelihood, int k, int n) {
    if (n <= k + 1) throw std::invalid_argument("aicc: need n > k + 1");
    const double kk = k;
    return -2.0 * log_likelihood + 2.0 * kk + 2.0 * kk * (kk + 1.0) / (n - kk - 1.0);
}

struct LjungBox {
    double statistic = 0.0;
    double p_value = 1.0;
    int lags = 0;
    int dof = 0;
};

/// Portmanteau test that autocorrelations up to lag h are jointly zero.
/// The reference distribution is chi-square with h - fitted_df degrees of
/// freedom.
inline LjungBox ljung_box(std::span<const double> residuals, int h, int fitted_df) {
    if (h <= fitted_df) throw std::invalid_argument("ljung_box: need h > fitted_df");
    if (h < 1) throw std::invalid_argument("ljung_box: need h >= 1");
    const auto n = static_cast<double>(residuals.size());
    if (residuals.size() <= static_cast<std::size_t>(h)) throw std::invalid_argument("ljung_box: need n > h");
    const auto rho = stats::acf(residuals, static_cast<std::size_t>(h));
    double q = 0.0;
    for (int k = 1; k <= h; ++k) q += rho[k - 1] * rho[k - 1] / (n - k);
    q *= n * (n + 2.0);
    LjungBox out;
    out.statistic = q;
    out.lags = h;
    out.dof = h - fitted_df;
    out.p_value = stats::chi2_sf(q, out.dof);
    return out;
}

/// Default lag count for residual diagnostics.
inline int default_ljung_box_lags(std::size_t n) {
    return std::max(1, std::min(25, static_cast<int>(n / 4)));
}

namespace detail {

/// Maps partial autocorrelations in (-1, 1) to AR coefficients of a
/// stationary polynomial 1 - phi_1 z - ... - phi_p z^p (Durbin-Levinson).
inline std::vector<double> pacf_to_ar(std::span<const double> pacf) {
    const std::size_t p = pacf.size();
    std::vector<double> phi(pacf.begin(), pacf.end());
    std::vector<double> work(p);
    for (std::size_t j = 1; j < p; ++j) {
        const double a = phi[j];
        for (std::size_t k = 0; k < j; ++k) work[k] = phi[k] - a * phi[j - k - 1];
        for (std::size_t k = 0; k < j; ++k) phi[k] = work[k];
    }
    return phi;
}

/// Inverse of pacf_to_ar. Returns nullopt for non-stationary input.
inline std::optional<std::vector<double>> ar_to_pacf(std::span<const double> ar) {
    const std::size_t p = ar.size();
    std::vector<double> phi(ar.begin(), ar.end());
    std::vector<double> pacf(p);
    for (std::size_t j = p; j-- > 0;) {
        const double a = phi[j];
        if (!(std::abs(a) < 1.0)) return std::nullopt;
        pacf[j] = a;
        std::vector<double> prev(j);
        for (std::size_t k = 0; k < j; ++k) prev[k] = (phi[k] + a * phi[j - k - 1]) / (1.0 - a * a);
        for (std::size_t k = 0; k < j; ++k) phi[k] = prev[k];
    }
    return pacf;
}

inline constexpr double kPacfBound = 1.0 - 1e-9;

inline std::vector<double> unconstrained_to_ar(std::span<const double> u) {
    std::vector<double> pacf(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) pacf[i] = std::clamp(std::tanh(u[i]), -kPacfBound, kPacfBound);
    return pacf_to_ar(pacf);
}

/// Largest modulus of the reciprocal roots of 1 - c_1 z - ... - c_m z^m
/// (eigenvalues of the companion matrix). Stationary iff < 1.
inline double max_inverse_root(std::span<const double> c) {
    const auto m = static_cast<Eigen::Index>(c.size());
    if (m == 0) return 0.0;
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) comp(0, i) = c[static_cast<std::size_t>(i)];
    for (Eigen::Index i = 1; i < m; ++i) comp(i, i - 1) = 1.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Minimum root modulus of 1 - c_1 z - ... ; infinity when all c are zero.
inline double min_root_modulus(std::span<const double> c) {
    const double r = max_inverse_root(c);
    return r > 0.0 ? 1.0 / r : std::numeric_limits<double>::infinity();
}

/// Harvey state-space form of a zero-mean ARMA(p, q) with unit innovation
/// variance. State dimension r = max(p, q + 1).
struct ArmaStateSpace {
    Eigen::MatrixXd transition;
    Eigen::VectorXd loading;
    Eigen::MatrixXd initial_cov;

    ArmaStateSpace(std::span<const double> phi, std::span<const double> theta) {
        const auto r = static_cast<Eigen::Index>(std::max(phi.size(), theta.size() + 1));
        transition = Eigen::MatrixXd::Zero(r, r);
        for (std::size_t i = 0; i < phi.size(); ++i) transition(static_cast<Eigen::Index>(i), 0) = phi[i];
        for (Eigen::Index i = 0; i + 1 < r; ++i) transition(i, i + 1) = 1.0;
        loading = Eigen::VectorXd::Zero(r);
        loading[0] = 1.0;
        for (std::size_t i = 0; i < theta.size(); ++i) loading[static_cast<Eigen::Index>(i) + 1] = theta[i];

        // Stationary covariance: vec(P) = (I - T kron T)^{-1} vec(R R').
        const Eigen::MatrixXd rr = loading * loading.transpose();
        const Eigen::Index r2 = r * r;
        Eigen::MatrixXd kron(r2, r2);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < r; ++j)
                kron.block(i * r, j * r, r, r) = transition(i, j) * transition;
        const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(r2, r2) - kron;
        const Eigen::VectorXd vec_rr = Eigen::Map<const Eigen::VectorXd>(rr.data(), r2);
        const Eigen::VectorXd vec_p = lhs.partialPivLu().solve(vec_rr);
        initial_cov = Eigen::Map<const Eigen::MatrixXd>(vec_p.data(), r, r);
        initial_cov = 0.5 * (initial_cov + initial_cov.transpose());
    }

    Eigen::Index dim() const { return transition.rows(); }
};

/// Result of filtering several series through the same ARMA model. The
/// gains depend only on the model, so all columns share `variance`.
struct Filtered {
    Eigen::MatrixXd innovations;   ///< n x m
    Eigen::VectorXd variance;      ///< n, in units of the innovation variance
    Eigen::MatrixXd next_state;    ///< r x m, predicted state for t = n + 1
    Eigen::MatrixXd next_cov;      ///< r x r
};

inline Filtered kalman_filter(const ArmaStateSpace& ss, const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows(), m = data.cols(), r = ss.dim();
    const Eigen::MatrixXd& T = ss.transition;
    const Eigen::MatrixXd RR = ss.loading * ss.loading.transpose();
    Filtered out;
    out.innovations.resize(n, m);
    out.variance.resize(n);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, m);
    Eigen::MatrixXd P = ss.initial_cov;
    Eigen::VectorXd K(r);
    bool steady = false;
    for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::RowVectorXd v = data.row(t) - a.row(0);
        const double F = P(0, 0);
        out.innovations.row(t) = v;
        out.variance[t] = F;
        if (!steady) K = T * P.col(0) / F;
        a = T * a + K * v;
        if (!steady) {
            Eigen::MatrixXd next = T * P * T.transpose() + RR - F * K * K.transpose();
            next = 0.5 * (next + next.transpose());
            // Once the covariance recursion has converged the gain is fixed.
            steady = (next - P).cwiseAbs().maxCoeff() < 1e-12;
            P = std::move(next);
        }
    }
    out.next_state = std::move(a);
    out.next_cov = std::move(P);
    return out;
}

/// Profiled likelihood evaluation for fixed ARMA coefficients.
struct ProfiledFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_gram; ///< X~'X~ of the whitened design
    double ssq = 0.0;
    double sum_log_var = 0.0;
    double sigma2 = 0.0;
    double log_likelihood = -std::numeric_limits<double>::infinity();
    Filtered filtered;
};

inline ProfiledFit profile(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const double> phi,
                           std::span<const double> theta) {
    ProfiledFit pf;
    const ArmaStateSpace ss(phi, theta);
    Eigen::MatrixXd data(y.size(), X.cols() + 1);
    data.col(0) = y;
    if (X.cols() > 0) data.rightCols(X.cols()) = X;
    pf.filtered = kalman_filter(ss, data);
    const auto& F = pf.filtered.variance;
    if (!(F.minCoeff() > 0.0) || !F.allFinite()) return pf;
    const Eigen::VectorXd w = F.cwiseSqrt().cwiseInverse();
    const Eigen::VectorXd ys = pf.filtered.innovations.col(0).cwiseProduct(w);
    Eigen::VectorXd resid = ys;
    if (X.cols() > 0) {
        const Eigen::MatrixXd Xs = w.asDiagonal() * pf.filtered.innovations.rightCols(X.cols());
        pf.beta_gram = Xs.transpose() * Xs;
        pf.beta = Xs.colPivHouseholderQr().solve(ys);
        resid -= Xs * pf.beta;
    } else {
        pf.beta.resize(0);
    }
    const auto n = static_cast<double>(y.size());
    pf.ssq = resid.squaredNorm();
    pf.sum_log_var = F.array().log().sum();
    pf.sigma2 = pf.ssq / n;
    if (!(pf.sigma2 > 0.0)) return pf;
    pf.log_likelihood = -0.5 * (n * std::log(2.0 * std::numbers::pi * pf.sigma2) + n + pf.sum_log_var);
    return pf;
}

/// Conditional sum of squares (first p observations conditioned on,
/// pre-sample innovations zero) with the regression profiled out.
inline double css_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::span<const double> phi,
                            std::span<const double> theta) {
    const Eigen::Index n = y.size(), m = X.cols() + 1;
    const auto p = static_cast<Eigen::Index>(phi.size());
    const auto q = static_cast<Eigen::Index>(theta.size());
    Eigen::MatrixXd data(n, m);
    data.col(0) = y;
    if (X.cols() > 0) data.rightCols(X.cols()) = X;
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, m);
    for (Eigen::Index t = p; t < n; ++t) {
        Eigen::RowVectorXd v = data.row(t);
        for (Eigen::Index i = 0; i < p; ++i) v -= phi[static_cast<std::size_t>(i)] * data.row(t - i - 1);
        for (Eigen::Index j = 0; j < q && t - j - 1 >= p; ++j)
            v -= theta[static_cast<std::size_t>(j)] * e.row(t - j - 1);
        e.row(t) = v;
    }
    const Eigen::Index used = n - p;
    if (used <= 0) return std::numeric_limits<double>::infinity();
    Eigen::VectorXd resid = e.col(0).tail(used);
    if (X.cols() > 0) {
        const Eigen::MatrixXd Xe = e.rightCols(X.cols()).bottomRows(used);
        resid -= Xe * Xe.colPivHouseholderQr().solve(resid);
    }
    const double ssq = resid.squaredNorm();
    if (!(ssq > 0.0)) return std::numeric_limits<double>::infinity();
    return 0.5 * static_cast<double>(used) * std::log(ssq / static_cast<double>(used));
}

inline Eigen::VectorXd difference_vector(const Eigen::VectorXd& v, int d) {
    Eigen::VectorXd out = v;
    for (int k = 0; k < d; ++k) out = (out.tail(out.size() - 1) - out.head(out.size() - 1)).eval();
    return out;
}

inline Eigen::MatrixXd difference_rows(const Eigen::MatrixXd& X, int d) {
    Eigen::MatrixXd out = X;
    for (int k = 0; k < d; ++k) out = (out.bottomRows(out.rows() - 1) - out.topRows(out.rows() - 1)).eval();
    return out;
}

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

} // namespace detail

/// Fitted regression with ARIMA errors. Immutable after construction.
struct DynRegFit {
    ArimaOrder order;
    std::vector<std::string> covariates; ///< in the order `beta` (after the intercept) uses
    bool has_intercept = false;          ///< only when d = 0
    std::vector<double> beta;            ///< [intercept,] covariate coefficients
    std::vector<double> beta_se;
    std::vector<double> phi, theta;
    std::vector<double> phi_se, theta_se;
    double sigma2 = 0.0;
    double log_likelihood = 0.0;
    double aicc = 0.0;
    int n_effective = 0; ///< observations after differencing
    int n_params = 0;    ///< counted for AICc (coefficients + variance)
    std::vector<double> residuals; ///< standardized innovations, length n - d
    LjungBox ljung_box;
    std::vector<double> optimizer_history;

    // Forecast state.
    std::vector<double> last_y;                  ///< last d observed targets, oldest first
    std::vector<std::vector<double>> last_x;     ///< last d covariate rows, oldest first
    Eigen::MatrixXd next_state;                  ///< for [y | X] columns
    double next_variance = 1.0;                  ///< unit-variance one-step state variance

    /// Regression coefficient for a named covariate.
    double coefficient(std::string_view name) const {
        const auto it = std::find(covariates.begin(), covariates.end(), name);
        if (it == covariates.end()) throw std::out_of_range("not in fit: " + std::string(name));
        return beta[static_cast<std::size_t>(it - covariates.begin()) + (has_intercept ? 1 : 0)];
    }
};

struct FitOptions {
    optim::BfgsOptions optimizer{};
    bool check_sample_size = true;
};

/// Fits y = X b + ARIMA(p,d,q) errors by exact maximum likelihood.
/// `target` is length n; `covariates` holds one column per entry of `names`.
inline DynRegFit fit_dynamic_regression(std::span<const double> target,
                                        std::span<const std::vector<double>> covariates,
                                        std::span<const std::string> names, ArimaOrder order,
                                        const FitOptions& options = {}) {
    if (!order.valid()) throw std::invalid_argument("invalid ARIMA order " + to_string(order));
    if (covariates.size() != names.size()) throw std::invalid_argument("covariate names/columns mismatch");
    const auto n = static_cast<Eigen::Index>(target.size());
    const auto k = static_cast<Eigen::Index>(covariates.size());
    for (const auto& c : covariates)
        if (static_cast<Eigen::Index>(c.size()) != n) throw std::invalid_argument("covariate length mismatch");
    if (options.check_sample_size && n <= 10 * (order.p + order.q + order.d + k + 1))
        throw std::invalid_argument("too few observations for ARIMA" + to_string(order));
    if (n - order.d <= std::max(order.p, order.q + 1) + 1)
        throw std::invalid_argument("too few observations after differencing");

    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
    const bool intercept = order.d == 0;
    Eigen::MatrixXd X(n, k + (intercept ? 1 : 0));
    if (intercept) X.col(0).setOnes();
    for (Eigen::Index j = 0; j < k; ++j)
        X.col(j + (intercept ? 1 : 0)) =
            Eigen::Map<const Eigen::VectorXd>(covariates[static_cast<std::size_t>(j)].data(), n);

    // Rank check on the full design with intercept catches constant columns
    // even when differencing would remove the intercept.
    {
        Eigen::MatrixXd Xfull(n, k + 1);
        Xfull.col(0).setOnes();
        if (k > 0) Xfull.rightCols(k) = intercept ? X.rightCols(k) : X;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xfull);
        qr.setThreshold(1e-10);
        if (qr.rank() < Xfull.cols()) throw FitError("singular covariate design");
    }

    const Eigen::VectorXd yd = detail::difference_vector(y, order.d);
    const Eigen::MatrixXd Xd = detail::difference_rows(X, order.d);
    const auto p = static_cast<std::size_t>(order.p), q = static_cast<std::size_t>(order.q);

    auto split = [p, q](const Eigen::VectorXd& u) {
        std::vector<double> up(u.data(), u.data() + p), uq(u.data() + p, u.data() + p + q);
        auto phi = detail::unconstrained_to_ar(up);
        auto th = detail::unconstrained_to_ar(uq);
        for (double& t : th) t = -t;
        return std::pair{phi, th};
    };

    const optim::Objective css = [&](const Eigen::VectorXd& u) {
        auto [phi, th] = split(u);
        return detail::css_objective(yd, Xd, phi, th);
    };
    const optim::Objective nll = [&](const Eigen::VectorXd& u) {
        auto [phi, th] = split(u);
        return -detail::profile(yd, Xd, phi, th).log_likelihood;
    };

    const Eigen::Index npar = static_cast<Eigen::Index>(p + q);
    Eigen::VectorXd start = Eigen::VectorXd::Zero(npar);
    if (npar > 0) {
        optim::BfgsOptions seed_opt = options.optimizer;
        seed_opt.max_iterations = std::min(seed_opt.max_iterations, 200);
        const auto seed = optim::minimize_bfgs(css, start, seed_opt);
        if (seed.x.allFinite() && (seed.x.array().abs() < 8.0).all()) start = seed.x;
    }
    auto best = optim::minimize_bfgs(nll, start, options.optimizer);
    if (npar > 0 && start.norm() > 0.0) {
        // The CSS seed can land in a poor basin; compare with a cold start.
        auto cold = optim::minimize_bfgs(nll, Eigen::VectorXd::Zero(npar), options.optimizer);
        if (cold.value < best.value - 1e-9) best = std::move(cold);
    }
    if (!std::isfinite(best.value)) throw FitError("likelihood is not finite for ARIMA" + to_string(order));
    if (!best.converged) throw FitError("optimizer did not converge for ARIMA" + to_string(order));

    auto [phi, theta] = split(best.x);
    std::vector<double> neg_theta(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) neg_theta[i] = -theta[i];
    constexpr double kRootMargin = 1.0 + 1e-6;
    if (detail::min_root_modulus(phi) <= kRootMargin) throw FitError("non-stationary AR part at optimum");
    if (detail::min_root_modulus(neg_theta) <= kRootMargin) throw FitError("non-invertible MA part at optimum");

    const detail::ProfiledFit pf = detail::profile(yd, Xd, phi, theta);
    if (!(pf.sigma2 > 0.0)) throw FitError("zero innovation variance");

    DynRegFit fit;
    fit.order = order;
    fit.covariates.assign(names.begin(), names.end());
    fit.has_intercept = intercept;
    fit.beta.assign(pf.beta.data(), pf.beta.data() + pf.beta.size());
    fit.phi = phi;
    fit.theta = theta;
    fit.sigma2 = pf.sigma2;
    fit.log_likelihood = pf.log_likelihood;
    fit.n_effective = static_cast<int>(yd.size());
    fit.n_params = static_cast<int>(X.cols() + npar + 1);
    fit.aicc = fit.n_effective > fit.n_params + 1 ? aicc(fit.log_likelihood, fit.n_params, fit.n_effective)
                                                  : std::numeric_limits<double>::infinity();
    fit.optimizer_history = best.history;

    // Standard errors: GLS for the regression part, observed information of
    // the profiled likelihood for the ARMA part.
    if (X.cols() > 0) {
        const Eigen::MatrixXd cov = pf.sigma2 * pf.beta_gram.inverse();
        for (Eigen::Index i = 0; i < X.cols(); ++i) fit.beta_se.push_back(std::sqrt(cov(i, i)));
    }
    if (npar > 0) {
        Eigen::VectorXd coef(npar);
        for (std::size_t i = 0; i < p; ++i) coef[static_cast<Eigen::Index>(i)] = phi[i];
        for (std::size_t i = 0; i < q; ++i) coef[static_cast<Eigen::Index>(p + i)] = theta[i];
        const optim::Objective raw_nll = [&](const Eigen::VectorXd& c) {
            std::vector<double> ph(c.data(), c.data() + p), th(c.data() + p, c.data() + p + q);
            return -detail::profile(yd, Xd, ph, th).log_likelihood;
        };
        const Eigen::MatrixXd info = optim::numeric_hessian(raw_nll, coef, 1e-4);
        const Eigen::MatrixXd cov = info.inverse();
        for (Eigen::Index i = 0; i < npar; ++i) {
            const double v = cov(i, i);
            (static_cast<std::size_t>(i) < p ? fit.phi_se : fit.theta_se)
                .push_back(v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN());
        }
    }

    // Residuals of the fitted regression: innovations of y - X b.
    const auto& inn = pf.filtered.innovations;
    Eigen::VectorXd r = inn.col(0);
    if (X.cols() > 0) r -= inn.rightCols(X.cols()) * pf.beta;
    r = r.cwiseQuotient(pf.filtered.variance.cwiseSqrt());
    fit.residuals.assign(r.data(), r.data() + r.size());
    const int lags = default_ljung_box_lags(fit.residuals.size());
    if (lags > order.p + order.q)
        fit.ljung_box = ljung_box(fit.residuals, lags, order.p + order.q);

    for (Eigen::Index t = n - order.d; t < n; ++t) {
        fit.last_y.push_back(y[t]);
        std::vector<double> row(static_cast<std::size_t>(k));
        for (Eigen::Index j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = covariates[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
        fit.last_x.push_back(std::move(row));
    }
    fit.next_state = pf.filtered.next_state;
    fit.next_variance = pf.filtered.next_cov(0, 0);
    return fit;
}

/// Frame-based convenience overload.
inline DynRegFit fit_dynamic_regression(const TimeSeriesFrame& frame, std::string_view target,
                                        std::span<const std::string> covariates, ArimaOrder order,
                                        const FitOptions& options = {}) {
    std::vector<std::vector<double>> cols;
    for (const auto& c : covariates) {
        auto s = frame.column(c);
        cols.emplace_back(s.begin(), s.end());
    }
    return fit_dynamic_regression(frame.column(target), cols, covariates, order, options);
}

/// One-step-ahead forecast given the covariates of the forecast day.
inline ForecastPoint forecast_one_step(const DynRegFit& fit, std::span<const double> next_covariates) {
    if (next_covariates.size() != fit.covariates.size())
        throw std::invalid_argument("forecast: expected " + std::to_string(fit.covariates.size()) +
                                    " covariates, got " + std::to_string(next_covariates.size()));
    const int d = fit.order.d;
    const std::size_t off = fit.has_intercept ? 1 : 0;
    const std::size_t k = fit.covariates.size();

    // Differenced covariate row for the new day.
    std::vector<double> xd(next_covariates.begin(), next_covariates.end());
    if (d > 0) {
        for (std::size_t j = 0; j < k; ++j) {
            // Delta^d x_{n+1} = sum_i (-1)^i C(d,i) x_{n+1-i}
            double acc = next_covariates[j];
            for (int i = 1; i <= d; ++i)
                acc += ((i % 2) ? -1.0 : 1.0) * detail::binomial(d, i) *
                       fit.last_x[static_cast<std::size_t>(d - i)][j];
            xd[j] = acc;
        }
    }
    // ARMA error forecast from the filtered state of y - X b.
    double err = fit.next_state(0, 0);
    for (std::size_t j = 0; j < fit.beta.size(); ++j) err -= fit.beta[j] * fit.next_state(0, static_cast<Eigen::Index>(j) + 1);
    double diffed = err;
    if (fit.has_intercept) diffed += fit.beta[0];
    for (std::size_t j = 0; j < k; ++j) diffed += fit.beta[off + j] * xd[j];

    double mean = diffed;
    for (int i = 1; i <= d; ++i)
        mean -= ((i % 2) ? -1.0 : 1.0) * detail::binomial(d, i) * fit.last_y[static_cast<std::size_t>(d - i)];

    const double half = kZ975 * std::sqrt(fit.sigma2 * fit.next_variance);
    return ForecastPoint{mean, mean - half, mean + half, ModelTag::Arima};
}

// ---------------------------------------------------------------------------
// model selection

struct LeaderboardEntry {
    std::vector<std::string> covariates;
    ArimaOrder order;
    double aicc = 0.0;
    int n_params = 0;
};

struct Selection {
    DynRegFit best;
    std::vector<LeaderboardEntry> leaderboard; ///< every successful fit, sorted by AICc
    std::size_t failed_fits = 0;
};

struct SelectionOptions {
    FitOptions fit{};
    ArimaOrder seed{2, 0, 2};
    int max_models_per_subset = 94;
};

/// Number of differences suggested by repeated KPSS tests on the OLS
/// residuals of target on covariates.
inline int choose_differencing(std::span<const double> target, std::span<const std::vector<double>> covariates) {
    const auto n = static_cast<Eigen::Index>(target.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(covariates.size()) + 1);
    X.col(0).setOnes();
    for (std::size_t j = 0; j < covariates.size(); ++j)
        X.col(static_cast<Eigen::Index>(j) + 1) = Eigen::Map<const Eigen::VectorXd>(covariates[j].data(), n);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
    const Eigen::VectorXd resid = y - X * X.colPivHouseholderQr().solve(y);
    std::vector<double> e(resid.data(), resid.data() + n);
    int d = 0;
    while (d < ArimaOrder::kMaxD && e.size() > 10 && stats::kpss_level(e) > stats::kKpssCritical5) {
        e = stats::difference(e);
        ++d;
    }
    return d;
}

namespace detail {

inline bool better(double aicc_a, int k_a, double aicc_b, int k_b) {
    if (aicc_a < aicc_b - 1e-9) return true;
    if (aicc_a > aicc_b + 1e-9) return false;
    return k_a < k_b;
}

} // namespace detail

/// Stepwise order search for one covariate subset.
inline std::optional<DynRegFit> stepwise_order_search(std::span<const double> target,
                                                      std::span<const std::vector<double>> covariates,
                                                      std::span<const std::string> names,
                                                      const SelectionOptions& options,
                                                      std::vector<LeaderboardEntry>& leaderboard,
                                                      std::size_t& failed) {
    const int d = choose_differencing(target, covariates);
    std::optional<DynRegFit> best;
    std::vector<ArimaOrder> tried;
    auto attempt = [&](ArimaOrder o) {
        if (!o.valid() || std::find(tried.begin(), tried.end(), o) != tried.end()) return false;
        tried.push_back(o);
        try {
            DynRegFit f = fit_dynamic_regression(target, covariates, names, o, options.fit);
            if (!std::isfinite(f.aicc)) throw FitError("AICc undefined");
            leaderboard.push_back({f.covariates, o, f.aicc, f.n_params});
            if (!best || detail::better(f.aicc, f.n_params, best->aicc, best->n_params)) {
                best = std::move(f);
                return true;
            }
        } catch (const std::invalid_argument&) {
            ++failed;
        } catch (const FitError&) {
            ++failed;
        }
        return false;
    };

    const ArimaOrder seed{options.seed.p, d, options.seed.q};
    for (ArimaOrder o : {seed, ArimaOrder{0, d, 0}, ArimaOrder{1, d, 0}, ArimaOrder{0, d, 1}}) attempt(o);
    bool improved = best.has_value();
    while (improved && static_cast<int>(tried.size()) < options.max_models_per_subset) {
        improved = false;
        const ArimaOrder c = best->order;
        const int steps[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, 1}, {-1, 1}, {1, -1}};
        for (const auto& s : steps) {
            if (attempt(ArimaOrder{c.p + s[0], d, c.q + s[1]})) {
                improved = true;
                break;
            }
        }
    }
    return best;
}

/// Exhaustive covariate-subset enumeration, each with a stepwise ARIMA
/// order search; returns the overall AICc minimizer.
inline Selection select_best_dynreg(const TimeSeriesFrame& frame, std::string_view target,
                                    std::span<const std::string> candidates, const SelectionOptions& options = {}) {
    if (candidates.size() > 6) throw std::invalid_argument("select_best_dynreg: at most 6 candidate covariates");
    const auto y = frame.column(target);
    Selection sel;
    std::optional<DynRegFit> best;
    const std::uint32_t subsets = 1u << candidates.size();
    for (std::uint32_t mask = 0; mask < subsets; ++mask) {
        std::vector<std::string> names;
        std::vector<std::vector<double>> cols;
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (!(mask & (1u << j))) continue;
            names.push_back(candidates[j]);
            auto c = frame.column(candidates[j]);
            cols.emplace_back(c.begin(), c.end());
        }
        auto fit = stepwise_order_search(y, cols, names, options, sel.leaderboard, sel.failed_fits);
        if (fit && (!best || detail::better(fit->aicc, fit->n_params, best->aicc, best->n_params)))
            best = std::move(fit);
    }
    if (!best) throw FitError("select_best_dynreg: every candidate fit failed");
    sel.best = std::move(*best);
    std::stable_sort(sel.leaderboard.begin(), sel.leaderboard.end(),
                     [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
                         return detail::better(a.aicc, a.n_params, b.aicc, b.n_params);
                     });
    return sel;
}

// ---------------------------------------------------------------------------
// export

inline nlohmann::json to_json(const DynRegFit& fit) {
    nlohmann::json j;
    j["order"] = {{"p", fit.order.p}, {"d", fit.order.d}, {"q", fit.order.q}};
    j["covariates"] = fit.covariates;
    nlohmann::json coef = nlohmann::json::object();
    std::size_t off = 0;
    if (fit.has_intercept) {
        coef["intercept"] = {{"estimate", fit.beta[0]}, {"se", fit.beta_se.empty() ? 0.0 : fit.beta_se[0]}};
        off = 1;
    }
    for (std::size_t i = 0; i < fit.covariates.size(); ++i)
        coef[fit.covariates[i]] = {{"estimate", fit.beta[off + i]}, {"se", fit.beta_se[off + i]}};
    for (std::size_t i = 0; i < fit.phi.size(); ++i)
        coef["ar" + std::to_string(i + 1)] = {{"estimate", fit.phi[i]}, {"se", fit.phi_se[i]}};
    for (std::size_t i = 0; i < fit.theta.size(); ++i)
        coef["ma" + std::to_string(i + 1)] = {{"estimate", fit.theta[i]}, {"se", fit.theta_se[i]}};
    j["coefficients"] = coef;
    j["sigma2"] = fit.sigma2;
    j["log_likelihood"] = fit.log_likelihood;
    j["aicc"] = fit.aicc;
    j["n_effective"] = fit.n_effective;
    j["ljung_box"] = {{"Q", fit.ljung_box.statistic},
                      {"df", fit.ljung_box.dof},
                      {"lags", fit.ljung_box.lags},
                      {"p", fit.ljung_box.p_value}};
    return j;
}

inline nlohmann::json to_json(const Selection& sel, std::size_t top = 10) {
    nlohmann::json j = to_json(sel.best);
    nlohmann::json board = nlohmann::json::array();
    for (std::size_t i = 0; i < sel.leaderboard.size() && i < top; ++i) {
        const auto& e = sel.leaderboard[i];
        board.push_back({{"covariates", e.covariates},
                         {"order", to_string(e.order)},
                         {"aicc", e.aicc},
                         {"n_params", e.n_params}});
    }
    j["leaderboard"] = board;
    j["failed_fits"] = sel.failed_fits;
    return j;
}

} // namespace turbid::arima

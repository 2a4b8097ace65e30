#pragma once

// Additive model for the target: intercept, optional lag-1/lag-2 terms of
// the target, and one natural-spline smooth per covariate, fitted by
// unpenalized least squares at fixed degrees of freedom.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "turbid/arima.hpp"
#include "turbid/common.hpp"
#include "turbid/dataset.hpp"
#include "turbid/spline.hpp"
#include "turbid/stats.hpp"

namespace turbid::gam {

struct SmoothSpec {
    std::string covariate;
    int df = 4; ///< 1 = linear term

    friend bool operator==(const SmoothSpec&, const SmoothSpec&) = default;
};

inline constexpr int kCandidateDf[] = {1, 4, 6, 12};

struct Smooth {
    SmoothSpec spec;
    spline::NaturalSplineBasis basis;
    std::vector<double> coefficients;
    Eigen::Index first_column = 0; ///< offset of this block in the design
    double train_min = 0.0, train_max = 0.0;
    std::vector<double> train_values; ///< covariate values on the fitted rows
};

/// Which band forecast_one_step reports.
enum class Band { Prediction, Confidence };

struct GamFit {
    std::string target;
    double intercept = 0.0;
    bool use_lags = true;
    std::vector<double> lag_coeffs; ///< y_{t-1}, y_{t-2} when use_lags
    std::vector<Smooth> smooths;
    double rss = 0.0;
    double sigma2 = 0.0; ///< rss / (n - rank)
    int n = 0;
    int design_rank = 0;
    double log_likelihood = 0.0;
    double aicc = 0.0;
    Eigen::MatrixXd design;        ///< n x p training design
    Eigen::VectorXd response;
    Eigen::MatrixXd xtx_inverse;   ///< (X'X)^{-1}
    Eigen::VectorXd coefficients;  ///< full coefficient vector in design order

    const Smooth* find(std::string_view covariate) const {
        for (const auto& s : smooths)
            if (s.spec.covariate == covariate) return &s;
        return nullptr;
    }
    Eigen::VectorXd fitted() const { return design * coefficients; }
};

namespace detail {

struct LsResult {
    Eigen::VectorXd coef;
    double rss = 0.0;
    Eigen::Index rank = 0;
};

inline LsResult least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    LsResult r;
    r.rank = qr.rank();
    r.coef = qr.solve(y);
    r.rss = (y - X * r.coef).squaredNorm();
    return r;
}

inline double gaussian_log_likelihood(double rss, int n) {
    return -0.5 * n * (std::log(2.0 * std::numbers::pi * rss / n) + 1.0);
}

} // namespace detail

/// Fits the additive model on `target` with the given covariate columns.
/// With lags enabled the first two rows only supply lag values.
inline GamFit fit_gam(std::span<const double> target, std::span<const std::vector<double>> covariates,
                      std::span<const SmoothSpec> specs, bool use_lags = true) {
    if (covariates.size() != specs.size()) throw std::invalid_argument("fit_gam: specs/covariates mismatch");
    const std::size_t n_all = target.size();
    const std::size_t skip = use_lags ? 2 : 0;
    if (n_all <= skip) throw std::invalid_argument("fit_gam: insufficient rows");
    const auto n = static_cast<Eigen::Index>(n_all - skip);
    int total_df = 0;
    for (const auto& s : specs) total_df += s.df;
    if (n <= total_df + 3) throw std::invalid_argument("fit_gam: insufficient rows for requested df");

    GamFit fit;
    fit.use_lags = use_lags;
    Eigen::Index p = 1 + (use_lags ? 2 : 0) + total_df;
    Eigen::MatrixXd X(n, p);
    X.col(0).setOnes();
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = target[static_cast<std::size_t>(i) + skip];
    Eigen::Index col = 1;
    if (use_lags) {
        for (Eigen::Index i = 0; i < n; ++i) {
            X(i, 1) = target[static_cast<std::size_t>(i) + skip - 1];
            X(i, 2) = target[static_cast<std::size_t>(i) + skip - 2];
        }
        col = 3;
    }
    for (std::size_t j = 0; j < specs.size(); ++j) {
        if (covariates[j].size() != n_all) throw std::invalid_argument("fit_gam: covariate length mismatch");
        Smooth sm;
        sm.spec = specs[j];
        sm.train_values.assign(covariates[j].begin() + static_cast<std::ptrdiff_t>(skip), covariates[j].end());
        sm.basis = spline::NaturalSplineBasis(sm.train_values, specs[j].df);
        sm.first_column = col;
        const auto [mn, mx] = std::minmax_element(sm.train_values.begin(), sm.train_values.end());
        sm.train_min = *mn;
        sm.train_max = *mx;
        X.middleCols(col, specs[j].df) = sm.basis.evaluate(sm.train_values);
        col += specs[j].df;
        fit.smooths.push_back(std::move(sm));
    }

    const auto ls = detail::least_squares(X, y);
    if (ls.rank < p) throw FitError("fit_gam: rank-deficient design");
    fit.coefficients = ls.coef;
    fit.intercept = ls.coef[0];
    if (use_lags) fit.lag_coeffs = {ls.coef[1], ls.coef[2]};
    for (auto& sm : fit.smooths) {
        const Eigen::VectorXd c = ls.coef.segment(sm.first_column, sm.spec.df);
        sm.coefficients.assign(c.data(), c.data() + c.size());
    }
    fit.rss = ls.rss;
    fit.n = static_cast<int>(n);
    fit.design_rank = static_cast<int>(ls.rank);
    if (!(fit.rss > 0.0)) throw FitError("fit_gam: zero residual variance");
    fit.sigma2 = fit.rss / static_cast<double>(n - ls.rank);
    fit.log_likelihood = detail::gaussian_log_likelihood(fit.rss, fit.n);
    const int k = fit.design_rank + 1;
    fit.aicc = fit.n > k + 1 ? arima::aicc(fit.log_likelihood, k, fit.n) : std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd gram = X.transpose() * X;
    fit.xtx_inverse = gram.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.design = std::move(X);
    fit.response = std::move(y);
    return fit;
}

inline GamFit fit_gam(const TimeSeriesFrame& frame, std::string_view target, std::span<const SmoothSpec> specs,
                      bool use_lags = true) {
    std::vector<std::vector<double>> cols;
    for (const auto& s : specs) {
        auto c = frame.column(s.covariate);
        cols.emplace_back(c.begin(), c.end());
    }
    GamFit fit = fit_gam(frame.column(target), cols, specs, use_lags);
    fit.target = std::string(target);
    return fit;
}

struct GamForecast {
    double mean = 0.0;
    double leverage = 0.0;
    double prediction_half_width = 0.0;
    double confidence_half_width = 0.0;
    bool extrapolated = false; ///< some covariate lies far outside its training range

    ForecastPoint point(Band band = Band::Prediction) const {
        const double h = band == Band::Prediction ? prediction_half_width : confidence_half_width;
        return ForecastPoint{mean, mean - h, mean + h, ModelTag::Gam};
    }
};

/// Design row for a new observation.
inline Eigen::RowVectorXd design_row(const GamFit& fit, std::span<const double> covariates, double y_lag1,
                                     double y_lag2) {
    if (covariates.size() != fit.smooths.size())
        throw std::invalid_argument("gam forecast: expected " + std::to_string(fit.smooths.size()) + " covariates");
    Eigen::RowVectorXd row(fit.design.cols());
    row[0] = 1.0;
    if (fit.use_lags) {
        row[1] = y_lag1;
        row[2] = y_lag2;
    }
    for (std::size_t j = 0; j < fit.smooths.size(); ++j) {
        const auto& sm = fit.smooths[j];
        row.segment(sm.first_column, sm.spec.df) = sm.basis.evaluate(covariates[j]);
    }
    return row;
}

/// One-step forecast. The extrapolation flag is raised when a covariate
/// falls outside a window three times the width of its training range,
/// centred on that range.
inline GamForecast forecast_detail(const GamFit& fit, std::span<const double> covariates, double y_lag1 = 0.0,
                                   double y_lag2 = 0.0) {
    const Eigen::RowVectorXd row = design_row(fit, covariates, y_lag1, y_lag2);
    GamForecast out;
    out.mean = row.dot(fit.coefficients);
    out.leverage = (row * fit.xtx_inverse * row.transpose())(0, 0);
    out.prediction_half_width = kZ975 * std::sqrt(fit.sigma2 * (1.0 + out.leverage));
    out.confidence_half_width = kZ975 * std::sqrt(fit.sigma2 * std::max(0.0, out.leverage));
    for (std::size_t j = 0; j < fit.smooths.size(); ++j) {
        const auto& sm = fit.smooths[j];
        const double width = sm.train_max - sm.train_min;
        if (covariates[j] < sm.train_min - width || covariates[j] > sm.train_max + width) out.extrapolated = true;
    }
    return out;
}

inline ForecastPoint forecast_one_step(const GamFit& fit, std::span<const double> covariates, double y_lag1 = 0.0,
                                       double y_lag2 = 0.0, Band band = Band::Prediction) {
    return forecast_detail(fit, covariates, y_lag1, y_lag2).point(band);
}

// ---------------------------------------------------------------------------
// significance

struct TermSignificance {
    std::string covariate;
    int df = 0;
    double f_linear = 0.0, p_linear = 1.0;
    double f_nonparametric = std::numeric_limits<double>::quiet_NaN();
    double p_nonparametric = std::numeric_limits<double>::quiet_NaN(); ///< undefined for df = 1
};

/// Nested-model F tests for one covariate: the linear column against
/// dropping the covariate, and the full smooth against the linear column.
inline TermSignificance term_significance(const GamFit& fit, std::string_view covariate) {
    const Smooth* sm = fit.find(covariate);
    if (!sm) throw std::invalid_argument("term_significance: covariate not in fit: " + std::string(covariate));
    const Eigen::Index p = fit.design.cols(), n = fit.design.rows();
    const Eigen::Index b0 = sm->first_column, df = sm->spec.df;

    Eigen::MatrixXd without(n, p - df);
    without.leftCols(b0) = fit.design.leftCols(b0);
    without.rightCols(p - b0 - df) = fit.design.rightCols(p - b0 - df);
    Eigen::MatrixXd linear(n, p - df + 1);
    linear.leftCols(p - df) = without;
    const double mean_x = stats::mean(sm->train_values);
    for (Eigen::Index i = 0; i < n; ++i) linear(i, p - df) = sm->train_values[static_cast<std::size_t>(i)] - mean_x;

    const double rss_full = fit.rss;
    const double rss_linear = detail::least_squares(linear, fit.response).rss;
    const double rss_without = detail::least_squares(without, fit.response).rss;
    const double dof_resid = static_cast<double>(n - fit.design_rank);
    const double scale = rss_full / dof_resid;

    TermSignificance out;
    out.covariate = std::string(covariate);
    out.df = static_cast<int>(df);
    out.f_linear = std::max(0.0, rss_without - rss_linear) / scale;
    out.p_linear = stats::f_sf(out.f_linear, 1.0, dof_resid);
    if (df > 1) {
        out.f_nonparametric = std::max(0.0, rss_linear - rss_full) / static_cast<double>(df - 1) / scale;
        out.p_nonparametric = stats::f_sf(out.f_nonparametric, static_cast<double>(df - 1), dof_resid);
    }
    return out;
}

// ---------------------------------------------------------------------------
// selection

struct GamCandidate {
    std::vector<SmoothSpec> specs;
    double aicc = std::numeric_limits<double>::infinity();
};

struct GamSelection {
    GamFit best;
    std::vector<GamCandidate> trace; ///< every evaluated configuration in search order
};

/// Per covariate, picks df from {1, 4, 6, 12} by AICc with the others held
/// at df = 4; then drops covariates one at a time while AICc improves.
inline GamSelection select_best_gam(const TimeSeriesFrame& frame, std::string_view target,
                                    std::span<const std::string> candidates) {
    GamSelection sel;
    const double row_cap = static_cast<double>(frame.size() - 2) / 10.0;
    auto try_fit = [&](const std::vector<SmoothSpec>& specs) -> std::optional<GamFit> {
        GamCandidate cand{specs, std::numeric_limits<double>::infinity()};
        std::optional<GamFit> out;
        try {
            out = fit_gam(frame, target, specs, true);
            cand.aicc = out->aicc;
        } catch (const std::invalid_argument&) {
        } catch (const FitError&) {
        }
        sel.trace.push_back(std::move(cand));
        return out;
    };

    std::vector<SmoothSpec> chosen;
    for (const auto& c : candidates) chosen.push_back({c, 4});
    std::vector<SmoothSpec> base = chosen;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        double best_aicc = std::numeric_limits<double>::infinity();
        int best_df = 4;
        for (int df : kCandidateDf) {
            if (df > 1 && df >= row_cap) continue;
            auto specs = base;
            specs[j].df = df;
            if (auto f = try_fit(specs); f && f->aicc < best_aicc - 1e-9) {
                best_aicc = f->aicc;
                best_df = df;
            }
        }
        chosen[j].df = best_df;
    }

    std::optional<GamFit> current = try_fit(chosen);
    for (;;) {
        std::optional<GamFit> best_drop;
        std::vector<SmoothSpec> best_specs;
        for (std::size_t j = 0; j < chosen.size(); ++j) {
            auto specs = chosen;
            specs.erase(specs.begin() + static_cast<std::ptrdiff_t>(j));
            auto f = try_fit(specs);
            if (f && (!best_drop || f->aicc < best_drop->aicc)) {
                best_drop = std::move(f);
                best_specs = specs;
            }
        }
        if (best_drop && (!current || best_drop->aicc < current->aicc - 1e-9)) {
            current = std::move(best_drop);
            chosen = std::move(best_specs);
            continue;
        }
        break;
    }
    if (!current) throw FitError("select_best_gam: every candidate fit failed");
    sel.best = std::move(*current);
    return sel;
}

inline nlohmann::json to_json(const GamFit& fit) {
    nlohmann::json j;
    j["intercept"] = fit.intercept;
    j["lag_coefficients"] = fit.lag_coeffs;
    j["aicc"] = fit.aicc;
    j["log_likelihood"] = fit.log_likelihood;
    j["sigma2"] = fit.sigma2;
    j["n"] = fit.n;
    j["design_rank"] = fit.design_rank;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& sm : fit.smooths) {
        const auto sig = term_significance(fit, sm.spec.covariate);
        nlohmann::json t{{"covariate", sm.spec.covariate},
                         {"df", sm.spec.df},
                         {"knots", sm.basis.knots()},
                         {"coefficients", sm.coefficients},
                         {"F_linear", sig.f_linear},
                         {"p_linear", sig.p_linear}};
        if (sm.spec.df > 1) {
            t["F_nonparametric"] = sig.f_nonparametric;
            t["p_nonparametric"] = sig.p_nonparametric;
        } else {
            t["F_nonparametric"] = nullptr;
            t["p_nonparametric"] = nullptr;
        }
        terms.push_back(std::move(t));
    }
    j["terms"] = std::move(terms);
    return j;
}

} // namespace turbid::gam

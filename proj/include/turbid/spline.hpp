#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "turbid/stats.hpp"

namespace turbid::spline {

/// Probability of the i-th interior knot (0-based): the dyadic van der
/// Corput sequence 1/2, 1/4, 3/4, 1/8, 5/8, 3/8, 7/8, ...
/// Taking the first df-1 terms gives knot sets that are nested in df, so
/// the spline spaces (and therefore in-sample fits) are nested as well.
inline double interior_knot_probability(std::size_t i) {
    std::size_t k = i + 1;
    double p = 0.0, scale = 0.5;
    while (k > 0) {
        if (k & 1u) p += scale;
        k >>= 1u;
        scale *= 0.5;
    }
    return p;
}

/// Natural cubic spline basis with `df` columns, centred on the training
/// data. df = 1 reduces to the centred linear term. Outside the boundary
/// knots each basis function is linear.
class NaturalSplineBasis {
public:
    NaturalSplineBasis() = default;

    /// Builds knots from `x` (quantiles of its distinct values) unless
    /// `knots` is given as the full sorted list including both boundaries.
    NaturalSplineBasis(std::span<const double> x, int df, std::optional<std::vector<double>> knots = std::nullopt)
        : df_(df) {
        if (df < 1) throw std::invalid_argument("spline basis: df must be >= 1");
        std::vector<double> distinct(x.begin(), x.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        if (distinct.size() < static_cast<std::size_t>(std::max(df, 2)))
            throw std::invalid_argument("spline basis: fewer distinct values than df");
        if (knots) {
            if (knots->size() != static_cast<std::size_t>(df) + 1 || !std::is_sorted(knots->begin(), knots->end()))
                throw std::invalid_argument("spline basis: need df + 1 sorted knots");
            knots_ = *knots;
        } else {
            knots_.push_back(distinct.front());
            for (int i = 0; i + 1 < df; ++i) knots_.push_back(stats::quantile(distinct, interior_knot_probability(static_cast<std::size_t>(i))));
            knots_.push_back(distinct.back());
            std::sort(knots_.begin(), knots_.end());
        }
        for (std::size_t i = 1; i < knots_.size(); ++i)
            if (!(knots_[i] > knots_[i - 1])) throw std::invalid_argument("spline basis: knots must be distinct");
        centre_ = Eigen::RowVectorXd::Zero(df_);
        const Eigen::MatrixXd raw = raw_basis(x);
        centre_ = raw.colwise().mean();
    }

    int df() const { return df_; }
    const std::vector<double>& knots() const { return knots_; }
    double lower() const { return knots_.front(); }
    double upper() const { return knots_.back(); }

    Eigen::MatrixXd evaluate(std::span<const double> x) const {
        Eigen::MatrixXd b = raw_basis(x);
        b.rowwise() -= centre_;
        return b;
    }

    Eigen::RowVectorXd evaluate(double x) const { return evaluate(std::span<const double>(&x, 1)).row(0); }

private:
    Eigen::MatrixXd raw_basis(std::span<const double> x) const {
        const auto n = static_cast<Eigen::Index>(x.size());
        const std::size_t K = knots_.size();
        const double lo = knots_.front(), width = knots_.back() - knots_.front();
        std::vector<double> s(K);
        for (std::size_t k = 0; k < K; ++k) s[k] = (knots_[k] - lo) / width;
        auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
        auto dk = [&](double u, std::size_t k) { return (cube(u - s[k]) - cube(u - s[K - 1])) / (s[K - 1] - s[k]); };
        Eigen::MatrixXd b(n, df_);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = (x[static_cast<std::size_t>(i)] - lo) / width;
            b(i, 0) = u;
            const double last = dk(u, K - 2);
            for (std::size_t k = 0; k + 2 < K; ++k) b(i, static_cast<Eigen::Index>(k) + 1) = dk(u, k) - last;
        }
        return b;
    }

    int df_ = 1;
    std::vector<double> knots_;
    Eigen::RowVectorXd centre_;
};

/// Functional form of NaturalSplineBasis construction and evaluation.
inline Eigen::MatrixXd spline_basis(std::span<const double> x, int df,
                                    std::optional<std::vector<double>> knots = std::nullopt) {
    return NaturalSplineBasis(x, df, std::move(knots)).evaluate(x);
}

} // namespace turbid::spline

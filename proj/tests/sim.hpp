#pragma once

// Small simulation helpers shared by the test suites.

#include <random>
#include <vector>

namespace turbid::testing {

inline std::vector<double> white_noise(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> out(n);
    for (double& v : out) v = z(rng);
    return out;
}

/// AR(1) with a burn-in so the start is close to stationary.
inline std::vector<double> ar1(std::size_t n, double phi, std::mt19937_64& rng, double sd = 1.0) {
    std::normal_distribution<double> z(0.0, sd);
    double x = 0.0;
    for (int i = 0; i < 200; ++i) x = phi * x + z(rng);
    std::vector<double> out(n);
    for (double& v : out) {
        x = phi * x + z(rng);
        v = x;
    }
    return out;
}

/// Least squares by normal equations and Gauss-Jordan elimination with
/// partial pivoting. Deliberately independent of Eigen.
inline std::vector<double> ols_normal_equations(const std::vector<std::vector<double>>& cols,
                                                const std::vector<double>& y) {
    const std::size_t k = cols.size();
    std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t t = 0; t < y.size(); ++t) a[i][j] += cols[i][t] * cols[j][t];
        for (std::size_t t = 0; t < y.size(); ++t) a[i][k] += cols[i][t] * y[t];
    }
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < k; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = 0; r < k; ++r) {
            if (r == c) continue;
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
        }
    }
    std::vector<double> beta(k);
    for (std::size_t i = 0; i < k; ++i) beta[i] = a[i][k] / a[i][i];
    return beta;
}

} // namespace turbid::testing

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace turbid::optim {

struct BfgsOptions {
    int max_iterations = 500;
    double relative_tolerance = 1e-8; ///< stop when |f_k - f_{k+1}| <= tol * (|f_k| + tol)
    double gradient_step = 1e-6;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    std::vector<double> history; ///< objective after each accepted step, starting at x0
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient.
inline Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x, double step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = step * std::max(1.0, std::abs(x[i]));
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// Quasi-Newton minimization with BFGS inverse-Hessian updates, numeric
/// gradients and a backtracking Armijo line search. Accepted steps never
/// increase the objective. Non-finite objective values are treated as +inf.
inline BfgsResult minimize_bfgs(const Objective& raw, Eigen::VectorXd x0, const BfgsOptions& opt = {}) {
    const Objective f = [&raw](const Eigen::VectorXd& x) {
        const double v = raw(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };
    BfgsResult res;
    const Eigen::Index n = x0.size();
    res.x = std::move(x0);
    res.value = f(res.x);
    res.history.push_back(res.value);
    if (n == 0) {
        res.converged = true;
        return res;
    }
    if (!std::isfinite(res.value)) return res;

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = numeric_gradient(f, res.x, opt.gradient_step);
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        res.iterations = iter + 1;
        if (!g.allFinite()) break;
        Eigen::VectorXd dir = -H * g;
        double slope = g.dot(dir);
        if (!(slope < 0.0)) {
            H.setIdentity();
            dir = -g;
            slope = -g.squaredNorm();
        }
        if (slope == 0.0) {
            res.converged = true;
            break;
        }
        double step = 1.0;
        // Keep the first trial step bounded in parameter space.
        if (const double len = dir.norm(); len > 10.0) step = 10.0 / len;
        Eigen::VectorXd trial;
        double trial_value = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            trial = res.x + step * dir;
            trial_value = f(trial);
            if (trial_value <= res.value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No descent along the quasi-Newton direction: numerically stationary.
            res.converged = true;
            break;
        }
        const double previous = res.value;
        const Eigen::VectorXd s = trial - res.x;
        res.x = trial;
        res.value = trial_value;
        res.history.push_back(res.value);
        const Eigen::VectorXd g_new = numeric_gradient(f, res.x, opt.gradient_step);
        if (std::abs(previous - res.value) <= opt.relative_tolerance * (std::abs(previous) + opt.relative_tolerance)) {
            res.converged = true;
            break;
        }
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        g = g_new;
    }
    return res;
}

/// Central-difference Hessian of a scalar function.
inline Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double step = 1e-4) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd H(n, n);
    Eigen::VectorXd p = x;
    const double f0 = f(x);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = step * std::max(1.0, std::abs(x[i]));
        p[i] = x[i] + hi;
        const double fp = f(p);
        p[i] = x[i] - hi;
        const double fm = f(p);
        p[i] = x[i];
        H(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double hj = step * std::max(1.0, std::abs(x[j]));
            p[i] = x[i] + hi; p[j] = x[j] + hj;
            const double fpp = f(p);
            p[j] = x[j] - hj;
            const double fpm = f(p);
            p[i] = x[i] - hi;
            const double fmm = f(p);
            p[j] = x[j] + hj;
            const double fmp = f(p);
            p[i] = x[i]; p[j] = x[j];
            H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return H;
}

} // namespace turbid::optim

#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "sim.hpp"
#include "turbid/arima.hpp"

using namespace turbid;
using namespace turbid::arima;
namespace tt = turbid::testing;

TEST(Aicc, ClosedForm) {
    EXPECT_NEAR(aicc(-100.0, 3, 50), 206.0 + 24.0 / 46.0, 1e-12);
    EXPECT_NEAR(aicc(-100.0, 3, 50), 206.5217, 1e-4);
    // Large n approaches AIC.
    EXPECT_NEAR(aicc(-100.0, 3, 10'000'000), 206.0, 1e-3);
    EXPECT_THROW(aicc(-100.0, 49, 50), std::invalid_argument);
    EXPECT_THROW(aicc(-100.0, 50, 50), std::invalid_argument);
}

TEST(Aicc, MonotoneInLikelihoodAndParameters) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ul(-500, 0);
    std::uniform_int_distribution<int> uk(1, 20);
    for (int i = 0; i < 200; ++i) {
        const double l = ul(rng);
        const int k = uk(rng), n = k + 2 + uk(rng);
        EXPECT_LT(aicc(l + 1.0, k, n), aicc(l, k, n));
        EXPECT_GT(aicc(l, k + 1, n + 1), aicc(l, k, n + 1));
    }
}

TEST(PacfTransform, RoundTripAndStationarity) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> raw(1 + rep % 5);
        for (double& v : raw) v = u(rng);
        const auto ar = detail::unconstrained_to_ar(raw);
        EXPECT_LT(detail::max_inverse_root(ar), 1.0);
        const auto back = detail::ar_to_pacf(ar);
        ASSERT_TRUE(back.has_value());
        for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR((*back)[i], std::tanh(raw[i]), 1e-9);
    }
    EXPECT_FALSE(detail::ar_to_pacf(std::vector<double>{1.2}).has_value());
}

TEST(StateSpace, StationaryCovarianceOfAr1) {
    const std::vector<double> phi{0.6}, theta{};
    detail::ArmaStateSpace ss(phi, theta);
    EXPECT_NEAR(ss.initial_cov(0, 0), 1.0 / (1.0 - 0.36), 1e-12);
}

TEST(FitDynamicRegression, WhiteNoiseErrorsEqualOls) {
    std::mt19937_64 rng(3);
    const std::size_t n = 150;
    auto x1 = tt::white_noise(n, rng), x2 = tt::white_noise(n, rng), e = tt::white_noise(n, rng, 0.5);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = 1.0 + 2.0 * x1[t] - 0.7 * x2[t] + e[t];
    const std::vector<std::vector<double>> cols{x1, x2};
    const std::vector<std::string> names{"x1", "x2"};
    const auto fit = fit_dynamic_regression(y, cols, names, {0, 0, 0});
    const auto ols = tt::ols_normal_equations({std::vector<double>(n, 1.0), x1, x2}, y);
    ASSERT_EQ(fit.beta.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(fit.beta[i], ols[i], 1e-6);
    EXPECT_NEAR(fit.coefficient("x1"), ols[1], 1e-6);
}

TEST(FitDynamicRegression, RecoversRegressionWithAr1Errors) {
    std::mt19937_64 rng(4);
    const std::size_t n = 500;
    const auto x = tt::white_noise(n, rng);
    const auto eta = tt::ar1(n, 0.5, rng);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = 2.0 + 3.0 * x[t] + eta[t];
    const std::vector<std::vector<double>> cols{x};
    const std::vector<std::string> names{"x"};
    const auto fit = fit_dynamic_regression(y, cols, names, {1, 0, 0});
    EXPECT_LT(std::abs(fit.beta[0] - 2.0), 3.0 * fit.beta_se[0]);
    EXPECT_LT(std::abs(fit.beta[1] - 3.0), 3.0 * fit.beta_se[1]);
    EXPECT_LT(std::abs(fit.phi[0] - 0.5), 3.0 * fit.phi_se[0]);
    EXPECT_GT(fit.phi_se[0], 0.01);
    EXPECT_LT(fit.phi_se[0], 0.1);
}

TEST(FitDynamicRegression, ConstantCovariateIsSingular) {
    std::mt19937_64 rng(5);
    const auto y = tt::white_noise(100, rng);
    const std::vector<std::vector<double>> cols{std::vector<double>(100, 4.0)};
    const std::vector<std::string> names{"c"};
    EXPECT_THROW(fit_dynamic_regression(y, cols, names, {0, 0, 0}), FitError);
    EXPECT_THROW(fit_dynamic_regression(y, cols, names, {0, 1, 0}), FitError);
}

TEST(FitDynamicRegression, RejectsTooFewObservations) {
    std::mt19937_64 rng(5);
    const auto y = tt::white_noise(40, rng);
    EXPECT_THROW(fit_dynamic_regression(y, {}, {}, {2, 0, 2}), std::invalid_argument);
    EXPECT_THROW(fit_dynamic_regression(y, {}, {}, {6, 0, 0}), std::invalid_argument);
}

TEST(FitDynamicRegression, PropertiesAcrossOrders) {
    std::mt19937_64 rng(6);
    const std::size_t n = 300;
    const auto x = tt::white_noise(n, rng);
    auto eta = tt::ar1(n, 0.7, rng);
    std::vector<double> y(n);
    double level = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        level += 0.3 * eta[t];
        y[t] = 5.0 + 1.5 * x[t] + eta[t] + level;
    }
    const std::vector<std::vector<double>> cols{x};
    const std::vector<std::string> names{"x"};
    for (ArimaOrder o : {ArimaOrder{1, 0, 1}, ArimaOrder{2, 1, 1}, ArimaOrder{0, 1, 2}, ArimaOrder{3, 1, 2}, ArimaOrder{1, 2, 1}}) {
        DynRegFit fit;
        try {
            fit = fit_dynamic_regression(y, cols, names, o);
        } catch (const FitError&) {
            continue; // boundary optimum; rejected by design
        }
        EXPECT_GT(detail::min_root_modulus(fit.phi), 1.0 + 1e-6) << to_string(o);
        std::vector<double> neg(fit.theta);
        for (double& v : neg) v = -v;
        EXPECT_GT(detail::min_root_modulus(neg), 1.0 + 1e-6) << to_string(o);
        EXPECT_GT(fit.sigma2, 0.0);
        EXPECT_EQ(fit.residuals.size(), n - static_cast<std::size_t>(o.d));
        for (std::size_t i = 1; i < fit.optimizer_history.size(); ++i)
            EXPECT_LE(fit.optimizer_history[i], fit.optimizer_history[i - 1]) << to_string(o);
    }
}

TEST(Forecast, WhiteNoiseCase) {
    std::mt19937_64 rng(7);
    const std::size_t n = 120;
    const auto x = tt::white_noise(n, rng);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = 4.0 - x[t] + 0.3 * tt::white_noise(1, rng)[0];
    const std::vector<std::vector<double>> cols{x};
    const std::vector<std::string> names{"x"};
    const auto fit = fit_dynamic_regression(y, cols, names, {0, 0, 0});
    const std::vector<double> next{0.8};
    const auto fc = forecast_one_step(fit, next);
    EXPECT_NEAR(fc.mean, fit.beta[0] + fit.beta[1] * 0.8, 1e-12);
    EXPECT_NEAR(*fc.upper95 - fc.mean, kZ975 * std::sqrt(fit.sigma2), 1e-12);
    EXPECT_NEAR(fc.mean - *fc.lower95, kZ975 * std::sqrt(fit.sigma2), 1e-12);
    EXPECT_THROW(forecast_one_step(fit, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Forecast, Ar1MatchesHandRecursion) {
    std::mt19937_64 rng(8);
    const std::size_t n = 200;
    const auto x = tt::white_noise(n, rng);
    const auto eta = tt::ar1(n, 0.6, rng);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = 1.0 + 2.0 * x[t] + eta[t];
    const std::vector<std::vector<double>> cols{x};
    const std::vector<std::string> names{"x"};
    const auto fit = fit_dynamic_regression(y, cols, names, {1, 0, 0});
    const double xn = -0.4;
    const double last_resid = y[n - 1] - fit.beta[0] - fit.beta[1] * x[n - 1];
    const double expected = fit.beta[0] + fit.beta[1] * xn + fit.phi[0] * last_resid;
    const auto fc = forecast_one_step(fit, std::vector<double>{xn});
    EXPECT_NEAR(fc.mean, expected, 1e-9);
    EXPECT_NEAR(*fc.upper95 - fc.mean, kZ975 * std::sqrt(fit.sigma2), 1e-9);
}

TEST(Forecast, DifferencedModelUndifferences) {
    // ARIMA(0,1,0) with a regressor: y_{n+1} = y_n + b (x_{n+1} - x_n).
    std::mt19937_64 rng(9);
    const std::size_t n = 150;
    const auto x = tt::white_noise(n, rng);
    std::vector<double> y(n);
    double walk = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        walk += tt::white_noise(1, rng)[0];
        y[t] = walk + 1.7 * x[t];
    }
    const std::vector<std::vector<double>> cols{x};
    const std::vector<std::string> names{"x"};
    const auto fit = fit_dynamic_regression(y, cols, names, {0, 1, 0});
    EXPECT_FALSE(fit.has_intercept);
    const auto fc = forecast_one_step(fit, std::vector<double>{0.25});
    EXPECT_NEAR(fc.mean, y[n - 1] + fit.beta[0] * (0.25 - x[n - 1]), 1e-9);
}

TEST(LjungBox, ErrorsAndScaleInvariance) {
    std::mt19937_64 rng(10);
    auto r = tt::white_noise(200, rng);
    EXPECT_THROW(ljung_box(r, 5, 5), std::invalid_argument);
    const auto a = ljung_box(r, 10, 0);
    for (double& v : r) v *= 37.5;
    const auto b = ljung_box(r, 10, 0);
    EXPECT_NEAR(a.statistic, b.statistic, 1e-9);
    EXPECT_EQ(a.dof, 10);
}

TEST(LjungBox, DetectsStrongAutocorrelation) {
    std::mt19937_64 rng(11);
    const auto x = tt::ar1(200, 0.9, rng);
    EXPECT_LT(ljung_box(x, 10, 0).p_value, 0.01);
}

TEST(LjungBox, SizeOnWhiteNoise) {
    std::mt19937_64 rng(12);
    int rejections = 0;
    const int reps = 2000;
    for (int i = 0; i < reps; ++i) rejections += ljung_box(tt::white_noise(200, rng), 10, 0).p_value < 0.05;
    const double rate = double(rejections) / reps;
    EXPECT_GT(rate, 0.035);
    EXPECT_LT(rate, 0.065);
}

TEST(Selection, PicksTheTrueCovariate) {
    // AICc admits a pure-noise regressor with probability ~0.16 per
    // comparison, so inclusion frequencies are checked over replicates.
    std::mt19937_64 rng(13);
    const std::size_t n = 200;
    std::vector<Date> dates;
    for (std::size_t i = 0; i < n; ++i) dates.push_back(make_date(2013, 1, 1) + std::chrono::days{static_cast<int>(i)});
    const std::vector<std::string> names{"x1", "x2", "x3", "x4"};
    int exact = 0;
    std::map<std::string, int> included;
    const int reps = 10;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<std::vector<double>> cols;
        for (int j = 0; j < 4; ++j) cols.push_back(tt::white_noise(n, rng));
        const auto eta = tt::ar1(n, 0.5, rng);
        std::vector<double> y(n);
        for (std::size_t t = 0; t < n; ++t) y[t] = 10.0 + 2.5 * cols[0][t] + eta[t];
        std::vector<std::vector<double>> frame_cols{y};
        for (auto& c : cols) frame_cols.push_back(c);
        TimeSeriesFrame frame(dates, {"y", "x1", "x2", "x3", "x4"}, frame_cols);
        const auto sel = select_best_dynreg(frame, "y", names);
        ASSERT_FALSE(sel.best.covariates.empty());
        EXPECT_EQ(sel.best.covariates.front(), "x1");
        exact += sel.best.covariates == std::vector<std::string>{"x1"};
        for (const auto& c : sel.best.covariates) ++included[c];
        if (rep == 0) {
            EXPECT_GE(sel.leaderboard.size(), 16u);
            for (std::size_t i = 1; i < sel.leaderboard.size(); ++i)
                EXPECT_LE(sel.leaderboard[i - 1].aicc, sel.leaderboard[i].aicc + 1e-9);
            const auto j = to_json(sel);
            EXPECT_TRUE(j.contains("ljung_box"));
            EXPECT_EQ(j["covariates"].size(), sel.best.covariates.size());
        }
    }
    EXPECT_EQ(included["x1"], reps);
    for (const char* noise : {"x2", "x3", "x4"}) EXPECT_LE(included[noise], reps / 2) << noise;
    EXPECT_GE(exact, 1);
}

TEST(Selection, WhiteNoiseSelectsEmptyModel) {
    std::mt19937_64 rng(14);
    const std::size_t n = 200;
    std::vector<std::vector<double>> cols{tt::white_noise(n, rng)};
    for (int j = 0; j < 3; ++j) cols.push_back(tt::white_noise(n, rng));
    std::vector<Date> dates;
    for (std::size_t i = 0; i < n; ++i) dates.push_back(make_date(2013, 1, 1) + std::chrono::days{static_cast<int>(i)});
    TimeSeriesFrame frame(dates, {"y", "a", "b", "c"}, cols);
    const std::vector<std::string> names{"a", "b", "c"};
    const auto sel = select_best_dynreg(frame, "y", names);
    EXPECT_TRUE(sel.best.covariates.empty());
    EXPECT_EQ(sel.best.order, (ArimaOrder{0, 0, 0}));
}

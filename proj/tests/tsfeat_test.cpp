#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "sim.hpp"
#include "turbid/tsfeat.hpp"

using namespace turbid;
using namespace turbid::tsfeat;
namespace tt = turbid::testing;

namespace {
std::vector<double> line(std::size_t n, double a, double b) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = a + b * static_cast<double>(i);
    return v;
}
} // namespace

TEST(Decompose, LineIsReproduced) {
    const auto y = line(30, 4.0, 2.5);
    const auto d = decompose_trend(y);
    for (double r : d.remainder) EXPECT_LT(std::abs(r), 1e-8 * 2.5);
}

TEST(Decompose, ConstantWindow) {
    const std::vector<double> y(30, 7.0);
    const auto d = decompose_trend(y);
    for (std::size_t i = 0; i < 30; ++i) {
        EXPECT_NEAR(d.trend[i], 7.0, 1e-12);
        EXPECT_NEAR(d.remainder[i], 0.0, 1e-12);
    }
}

TEST(Decompose, OutlierDominatesRemainder) {
    for (std::size_t at : {3u, 15u, 27u}) {
        auto y = line(30, 1.0, 0.4);
        y[at] += 10.0;
        const auto d = decompose_trend(y);
        const auto it = std::max_element(d.remainder.begin(), d.remainder.end(),
                                         [](double a, double b) { return std::abs(a) < std::abs(b); });
        EXPECT_EQ(static_cast<std::size_t>(it - d.remainder.begin()), at);
    }
    EXPECT_THROW(decompose_trend(std::vector<double>(9, 1.0)), std::invalid_argument);
}

TEST(Loess, MatchesDirectWeightedFit) {
    // Oracle: explicit weighted normal equations at one index.
    std::mt19937_64 rng(1);
    const auto y = tt::white_noise(20, rng);
    const auto fit = loess(y, 0.75, 2);
    const std::size_t i = 6, q = 15;
    std::vector<double> dist(20);
    for (std::size_t j = 0; j < 20; ++j) dist[j] = std::abs(double(j) - double(i));
    auto sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    const double h = sorted[q - 1] * (1 + 1e-10);
    std::vector<std::vector<double>> cols(3, std::vector<double>{});
    std::vector<double> resp;
    for (std::size_t j = 0; j < 20; ++j) {
        const double u = dist[j] / h;
        if (u >= 1) continue;
        const double w = std::sqrt(std::pow(1 - u * u * u, 3));
        cols[0].push_back(w);
        cols[1].push_back(w * double(j));
        cols[2].push_back(w * double(j) * double(j));
        resp.push_back(w * y[j]);
    }
    const auto beta = tt::ols_normal_equations(cols, resp);
    EXPECT_NEAR(fit[i], beta[0] + beta[1] * double(i) + beta[2] * double(i * i), 1e-9);
}

TEST(TrendFeatures, Line) {
    const auto y = line(30, 0.0, 1.0);
    const auto d = decompose_trend(y);
    const auto f = trend_features(d.trend, d.remainder);
    EXPECT_NEAR(f.trend_strength, 1.0, 1e-9);
    EXPECT_NEAR(f.curvature, 0.0, 1e-9);
    // linearity of t on orthonormal poly = ||t - tbar||
    double ss = 0.0;
    for (std::size_t i = 0; i < 30; ++i) ss += std::pow(double(i) - 14.5, 2);
    EXPECT_NEAR(f.linearity, std::sqrt(ss), 1e-8);
}

TEST(TrendFeatures, WhiteNoiseHasWeakTrend) {
    std::mt19937_64 rng(2);
    double total = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const auto y = tt::white_noise(30, rng);
        const auto d = decompose_trend(y);
        total += trend_features(d.trend, d.remainder).trend_strength;
    }
    EXPECT_LT(total / 200, 0.5);
}

TEST(TrendFeatures, SpikeOracle) {
    const auto t = line(12, 0, 1);
    EXPECT_EQ(trend_features(t, std::vector<double>(12, 3.0)).spike, 0.0);
    std::mt19937_64 rng(3);
    const auto r = tt::white_noise(15, rng);
    std::vector<double> loo;
    for (std::size_t i = 0; i < r.size(); ++i) {
        std::vector<double> rest;
        for (std::size_t j = 0; j < r.size(); ++j)
            if (j != i) rest.push_back(r[j]);
        loo.push_back(stats::variance(rest));
    }
    EXPECT_NEAR(trend_features(line(15, 0, 1), r).spike, stats::variance(loo), 1e-12);
    EXPECT_EQ(trend_features(std::vector<double>(12, 1.0), std::vector<double>(12, 0.0)).trend_strength, 0.0);
}

TEST(Entropy, WhiteNoiseIsFlat) {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 10; ++rep) EXPECT_GT(spectral_entropy(tt::white_noise(1000, rng)), 0.95);
}

TEST(Entropy, SinusoidIsConcentrated) {
    std::vector<double> y(1000);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = std::sin(2.0 * std::numbers::pi * 25.0 * double(t) / 1000.0);
    EXPECT_LT(spectral_entropy(y), 0.2);
    EXPECT_THROW(spectral_entropy(std::vector<double>{1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(spectral_entropy(std::vector<double>(30, 2.0)), std::invalid_argument);
}

TEST(Entropy, PeriodogramMatchesParseval) {
    std::mt19937_64 rng(5);
    const auto y = tt::white_noise(31, rng); // odd length: no Nyquist bin
    const auto p = periodogram(y);
    const double m = stats::mean(y);
    double ss = 0.0;
    for (double v : y) ss += (v - m) * (v - m);
    EXPECT_NEAR(2.0 * std::accumulate(p.begin(), p.end(), 0.0), ss, 1e-10);
}

TEST(Acf, AlternatingSeries) {
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) y[i] = i % 2 ? -1.0 : 1.0;
    const auto a = acf_feature_set(y, 0);
    EXPECT_NEAR(a.acf1, -29.0 / 30.0, 1e-12);
    EXPECT_FALSE(a.degenerate);
}

TEST(Acf, BartlettBand) {
    std::mt19937_64 rng(6);
    int inside = 0;
    for (int rep = 0; rep < 400; ++rep) inside += std::abs(acf_feature_set(tt::white_noise(1000, rng), 0).acf1) < 2.0 / std::sqrt(1000.0);
    EXPECT_GT(inside / 400.0, 0.92);
    EXPECT_LT(inside / 400.0, 0.99);
}

TEST(Acf, DegenerateDifference) {
    const auto y = line(30, 1.0, 0.7);
    const auto a = acf_feature_set(y, 1);
    EXPECT_TRUE(a.degenerate);
    EXPECT_EQ(a.acf1, 0.0);
    EXPECT_EQ(a.acf10, 0.0);
    EXPECT_THROW(acf_feature_set(std::vector<double>(13, 0.0), 2), std::invalid_argument);
    const auto fv = window_features(y);
    EXPECT_NE(std::find(fv.flags.begin(), fv.flags.end(), "diff1_degenerate"), fv.flags.end());
}

TEST(FeatureVector, RangesAndInvariances) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 100; ++rep) {
        const auto base = tt::ar1(30, 0.6, rng);
        const double c = std::exp(z(rng)), shift = 10.0 * z(rng);
        std::vector<double> scaled(30), shifted(30);
        for (std::size_t i = 0; i < 30; ++i) scaled[i] = c * base[i], shifted[i] = base[i] + shift;
        const auto f = window_features(base), fs = window_features(scaled), fh = window_features(shifted);
        EXPECT_GE(f.entropy, 0.0);
        EXPECT_LE(f.entropy, 1.0);
        EXPECT_GE(f.trend_strength, 0.0);
        EXPECT_LE(f.trend_strength, 1.0);
        EXPECT_LE(std::abs(f.x_acf1), 1.0);
        for (const auto& [a, b] : {std::pair{f.trend_strength, fs.trend_strength}, {f.entropy, fs.entropy},
                                   {f.x_acf1, fs.x_acf1}, {f.x_acf10, fs.x_acf10}, {f.diff2_acf10, fs.diff2_acf10}})
            EXPECT_NEAR(a, b, 1e-9);
        EXPECT_NEAR(fs.spike, std::pow(c, 4) * f.spike, 1e-9 * std::max(1.0, fs.spike));
        EXPECT_NEAR(fs.linearity, c * f.linearity, 1e-9 * std::max(1.0, std::abs(fs.linearity)));
        EXPECT_NEAR(fs.curvature, c * f.curvature, 1e-9 * std::max(1.0, std::abs(fs.curvature)));
        const auto va = f.values(), vh = fh.values();
        for (std::size_t k = 0; k < va.size(); ++k) EXPECT_NEAR(va[k], vh[k], 1e-9 * std::max(1.0, std::abs(va[k])));
    }
}

TEST(FeatureVector, WindowIndexing) {
    std::mt19937_64 rng(8);
    const auto y = tt::ar1(356, 0.5, rng);
    EXPECT_THROW(extract_feature_vector(y, 29), std::invalid_argument);
    const auto first = extract_feature_vector(y, 30);
    const auto again = window_features(std::span<const double>(y).subspan(0, 30));
    EXPECT_EQ(std::memcmp(first.values().data(), again.values().data(), sizeof(double) * FeatureVector::kSize), 0);

    std::vector<Date> dates;
    for (int i = 0; i < 356; ++i) dates.push_back(make_date(2013, 1, 1) + std::chrono::days{i});
    const TimeSeriesFrame frame(dates, {"turbidity"}, {y});
    std::vector<std::size_t> ts;
    for (std::size_t t = 200; t < 356; ++t) ts.push_back(t);
    const auto rows = extract_features(frame, "turbidity", ts);
    EXPECT_EQ(rows.size(), 156u);
    EXPECT_EQ(*rows.front().window_end, dates[199]);
    std::ostringstream os;
    write_feature_csv(os, rows);
    const std::string text = os.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 157);
}

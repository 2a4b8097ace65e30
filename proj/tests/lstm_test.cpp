#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "turbid/lstm.hpp"

using namespace turbid;
using namespace turbid::lstm;

namespace {

struct SineData {
    std::vector<double> y;
    std::vector<std::vector<double>> covs;
    std::vector<std::string> names{"s", "c"};
};

SineData sine(std::size_t n) {
    SineData d;
    d.covs.assign(2, {});
    for (std::size_t t = 0; t < n; ++t) {
        const double th = 2.0 * std::numbers::pi * static_cast<double>(t) / 40.0;
        d.y.push_back(10.0 + 5.0 * std::sin(th));
        d.covs[0].push_back(std::sin(th - 0.3));
        d.covs[1].push_back(std::cos(th - 0.3));
    }
    return d;
}

Network random_net(int d, int h, std::uint64_t seed) {
    Network net(d, h);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (Eigen::Index k = 0; k < net.size(); ++k) net.theta()[k] = u(rng);
    return net;
}

} // namespace

TEST(ScaleMinMax, Basics) {
    const std::vector<double> v{0, 5, 10};
    const auto s = scale_minmax(v);
    EXPECT_EQ(s.values, (std::vector<double>{0, 0.5, 1}));
    const std::vector<double> w{3.3, -1.7, 8.25, 1e3};
    const auto sw = scale_minmax(w);
    const auto back = unscale_minmax(sw.values, sw.bounds);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(back[i], w[i], 1e-12);
    const auto reuse = scale_minmax(std::vector<double>{20.0}, s.bounds);
    EXPECT_DOUBLE_EQ(reuse.values[0], 2.0);
    EXPECT_THROW(scale_minmax(std::vector<double>{2, 2, 2}), std::invalid_argument);
    EXPECT_THROW(scale_minmax(std::vector<double>{}), std::invalid_argument);
}

TEST(Forward, ZeroNetworkPredictsZero) {
    Network net(3, 4);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    EXPECT_EQ(lstm_forward(net, x).prediction, 0.0);
    EXPECT_THROW(lstm_forward(net, Eigen::MatrixXd::Zero(2, 2)), std::invalid_argument);
}

TEST(Forward, SaturatedGatesFreezeCell) {
    Network net = random_net(2, 3, 1);
    net.b().segment(0, 3).setConstant(-20.0); // input gate shut
    net.b().segment(3, 3).setConstant(20.0);  // forget gate open
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, 2) * 0.5;
    const auto fwd = lstm_forward(net, x);
    for (std::size_t t = 1; t < fwd.steps.size(); ++t)
        EXPECT_LT((fwd.steps[t].c - fwd.steps[t - 1].c).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Forward, ActivationsBounded) {
    Network net = random_net(3, 5, 2);
    net.theta() *= 4.0;
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 3) * 3.0;
    for (const auto& s : lstm_forward(net, x).steps) {
        EXPECT_LE(s.h.cwiseAbs().maxCoeff(), 1.0);
        for (const auto* g : {&s.i, &s.f, &s.o}) {
            EXPECT_GE(g->minCoeff(), 0.0);
            EXPECT_LE(g->maxCoeff(), 1.0);
        }
    }
}

TEST(Backward, MatchesCentralDifferences) {
    Network net = random_net(3, 2, 3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
    const double target = 0.37;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.size());
    sample_loss_gradient(net, x, target, grad);
    const double h = 1e-5;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < net.size(); ++k) {
        Network plus = net, minus = net;
        plus.theta()[k] += h;
        minus.theta()[k] -= h;
        const double lp = std::pow(lstm_forward(plus, x).prediction - target, 2);
        const double lm = std::pow(lstm_forward(minus, x).prediction - target, 2);
        const double numeric = (lp - lm) / (2 * h);
        const double denom = std::max({std::abs(numeric), std::abs(grad[k]), 1e-6});
        worst = std::max(worst, std::abs(numeric - grad[k]) / denom);
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(AdamOptimizer, FirstStepClosedForm) {
    Eigen::VectorXd theta(4), g(4);
    theta << 0.5, -1.0, 2.0, 0.0;
    g << 3.0, -0.01, 1e-4, -250.0;
    const Eigen::VectorXd start = theta;
    Adam adam(4, 1e-3, 0.9, 0.999, 1e-8);
    adam.step(theta, g);
    for (Eigen::Index k = 0; k < 4; ++k)
        EXPECT_NEAR(theta[k] - start[k], -1e-3 * g[k] / (std::abs(g[k]) + 1e-8), 1e-9);
}

TEST(Train, SineLossDropsAndPlateaus) {
    const auto d = sine(200);
    const auto st = train_lstm(d.y, d.covs, d.names, LstmParams{});
    ASSERT_EQ(st.epoch_loss.size(), 50u);
    EXPECT_LT(st.epoch_loss[49], 0.2 * st.epoch_loss[0]);
    EXPECT_LT(st.epoch_loss[9] - st.epoch_loss[49], 0.5 * (st.epoch_loss[0] - st.epoch_loss[49]));
}

TEST(Train, DeterministicForSeed) {
    const auto d = sine(60);
    LstmParams p;
    p.epochs = 5;
    const auto a = train_lstm(d.y, d.covs, d.names, p);
    const auto b = train_lstm(d.y, d.covs, d.names, p);
    ASSERT_EQ(a.net.size(), b.net.size());
    EXPECT_EQ(std::memcmp(a.net.theta().data(), b.net.theta().data(), sizeof(double) * a.net.size()), 0);
    p.seed = 7;
    const auto c = train_lstm(d.y, d.covs, d.names, p);
    EXPECT_NE(a.net.theta(), c.net.theta());
}

TEST(Train, Errors) {
    const auto d = sine(10);
    EXPECT_THROW(train_lstm(d.y, d.covs, d.names, LstmParams{}), std::invalid_argument);
    LstmParams bad;
    bad.units = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = {};
    bad.learning_rate = 1.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    LstmParams huge;
    huge.learning_rate = 0.999;
    huge.epochs = 3;
    auto big = sine(40);
    for (auto& v : big.y) v *= 1e300;
    EXPECT_NO_THROW(train_lstm(big.y, big.covs, big.names, huge)); // scaling keeps it finite
}

TEST(Predict, MemorizesConstant) {
    const auto d = sine(100);
    const std::vector<double> y(100, 42.0);
    LstmParams p;
    p.epochs = 30;
    const auto st = train_lstm(y, d.covs, d.names, p);
    const std::vector<double> next{0.1, 0.9};
    EXPECT_NEAR(predict_one_step(st, next).mean, 42.0, 0.05 * 42.0);
    EXPECT_FALSE(predict_one_step(st, next).has_interval());
    EXPECT_THROW(predict_one_step(st, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Predict, ZeroWeightsGiveUnscaledBias) {
    const auto d = sine(40);
    auto st = train_lstm(d.y, d.covs, d.names, LstmParams{.epochs = 1});
    st.net.theta().setZero();
    st.net.b_out() = 0.25;
    EXPECT_NEAR(predict_one_step(st, std::vector<double>{0.0, 0.0}).mean, st.target_bounds.unscale(0.25), 1e-12);
}

TEST(Predict, LagInput) {
    const auto d = sine(80);
    LstmParams p;
    p.append_lag1 = true;
    p.epochs = 10;
    const auto st = train_lstm(d.y, d.covs, d.names, p);
    EXPECT_EQ(st.net.inputs(), 3);
    EXPECT_EQ(st.inputs.back(), "lag1");
    const auto a = predict_one_step(st, std::vector<double>{0.0, 1.0}, 5.0).mean;
    const auto b = predict_one_step(st, std::vector<double>{0.0, 1.0}, 15.0).mean;
    EXPECT_NE(a, b);
    const auto j = to_json(st);
    EXPECT_EQ(j["W"].size(), static_cast<std::size_t>(4 * 10 * 3));
    EXPECT_EQ(j["epoch_loss"].size(), 10u);
}

#pragma once

// Single-layer LSTM regressor. Each sample is a short input sequence
// (length 1 in point-by-point use) mapped to one scalar through a dense
// layer on the final hidden state. Trained with Adam on min-max scaled data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "turbid/common.hpp"
#include "turbid/dataset.hpp"

namespace turbid::lstm {

struct LstmParams {
    int units = 10;
    int epochs = 50;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    std::uint64_t seed = 42;
    int batch_size = 1;       ///< samples per Adam step
    bool shuffle = true;      ///< reshuffle sample order each epoch
    bool append_lag1 = false; ///< add y_{t-1} as an extra input

    void validate() const {
        if (units < 1) throw std::invalid_argument("lstm: units must be >= 1");
        if (epochs < 1) throw std::invalid_argument("lstm: epochs must be >= 1");
        if (!(learning_rate > 0.0 && learning_rate < 1.0)) throw std::invalid_argument("lstm: learning_rate must be in (0,1)");
        if (batch_size < 1) throw std::invalid_argument("lstm: batch_size must be >= 1");
    }
};

// ---------------------------------------------------------------- scaling

struct Bounds {
    double min = 0.0, max = 1.0;
    double scale(double v) const { return (v - min) / (max - min); }
    double unscale(double s) const { return min + s * (max - min); }
};

struct Scaled {
    std::vector<double> values;
    Bounds bounds;
};

inline Scaled scale_minmax(std::span<const double> series, std::optional<Bounds> bounds = std::nullopt) {
    if (series.empty()) throw std::invalid_argument("scale_minmax: empty series");
    Bounds b;
    if (bounds) {
        b = *bounds;
    } else {
        const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
        b = {*lo, *hi};
    }
    if (!(b.max > b.min)) throw std::invalid_argument("scale_minmax: constant series (max == min)");
    Scaled out{{}, b};
    out.values.reserve(series.size());
    for (double v : series) out.values.push_back(b.scale(v));
    return out;
}

inline std::vector<double> unscale_minmax(std::span<const double> scaled, const Bounds& b) {
    std::vector<double> out;
    out.reserve(scaled.size());
    for (double s : scaled) out.push_back(b.unscale(s));
    return out;
}

// ---------------------------------------------------------------- network

/// All weights in one flat vector so the optimizer and gradient checks can
/// treat them uniformly. Gate order within the 4H blocks is i, f, g, o.
class Network {
public:
    Network() = default;
    Network(int inputs, int units)
        : inputs_(inputs), units_(units), theta_(Eigen::VectorXd::Zero(size_for(inputs, units))) {
        if (inputs < 1 || units < 1) throw std::invalid_argument("lstm network: dimensions must be >= 1");
    }

    static Eigen::Index size_for(int d, int h) { return 4 * h * (d + h + 1) + h + 1; }

    int inputs() const { return inputs_; }
    int units() const { return units_; }
    Eigen::Index size() const { return theta_.size(); }
    Eigen::VectorXd& theta() { return theta_; }
    const Eigen::VectorXd& theta() const { return theta_; }

    using Mat = Eigen::Map<Eigen::MatrixXd>;
    using CMat = Eigen::Map<const Eigen::MatrixXd>;
    using Vec = Eigen::Map<Eigen::VectorXd>;
    using CVec = Eigen::Map<const Eigen::VectorXd>;

    // input weights W: 4H x D, recurrent U: 4H x H, bias b: 4H, dense w_out: H, b_out
    static Mat W(Eigen::VectorXd& t, int d, int h) { return Mat(t.data(), 4 * h, d); }
    static Mat U(Eigen::VectorXd& t, int d, int h) { return Mat(t.data() + 4 * h * d, 4 * h, h); }
    static Vec b(Eigen::VectorXd& t, int d, int h) { return Vec(t.data() + 4 * h * (d + h), 4 * h); }
    static Vec w_out(Eigen::VectorXd& t, int d, int h) { return Vec(t.data() + 4 * h * (d + h + 1), h); }
    static double& b_out(Eigen::VectorXd& t) { return t[t.size() - 1]; }

    Mat W() { return W(theta_, inputs_, units_); }
    Mat U() { return U(theta_, inputs_, units_); }
    Vec b() { return b(theta_, inputs_, units_); }
    Vec w_out() { return w_out(theta_, inputs_, units_); }
    double& b_out() { return b_out(theta_); }

    CMat W() const { return CMat(theta_.data(), 4 * units_, inputs_); }
    CMat U() const { return CMat(theta_.data() + 4 * units_ * inputs_, 4 * units_, units_); }
    CVec b() const { return CVec(theta_.data() + 4 * units_ * (inputs_ + units_), 4 * units_); }
    CVec w_out() const { return CVec(theta_.data() + 4 * units_ * (inputs_ + units_ + 1), units_); }
    double b_out() const { return theta_[theta_.size() - 1]; }

private:
    int inputs_ = 0, units_ = 0;
    Eigen::VectorXd theta_;
};

/// Activations of one time step.
struct StepCache {
    Eigen::VectorXd x, h_prev, c_prev, i, f, g, o, c, tanh_c, h;
};

struct ForwardResult {
    double prediction = 0.0;
    std::vector<StepCache> steps;
};

namespace detail {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Uniform(0,1) from the raw generator, independent of the standard
/// library's distribution implementations so results are portable.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
} // namespace detail

/// Runs the recursion over the rows of `input` (T x D), starting from zero
/// hidden and cell states.
inline ForwardResult lstm_forward(const Network& net, const Eigen::MatrixXd& input) {
    if (input.cols() != net.inputs())
        throw std::invalid_argument("lstm_forward: input has " + std::to_string(input.cols()) + " columns, network expects " +
                                    std::to_string(net.inputs()));
    if (input.rows() < 1) throw std::invalid_argument("lstm_forward: empty input sequence");
    const Eigen::Index H = net.units();
    const auto W = net.W();
    const auto U = net.U();
    const auto bias = net.b();
    ForwardResult out;
    out.steps.reserve(static_cast<std::size_t>(input.rows()));
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H), c = Eigen::VectorXd::Zero(H);
    for (Eigen::Index t = 0; t < input.rows(); ++t) {
        StepCache s;
        s.x = input.row(t).transpose();
        s.h_prev = h;
        s.c_prev = c;
        const Eigen::VectorXd z = W * s.x + U * h + bias;
        s.i = z.segment(0, H).unaryExpr(&detail::sigmoid);
        s.f = z.segment(H, H).unaryExpr(&detail::sigmoid);
        s.g = z.segment(2 * H, H).array().tanh();
        s.o = z.segment(3 * H, H).unaryExpr(&detail::sigmoid);
        s.c = s.f.cwiseProduct(c) + s.i.cwiseProduct(s.g);
        s.tanh_c = s.c.array().tanh();
        s.h = s.o.cwiseProduct(s.tanh_c);
        h = s.h;
        c = s.c;
        out.steps.push_back(std::move(s));
    }
    out.prediction = net.w_out().dot(h) + net.b_out();
    return out;
}

/// Accumulates d(loss)/d(theta) into `grad`, given d(loss)/d(prediction).
inline void lstm_backward(const Network& net, const ForwardResult& fwd, double dpred, Eigen::VectorXd& grad) {
    const int D = net.inputs(), Hi = net.units();
    const Eigen::Index H = Hi;
    auto dW = Network::W(grad, D, Hi);
    auto dU = Network::U(grad, D, Hi);
    auto db = Network::b(grad, D, Hi);
    auto dw_out = Network::w_out(grad, D, Hi);
    const auto U = net.U();

    dw_out += dpred * fwd.steps.back().h;
    Network::b_out(grad) += dpred;
    Eigen::VectorXd dh = dpred * net.w_out();
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dz(4 * H);
    for (auto it = fwd.steps.rbegin(); it != fwd.steps.rend(); ++it) {
        const StepCache& s = *it;
        const Eigen::ArrayXd one = Eigen::ArrayXd::Ones(H);
        const Eigen::ArrayXd d_o = dh.array() * s.tanh_c.array();
        dc.array() += dh.array() * s.o.array() * (one - s.tanh_c.array().square());
        const Eigen::ArrayXd d_i = dc.array() * s.g.array();
        const Eigen::ArrayXd d_g = dc.array() * s.i.array();
        const Eigen::ArrayXd d_f = dc.array() * s.c_prev.array();
        dz.segment(0, H) = (d_i * s.i.array() * (one - s.i.array())).matrix();
        dz.segment(H, H) = (d_f * s.f.array() * (one - s.f.array())).matrix();
        dz.segment(2 * H, H) = (d_g * (one - s.g.array().square())).matrix();
        dz.segment(3 * H, H) = (d_o * s.o.array() * (one - s.o.array())).matrix();
        dW.noalias() += dz * s.x.transpose();
        dU.noalias() += dz * s.h_prev.transpose();
        db += dz;
        dh = U.transpose() * dz;
        dc = dc.cwiseProduct(s.f);
    }
}

/// Squared-error loss of one (sequence, target) pair and its gradient.
inline double sample_loss_gradient(const Network& net, const Eigen::MatrixXd& input, double target, Eigen::VectorXd& grad) {
    const auto fwd = lstm_forward(net, input);
    const double err = fwd.prediction - target;
    lstm_backward(net, fwd, 2.0 * err, grad);
    return err * err;
}

/// Glorot-uniform weights, zero biases except forget gate = 1.
inline void initialize(Network& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const int D = net.inputs(), H = net.units();
    auto fill = [&](auto&& m, double limit) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = (2.0 * detail::unit_uniform(rng) - 1.0) * limit;
    };
    net.theta().setZero();
    fill(net.W(), std::sqrt(6.0 / (D + 4 * H)));
    fill(net.U(), std::sqrt(6.0 / (H + 4 * H)));
    auto wo = net.w_out();
    for (Eigen::Index k = 0; k < wo.size(); ++k) wo[k] = (2.0 * detail::unit_uniform(rng) - 1.0) * std::sqrt(6.0 / (H + 1));
    net.b().segment(H, H).setOnes();
}

// ---------------------------------------------------------------- optimizer

struct Adam {
    double learning_rate = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Eigen::VectorXd m, v;
    long step_count = 0;

    Adam() = default;
    Adam(Eigen::Index n, double lr, double b1, double b2, double e)
        : learning_rate(lr), beta1(b1), beta2(b2), eps(e), m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
        ++step_count;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        theta.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
};

// ---------------------------------------------------------------- model

struct LstmState {
    LstmParams params;
    Network net;
    std::vector<std::string> inputs; ///< covariate names (plus lag marker)
    std::vector<Bounds> input_bounds;
    Bounds target_bounds;
    Adam optimizer;
    std::vector<double> epoch_loss; ///< mean scaled MSE seen during each epoch
    double last_target = 0.0;       ///< y at the final training row (for lag input)
};

namespace detail {
inline Bounds training_bounds(std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    Bounds b{*lo, *hi};
    // A constant training column has no scale; widen so the value maps to 0.5.
    if (!(b.max > b.min)) b = {b.min - 1.0, b.max + 1.0};
    return b;
}
} // namespace detail

/// Trains on rows t -> target[t] using covariates at t (and target[t-1]
/// when params.append_lag1). Deterministic for a fixed seed. A matching
/// `warm_start` network replaces the random initial weights.
inline LstmState train_lstm(std::span<const double> target, std::span<const std::vector<double>> covariates,
                            std::span<const std::string> names, const LstmParams& params,
                            const Network* warm_start = nullptr) {
    params.validate();
    const std::size_t n = target.size();
    if (n < 20) throw std::invalid_argument("train_lstm: need at least 20 rows");
    if (names.size() != covariates.size()) throw std::invalid_argument("train_lstm: names/covariates mismatch");
    for (const auto& c : covariates)
        if (c.size() != n) throw std::invalid_argument("train_lstm: covariate length mismatch");
    for (double v : target)
        if (!std::isfinite(v)) throw DataError("train_lstm: non-finite target");

    LstmState st;
    st.params = params;
    st.inputs.assign(names.begin(), names.end());
    st.target_bounds = detail::training_bounds(target);
    for (const auto& c : covariates) st.input_bounds.push_back(detail::training_bounds(c));
    if (params.append_lag1) {
        st.inputs.push_back("lag1");
        st.input_bounds.push_back(st.target_bounds);
    }
    const int D = static_cast<int>(st.inputs.size());
    if (D == 0) throw std::invalid_argument("train_lstm: no inputs");

    const std::size_t first = params.append_lag1 ? 1 : 0;
    const std::size_t m = n - first;
    std::vector<Eigen::MatrixXd> xs(m, Eigen::MatrixXd(1, D));
    std::vector<double> ys(m);
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t t = r + first;
        for (std::size_t j = 0; j < covariates.size(); ++j) xs[r](0, static_cast<Eigen::Index>(j)) = st.input_bounds[j].scale(covariates[j][t]);
        if (params.append_lag1) xs[r](0, D - 1) = st.target_bounds.scale(target[t - 1]);
        ys[r] = st.target_bounds.scale(target[t]);
    }

    if (warm_start && warm_start->inputs() == D && warm_start->units() == params.units) {
        st.net = *warm_start;
    } else {
        st.net = Network(D, params.units);
        initialize(st.net, params.seed);
    }
    st.optimizer = Adam(st.net.size(), params.learning_rate, params.beta1, params.beta2, params.eps_hat);
    std::mt19937_64 order_rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Eigen::VectorXd grad(st.net.size());
    const std::size_t bs = static_cast<std::size_t>(params.batch_size);

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        if (params.shuffle)
            for (std::size_t k = m; k > 1; --k) std::swap(order[k - 1], order[order_rng() % k]);
        double total = 0.0;
        for (std::size_t start = 0; start < m; start += bs) {
            const std::size_t stop = std::min(m, start + bs);
            grad.setZero();
            for (std::size_t k = start; k < stop; ++k) total += sample_loss_gradient(st.net, xs[order[k]], ys[order[k]], grad);
            grad /= static_cast<double>(stop - start);
            st.optimizer.step(st.net.theta(), grad);
        }
        const double loss = total / static_cast<double>(m);
        if (!std::isfinite(loss) || !st.net.theta().allFinite()) throw FitError("train_lstm: training diverged");
        st.epoch_loss.push_back(loss);
    }
    st.last_target = target.back();
    return st;
}

inline LstmState train_lstm(const TimeSeriesFrame& frame, std::string_view target, std::span<const std::string> covariates,
                            const LstmParams& params, const Network* warm_start = nullptr) {
    std::vector<std::vector<double>> cols;
    for (const auto& c : covariates) {
        auto s = frame.column(c);
        cols.emplace_back(s.begin(), s.end());
    }
    return train_lstm(frame.column(target), cols, covariates, params, warm_start);
}

/// One-step forecast from covariates at the forecast time. `lag1` is the
/// target value one step earlier and is required when the state was trained
/// with append_lag1. No interval is produced.
inline ForecastPoint predict_one_step(const LstmState& st, std::span<const double> next_covariates,
                                      std::optional<double> lag1 = std::nullopt) {
    const std::size_t ncov = st.input_bounds.size() - (st.params.append_lag1 ? 1 : 0);
    if (next_covariates.size() != ncov)
        throw std::invalid_argument("lstm predict: expected " + std::to_string(ncov) + " covariates, got " +
                                    std::to_string(next_covariates.size()));
    Eigen::MatrixXd x(1, st.net.inputs());
    for (std::size_t j = 0; j < ncov; ++j) x(0, static_cast<Eigen::Index>(j)) = st.input_bounds[j].scale(next_covariates[j]);
    if (st.params.append_lag1) x(0, st.net.inputs() - 1) = st.target_bounds.scale(lag1.value_or(st.last_target));
    ForecastPoint fp;
    fp.model = ModelTag::Lstm;
    fp.mean = st.target_bounds.unscale(lstm_forward(st.net, x).prediction);
    return fp;
}

// ---------------------------------------------------------------- I/O

inline nlohmann::json to_json(const LstmState& st) {
    auto arr = [](const auto& m) {
        std::vector<double> v(m.data(), m.data() + m.size());
        return nlohmann::json(v);
    };
    nlohmann::json j;
    j["units"] = st.net.units();
    j["inputs"] = st.inputs;
    j["W"] = arr(st.net.W());
    j["U"] = arr(st.net.U());
    j["b"] = arr(st.net.b());
    j["w_out"] = arr(st.net.w_out());
    j["b_out"] = st.net.b_out();
    nlohmann::json sc = nlohmann::json::array();
    for (std::size_t k = 0; k < st.inputs.size(); ++k)
        sc.push_back({{"name", st.inputs[k]}, {"min", st.input_bounds[k].min}, {"max", st.input_bounds[k].max}});
    j["input_scaler"] = sc;
    j["target_scaler"] = {{"min", st.target_bounds.min}, {"max", st.target_bounds.max}};
    j["epoch_loss"] = st.epoch_loss;
    return j;
}

inline void write_loss_csv(std::ostream& os, const LstmState& st) {
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < st.epoch_loss.size(); ++e) os << e + 1 << ',' << format_real(st.epoch_loss[e]) << '\n';
}

} // namespace turbid::lstm

#pragma once

// Random forest classifier: bootstrap-aggregated CART trees with Gini
// splits on random feature subsets and majority vote. Classes are integer
// labels 0..K-1; vote ties go to the lowest label.

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

namespace turbid::forest {

struct ForestParams {
    int n_trees = 500;
    int mtry = 0; ///< 0 = floor(sqrt(p))
    int min_leaf = 1;
    std::optional<int> max_depth;
    std::uint64_t seed = 1;
    bool bootstrap = true;

    int resolved_mtry(int p) const { return mtry > 0 ? mtry : std::max(1, static_cast<int>(std::floor(std::sqrt(double(p))))); }
    void validate(int p) const {
        if (n_trees < 1) throw std::invalid_argument("forest: n_trees must be >= 1");
        const int m = resolved_mtry(p);
        if (m < 1 || m > p) throw std::invalid_argument("forest: mtry must be in [1, p]");
        if (min_leaf < 1) throw std::invalid_argument("forest: min_leaf must be >= 1");
        if (max_depth && *max_depth < 0) throw std::invalid_argument("forest: max_depth must be >= 0");
    }
};

inline double gini_impurity(std::span<const int> counts) {
    long total = 0;
    for (int c : counts) {
        if (c < 0) throw std::invalid_argument("gini_impurity: negative count");
        total += c;
    }
    if (total == 0) throw std::invalid_argument("gini_impurity: empty node");
    double s = 0.0;
    for (int c : counts) {
        const double p = double(c) / double(total);
        s += p * p;
    }
    return 1.0 - s;
}

/// Index of the largest count; ties go to the lowest index.
inline int argmax_lowest(std::span<const int> counts) {
    int best = 0;
    for (std::size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
    return best;
}

struct Node {
    int feature = -1; ///< -1 for a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    std::vector<int> counts;
    double impurity = 0.0;
    double decrease = 0.0; ///< n * impurity - (n_l * imp_l + n_r * imp_r)

    bool is_leaf() const { return feature < 0; }
    int n() const { return std::accumulate(counts.begin(), counts.end(), 0); }
};

class DecisionTree {
public:
    DecisionTree() = default;
    explicit DecisionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<Node>& nodes() const { return nodes_; }

    const Node& leaf_for(std::span<const double> x) const {
        int i = 0;
        while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
            const Node& nd = nodes_[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes_[static_cast<std::size_t>(i)];
    }
    int predict(std::span<const double> x) const { return argmax_lowest(leaf_for(x).counts); }

    int depth() const {
        std::vector<int> d(nodes_.size(), 0);
        int best = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            best = std::max(best, d[i]);
            if (!nodes_[i].is_leaf()) {
                d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
            }
        }
        return best;
    }

    /// Leaf index reached by each row; two trees with the same partition
    /// return the same grouping.
    std::vector<int> leaf_ids(const Eigen::MatrixXd& X) const {
        std::vector<int> out;
        for (Eigen::Index r = 0; r < X.rows(); ++r) {
            const Eigen::VectorXd row = X.row(r).transpose();
            out.push_back(static_cast<int>(&leaf_for(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) - nodes_.data()));
        }
        return out;
    }

private:
    std::vector<Node> nodes_;
};

namespace detail {

/// Unbiased integer in [0, n) by rejection on the raw 64-bit stream.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t range = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v;
    do v = rng();
    while (v >= limit);
    return static_cast<std::size_t>(v % range);
}

struct Split {
    int feature = -1;
    double threshold = 0.0, decrease = 0.0;
};

inline std::vector<int> count_classes(std::span<const int> y, std::span<const std::size_t> idx, int k) {
    std::vector<int> c(static_cast<std::size_t>(k), 0);
    for (std::size_t i : idx) ++c[static_cast<std::size_t>(y[i])];
    return c;
}

inline Split best_split(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const std::size_t> idx, int k,
                        std::vector<int> features, int min_leaf, double parent_weighted) {
    std::sort(features.begin(), features.end());
    Split best;
    std::vector<std::size_t> order(idx.begin(), idx.end());
    std::vector<int> left(static_cast<std::size_t>(k)), right(static_cast<std::size_t>(k));
    const std::size_t n = idx.size();
    auto weighted = [](const std::vector<int>& c, std::size_t m) {
        double s = 0.0;
        for (int v : c) s += double(v) * double(v);
        return double(m) - s / double(m); // m * gini
    };
    for (int f : features) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double xa = X(static_cast<Eigen::Index>(a), f), xb = X(static_cast<Eigen::Index>(b), f);
            return xa < xb || (xa == xb && a < b);
        });
        std::fill(left.begin(), left.end(), 0);
        right = count_classes(y, order, k);
        for (std::size_t pos = 0; pos + 1 < n; ++pos) {
            const int cls = y[order[pos]];
            ++left[static_cast<std::size_t>(cls)];
            --right[static_cast<std::size_t>(cls)];
            const double xv = X(static_cast<Eigen::Index>(order[pos]), f);
            const double xn = X(static_cast<Eigen::Index>(order[pos + 1]), f);
            if (!(xn > xv)) continue;
            const std::size_t nl = pos + 1, nr = n - nl;
            if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
            const double dec = parent_weighted - weighted(left, nl) - weighted(right, nr);
            if (best.feature < 0 || dec > best.decrease) {
                best.feature = f;
                best.threshold = xv + (xn - xv) / 2.0;
                best.decrease = dec;
            }
        }
    }
    if (best.feature >= 0) best.decrease = std::max(best.decrease, 0.0);
    return best;
}

} // namespace detail

/// Grows one tree on rows `idx` of X (rows may repeat, as in a bootstrap).
inline DecisionTree grow_tree(const Eigen::MatrixXd& X, std::span<const int> y, std::vector<std::size_t> idx, int n_classes,
                              const ForestParams& params, std::mt19937_64& rng) {
    const int p = static_cast<int>(X.cols());
    if (idx.empty()) throw std::invalid_argument("grow_tree: no samples");
    const int mtry = params.resolved_mtry(p);
    struct Pending {
        std::vector<std::size_t> idx;
        int node, depth;
    };
    std::vector<Node> nodes(1);
    std::vector<Pending> stack;
    stack.push_back({std::move(idx), 0, 0});
    std::vector<int> pool(static_cast<std::size_t>(p));
    while (!stack.empty()) {
        Pending cur = std::move(stack.back());
        stack.pop_back();
        Node& nd = nodes[static_cast<std::size_t>(cur.node)];
        nd.counts = detail::count_classes(y, cur.idx, n_classes);
        nd.impurity = gini_impurity(nd.counts);
        const std::size_t n = cur.idx.size();
        const bool pure = nd.impurity <= 0.0;
        const bool too_small = n < 2 * static_cast<std::size_t>(params.min_leaf);
        const bool too_deep = params.max_depth && cur.depth >= *params.max_depth;
        if (pure || too_small || too_deep) continue;

        std::iota(pool.begin(), pool.end(), 0);
        for (int j = 0; j < mtry; ++j) {
            const std::size_t r = static_cast<std::size_t>(j) + detail::uniform_index(rng, static_cast<std::size_t>(p - j));
            std::swap(pool[static_cast<std::size_t>(j)], pool[r]);
        }
        std::vector<int> features(pool.begin(), pool.begin() + mtry);
        const double parent = double(n) * nd.impurity;
        const auto split = detail::best_split(X, y, cur.idx, n_classes, std::move(features), params.min_leaf, parent);
        if (split.feature < 0) continue;

        std::vector<std::size_t> li, ri;
        for (std::size_t i : cur.idx) (X(static_cast<Eigen::Index>(i), split.feature) <= split.threshold ? li : ri).push_back(i);
        const int l = static_cast<int>(nodes.size()), r = l + 1;
        nd.feature = split.feature;
        nd.threshold = split.threshold;
        nd.decrease = split.decrease;
        nd.left = l;
        nd.right = r;
        nodes.emplace_back();
        nodes.emplace_back();
        // right first so the left subtree is expanded first
        stack.push_back({std::move(ri), r, cur.depth + 1});
        stack.push_back({std::move(li), l, cur.depth + 1});
    }
    return DecisionTree(std::move(nodes));
}

struct Prediction {
    int label = 0;
    std::vector<double> vote_fractions;
};

class RandomForest {
public:
    RandomForest() = default;
    RandomForest(int n_features, int n_classes, std::vector<DecisionTree> trees)
        : p_(n_features), k_(n_classes), trees_(std::move(trees)) {}

    int n_features() const { return p_; }
    int n_classes() const { return k_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }

    double oob_accuracy = std::numeric_limits<double>::quiet_NaN(); ///< NaN without bootstrap
    int oob_samples = 0;
    std::vector<double> importance; ///< mean Gini decrease per feature, per root sample

    Prediction predict(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != p_)
            throw std::invalid_argument("forest predict: expected " + std::to_string(p_) + " features, got " + std::to_string(x.size()));
        std::vector<int> votes(static_cast<std::size_t>(k_), 0);
        for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.predict(x))];
        Prediction out;
        out.label = argmax_lowest(votes);
        for (int v : votes) out.vote_fractions.push_back(double(v) / double(trees_.size()));
        return out;
    }

private:
    int p_ = 0, k_ = 0;
    std::vector<DecisionTree> trees_;
};

/// `n_classes` = 0 infers max(label) + 1.
inline RandomForest fit_forest(const Eigen::MatrixXd& X, std::span<const int> y, const ForestParams& params, int n_classes = 0) {
    const std::size_t n = static_cast<std::size_t>(X.rows());
    const int p = static_cast<int>(X.cols());
    if (n < 2) throw std::invalid_argument("fit_forest: need at least 2 samples");
    if (y.size() != n) throw std::invalid_argument("fit_forest: label count mismatch");
    if (p < 1) throw std::invalid_argument("fit_forest: no features");
    if (!X.allFinite()) throw std::invalid_argument("fit_forest: non-finite feature value");
    params.validate(p);
    const int maxlab = *std::max_element(y.begin(), y.end());
    if (*std::min_element(y.begin(), y.end()) < 0) throw std::invalid_argument("fit_forest: negative label");
    if (n_classes == 0) n_classes = maxlab + 1;
    if (maxlab >= n_classes) throw std::invalid_argument("fit_forest: label out of range");

    std::mt19937_64 rng(params.seed);
    std::vector<DecisionTree> trees;
    std::vector<std::vector<int>> oob_votes(n, std::vector<int>(static_cast<std::size_t>(n_classes), 0));
    std::vector<double> importance(static_cast<std::size_t>(p), 0.0);
    std::vector<char> in_bag(n);
    for (int t = 0; t < params.n_trees; ++t) {
        std::vector<std::size_t> idx(n);
        std::fill(in_bag.begin(), in_bag.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            idx[i] = params.bootstrap ? detail::uniform_index(rng, n) : i;
            in_bag[idx[i]] = 1;
        }
        auto tree = grow_tree(X, y, std::move(idx), n_classes, params, rng);
        for (const auto& nd : tree.nodes())
            if (!nd.is_leaf()) importance[static_cast<std::size_t>(nd.feature)] += nd.decrease / double(n);
        if (params.bootstrap)
            for (std::size_t i = 0; i < n; ++i)
                if (!in_bag[i]) {
                    const Eigen::VectorXd row = X.row(static_cast<Eigen::Index>(i)).transpose();
                    ++oob_votes[i][static_cast<std::size_t>(tree.predict(std::span<const double>(row.data(), static_cast<std::size_t>(p))))];
                }
        trees.push_back(std::move(tree));
    }
    RandomForest rf(p, n_classes, std::move(trees));
    for (double& v : importance) v /= double(params.n_trees);
    rf.importance = std::move(importance);
    if (params.bootstrap) {
        int correct = 0, counted = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::accumulate(oob_votes[i].begin(), oob_votes[i].end(), 0) == 0) continue;
            ++counted;
            correct += argmax_lowest(oob_votes[i]) == y[i];
        }
        rf.oob_samples = counted;
        if (counted > 0) rf.oob_accuracy = double(correct) / double(counted);
    }
    return rf;
}

// ---------------------------------------------------------------- I/O

inline nlohmann::json to_json(const RandomForest& rf) {
    nlohmann::json j;
    j["n_features"] = rf.n_features();
    j["n_classes"] = rf.n_classes();
    j["oob_accuracy"] = std::isnan(rf.oob_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(rf.oob_accuracy);
    j["importance"] = rf.importance;
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : rf.trees()) {
        nlohmann::json feat = nlohmann::json::array(), thr = nlohmann::json::array(), left = nlohmann::json::array(),
                       right = nlohmann::json::array(), counts = nlohmann::json::array();
        for (const auto& nd : t.nodes()) {
            feat.push_back(nd.feature);
            thr.push_back(nd.threshold);
            left.push_back(nd.left);
            right.push_back(nd.right);
            counts.push_back(nd.counts);
        }
        trees.push_back({{"feature", feat}, {"threshold", thr}, {"left", left}, {"right", right}, {"counts", counts}});
    }
    return j;
}

inline RandomForest forest_from_json(const nlohmann::json& j) {
    std::vector<DecisionTree> trees;
    for (const auto& t : j.at("trees")) {
        std::vector<Node> nodes(t.at("feature").size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            nodes[i].feature = t["feature"][i].get<int>();
            nodes[i].threshold = t["threshold"][i].get<double>();
            nodes[i].left = t["left"][i].get<int>();
            nodes[i].right = t["right"][i].get<int>();
            nodes[i].counts = t["counts"][i].get<std::vector<int>>();
            nodes[i].impurity = gini_impurity(nodes[i].counts);
        }
        trees.emplace_back(std::move(nodes));
    }
    RandomForest rf(j.at("n_features").get<int>(), j.at("n_classes").get<int>(), std::move(trees));
    if (!j["oob_accuracy"].is_null()) rf.oob_accuracy = j["oob_accuracy"].get<double>();
    rf.importance = j.value("importance", std::vector<double>{});
    return rf;
}

inline void write_importance_csv(std::ostream& os, const RandomForest& rf, std::span<const std::string> names) {
    os << "feature,importance\n";
    for (std::size_t k = 0; k < rf.importance.size(); ++k)
        os << (k < names.size() ? names[k] : "f" + std::to_string(k)) << ',' << format_real(rf.importance[k]) << '\n';
}

} // namespace turbid::forest

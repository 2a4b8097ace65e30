#pragma once

// Best-model labels, the chronological meta dataset, and forecast routing
// through the classifier (or through the true labels, for the oracle).

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "turbid/common.hpp"
#include "turbid/dataset.hpp"
#include "turbid/folds.hpp"
#include "turbid/forest.hpp"
#include "turbid/stats.hpp"
#include "turbid/tsfeat.hpp"

namespace turbid::meta {

struct MetaLabel {
    Date t{};
    ModelTag label = ModelTag::Arima;
    std::array<double, 3> errors{}; ///< |y - yhat| for ARIMA, LSTM, GAM
};

inline MetaLabel label_best_model(double actual, double pred_arima, double pred_lstm, double pred_gam, Date t = {}) {
    for (double v : {actual, pred_arima, pred_lstm, pred_gam})
        if (!std::isfinite(v)) throw std::invalid_argument("label_best_model: non-finite input");
    MetaLabel m;
    m.t = t;
    m.errors = {std::abs(actual - pred_arima), std::abs(actual - pred_lstm), std::abs(actual - pred_gam)};
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
        if (m.errors[k] < m.errors[best]) best = k;
    m.label = static_cast<ModelTag>(best);
    return m;
}

/// Training rows for a chronological split of n rows: ceil(0.7 n).
inline std::size_t split_point(std::size_t n) { return (7 * n + 9) / 10; }

struct MetaRow {
    FoldRecord record;
    tsfeat::FeatureVector features;
    std::vector<double> extra; ///< covariate-window features when enabled
    MetaLabel label;

    std::vector<double> x() const {
        const auto v = features.values();
        std::vector<double> out(v.begin(), v.end());
        out.insert(out.end(), extra.begin(), extra.end());
        return out;
    }
};

struct MetaDataset {
    std::vector<MetaRow> rows;
    std::size_t split_index = 0;
    std::vector<std::string> feature_names;

    std::span<const MetaRow> train() const { return std::span<const MetaRow>(rows).first(split_index); }
    std::span<const MetaRow> test() const { return std::span<const MetaRow>(rows).subspan(split_index); }
};

struct MetaOptions {
    std::size_t window_len = 30;
    std::size_t min_records = 40;
    std::vector<std::string> covariate_features; ///< extension: window mean and SD of these columns
};

inline MetaDataset build_meta_dataset(std::span<const FoldRecord> records, const TimeSeriesFrame& frame,
                                      std::string_view target, const MetaOptions& opt = {}) {
    if (records.size() < opt.min_records)
        throw std::invalid_argument("build_meta_dataset: " + std::to_string(records.size()) + " fold records, need at least " +
                                    std::to_string(opt.min_records));
    if (frame.size() == 0) throw DataError("build_meta_dataset: empty frame");
    std::vector<FoldRecord> sorted(records.begin(), records.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const FoldRecord& a, const FoldRecord& b) { return a.test_date < b.test_date; });
    const auto y = frame.column(target);
    MetaDataset ds;
    const auto& base = tsfeat::FeatureVector::names();
    ds.feature_names.assign(base.begin(), base.end());
    for (const auto& c : opt.covariate_features) {
        ds.feature_names.push_back(c + "_window_mean");
        ds.feature_names.push_back(c + "_window_sd");
    }
    for (const auto& rec : sorted) {
        const auto offset = (rec.test_date - frame.dates().front()).count();
        if (offset < 0 || static_cast<std::size_t>(offset) >= frame.size())
            throw DataError("build_meta_dataset: test date " + format_date(rec.test_date) + " outside the series");
        const auto t = static_cast<std::size_t>(offset);
        if (t < opt.window_len)
            throw DataError("build_meta_dataset: window history shortfall before " + format_date(rec.test_date));
        if (std::abs(y[t] - rec.actual) > 1e-9 * std::max(1.0, std::abs(rec.actual)))
            throw DataError("build_meta_dataset: fold actual does not match series on " + format_date(rec.test_date));
        MetaRow row;
        row.record = rec;
        row.record.test_row = t;
        row.features = tsfeat::extract_feature_vector(y, t, opt.window_len);
        row.features.window_end = frame.dates()[t - 1];
        for (const auto& c : opt.covariate_features) {
            const auto w = frame.column(c).subspan(t - opt.window_len, opt.window_len);
            row.extra.push_back(stats::mean(w));
            row.extra.push_back(std::sqrt(stats::variance(w)));
        }
        for (ModelTag m : kAllModels)
            if (!rec.result(m)) throw DataError("build_meta_dataset: fold " + std::to_string(rec.fold_index) + " lacks a model result");
        row.label = label_best_model(rec.actual, rec.result(ModelTag::Arima)->forecast.mean, rec.result(ModelTag::Lstm)->forecast.mean,
                                     rec.result(ModelTag::Gam)->forecast.mean, rec.test_date);
        ds.rows.push_back(std::move(row));
    }
    ds.split_index = split_point(ds.rows.size());
    return ds;
}

// ---------------------------------------------------------------- classifier

inline Eigen::MatrixXd design(std::span<const MetaRow> rows) {
    if (rows.empty()) return {};
    const auto p = static_cast<Eigen::Index>(rows.front().x().size());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), p);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto x = rows[i].x();
        for (Eigen::Index j = 0; j < p; ++j) X(static_cast<Eigen::Index>(i), j) = x[static_cast<std::size_t>(j)];
    }
    return X;
}

inline std::vector<int> labels(std::span<const MetaRow> rows) {
    std::vector<int> y;
    for (const auto& r : rows) y.push_back(static_cast<int>(r.label.label));
    return y;
}

using Confusion = std::array<std::array<int, 3>, 3>; ///< [true][predicted]

struct MetaModel {
    forest::RandomForest forest;
    forest::ForestParams params;
    double train_accuracy = 0.0, oob_accuracy = 0.0, test_accuracy = 0.0;
    Confusion test_confusion{};

    ModelTag choose(std::span<const double> x) const { return static_cast<ModelTag>(forest.predict(x).label); }
};

inline MetaModel train_meta(const MetaDataset& ds, const forest::ForestParams& params) {
    const auto train = ds.train();
    if (train.size() < 2) throw std::invalid_argument("train_meta: fewer than 2 training rows");
    const auto y = labels(train);
    if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); }))
        throw std::invalid_argument("train_meta: training rows contain a single class");
    MetaModel mm;
    mm.params = params;
    mm.forest = forest::fit_forest(design(train), y, params, 3);
    mm.oob_accuracy = mm.forest.oob_accuracy;
    int hit = 0;
    for (const auto& r : train) hit += mm.choose(r.x()) == r.label.label;
    mm.train_accuracy = double(hit) / double(train.size());
    hit = 0;
    for (const auto& r : ds.test()) {
        const auto pred = mm.choose(r.x());
        hit += pred == r.label.label;
        ++mm.test_confusion[static_cast<std::size_t>(r.label.label)][static_cast<std::size_t>(pred)];
    }
    mm.test_accuracy = ds.test().empty() ? std::numeric_limits<double>::quiet_NaN() : double(hit) / double(ds.test().size());
    return mm;
}

// ---------------------------------------------------------------- routing

struct Routed {
    std::vector<ModelTag> chosen;
    std::vector<ForecastPoint> forecasts;
    std::vector<double> signed_errors;
    MetricSummary metrics;
};

inline Routed route(std::span<const MetaRow> rows, std::span<const ModelTag> chosen) {
    if (rows.size() != chosen.size()) throw std::invalid_argument("route: choice count mismatch");
    Routed out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto* res = rows[i].record.result(chosen[i]);
        if (!res) throw std::invalid_argument("route: chosen model missing in fold");
        out.chosen.push_back(chosen[i]);
        out.forecasts.push_back(res->forecast);
        out.signed_errors.push_back(rows[i].record.actual - res->forecast.mean);
    }
    out.metrics = summarize_errors(out.signed_errors);
    return out;
}

inline Routed oracle_forecast(std::span<const MetaRow> rows) {
    std::vector<ModelTag> c;
    for (const auto& r : rows) c.push_back(r.label.label);
    return route(rows, c);
}

inline Routed constant_forecast(std::span<const MetaRow> rows, ModelTag tag) {
    return route(rows, std::vector<ModelTag>(rows.size(), tag));
}

/// Classifier-routed forecasts for fold records with separately computed
/// features; each feature window must end the day before its record's
/// test date.
inline Routed meta_forecast(const MetaModel& mm, std::span<const FoldRecord> records, std::span<const tsfeat::FeatureVector> features) {
    if (records.size() != features.size()) throw DataError("meta_forecast: records and features differ in length");
    std::vector<MetaRow> rows;
    std::vector<ModelTag> chosen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!features[i].window_end || *features[i].window_end + std::chrono::days{1} != records[i].test_date)
            throw DataError("meta_forecast: feature window misaligned with fold " + std::to_string(records[i].fold_index));
        MetaRow r;
        r.record = records[i];
        r.features = features[i];
        chosen.push_back(mm.choose(r.x()));
        rows.push_back(std::move(r));
    }
    return route(rows, chosen);
}

inline Routed meta_forecast(const MetaModel& mm, std::span<const MetaRow> rows) {
    std::vector<ModelTag> chosen;
    for (const auto& r : rows) chosen.push_back(mm.choose(r.x()));
    return route(rows, chosen);
}

// ---------------------------------------------------------------- report

inline std::array<double, 3> label_distribution(std::span<const MetaRow> rows) {
    std::array<double, 3> d{};
    for (const auto& r : rows) d[static_cast<std::size_t>(r.label.label)] += 1.0;
    if (!rows.empty())
        for (double& v : d) v /= double(rows.size());
    return d;
}

inline nlohmann::json distribution_json(std::span<const MetaRow> rows) {
    const auto d = label_distribution(rows);
    nlohmann::json j;
    for (ModelTag t : kAllModels) j[std::string(to_string(t))] = d[static_cast<std::size_t>(t)];
    return j;
}

inline nlohmann::json meta_report(const MetaDataset& ds, const MetaModel& mm) {
    nlohmann::json j;
    j["rows"] = ds.rows.size();
    j["train_rows"] = ds.train().size();
    j["test_rows"] = ds.test().size();
    j["features"] = ds.feature_names;
    j["label_distribution"] = {{"all", distribution_json(ds.rows)}, {"train", distribution_json(ds.train())},
                               {"test", distribution_json(ds.test())}};
    j["forest"] = {{"n_trees", mm.params.n_trees},
                   {"mtry", mm.params.resolved_mtry(static_cast<int>(ds.feature_names.size()))},
                   {"min_leaf", mm.params.min_leaf},
                   {"seed", mm.params.seed},
                   {"train_accuracy", mm.train_accuracy},
                   {"oob_accuracy", std::isnan(mm.oob_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(mm.oob_accuracy)},
                   {"test_accuracy", std::isnan(mm.test_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(mm.test_accuracy)}};
    nlohmann::json conf = nlohmann::json::object();
    for (ModelTag a : kAllModels) {
        nlohmann::json row;
        for (ModelTag b : kAllModels) row[std::string(to_string(b))] = mm.test_confusion[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        conf[std::string(to_string(a))] = row;
    }
    j["test_confusion"] = conf;
    j["importance"] = nlohmann::json::object();
    for (std::size_t k = 0; k < mm.forest.importance.size() && k < ds.feature_names.size(); ++k)
        j["importance"][ds.feature_names[k]] = mm.forest.importance[k];
    if (!ds.test().empty()) {
        nlohmann::json tbl;
        for (ModelTag t : kAllModels) tbl[std::string(to_string(t))] = to_json(constant_forecast(ds.test(), t).metrics);
        const auto routed = meta_forecast(mm, ds.test());
        tbl["Meta-model"] = to_json(routed.metrics);
        tbl["Oracle"] = to_json(oracle_forecast(ds.test()).metrics);
        j["test_metrics"] = tbl;
        j["test_metrics_scope"] = "every row of test_metrics, single models included, is computed over the " +
                                  std::to_string(ds.test().size()) + " test-split folds only";
        nlohmann::json picks = nlohmann::json::array();
        for (std::size_t i = 0; i < routed.chosen.size(); ++i)
            picks.push_back({{"date", format_date(ds.test()[i].record.test_date)},
                             {"chosen", to_string(routed.chosen[i])},
                             {"best", to_string(ds.test()[i].label.label)}});
        j["test_routing"] = picks;
    }
    return j;
}

} // namespace turbid::meta

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "turbid/metamodel.hpp"
#include "turbid/synthetic.hpp"

using namespace turbid;
using namespace turbid::meta;

namespace {

forest::ForestParams small_forest() {
    forest::ForestParams p;
    p.n_trees = 200;
    return p;
}

} // namespace

TEST(Label, StrictMinimumAndTies) {
    auto m = label_best_model(10, 12, 15, 13);
    EXPECT_EQ(m.label, ModelTag::Arima);
    EXPECT_EQ(m.errors, (std::array<double, 3>{2, 5, 3}));
    EXPECT_EQ(label_best_model(10, 12, 15, 8).label, ModelTag::Arima);
    EXPECT_EQ(label_best_model(10, 13, 8, 12).label, ModelTag::Lstm);
    EXPECT_EQ(label_best_model(10, 13, 7, 9).label, ModelTag::Gam);
    EXPECT_EQ(label_best_model(10, 20, 9, 11).label, ModelTag::Lstm); // LSTM before GAM
    EXPECT_THROW(label_best_model(10, NAN, 1, 1), std::invalid_argument);
    EXPECT_THROW(label_best_model(INFINITY, 1, 1, 1), std::invalid_argument);
}

TEST(Label, AttainsMinimumProperty) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 1000; ++i) {
        const auto m = label_best_model(u(rng), u(rng), u(rng), u(rng));
        EXPECT_EQ(m.errors[static_cast<std::size_t>(m.label)], *std::min_element(m.errors.begin(), m.errors.end()));
        for (double e : m.errors) EXPECT_GE(e, 0.0);
    }
}

TEST(Split, Sizes) {
    EXPECT_EQ(split_point(156), 110u);
    for (std::size_t n = 1; n < 1000; ++n) {
        const std::size_t tr = split_point(n);
        EXPECT_EQ(tr, static_cast<std::size_t>(std::ceil(0.7 * double(n) - 1e-9)));
        EXPECT_LE(tr, n);
    }
}

TEST(Dataset, BuildsChronologicalSplit) {
    const auto mb = synthetic::make_meta_benchmark();
    ASSERT_EQ(mb.records.size(), 156u);
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    EXPECT_EQ(ds.rows.size(), 156u);
    EXPECT_EQ(ds.train().size(), 110u);
    EXPECT_EQ(ds.test().size(), 46u);
    for (std::size_t i = 1; i < ds.rows.size(); ++i) EXPECT_LT(ds.rows[i - 1].record.test_date, ds.rows[i].record.test_date);

    auto shuffled = mb.records;
    std::mt19937_64 rng(3);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto ds2 = build_meta_dataset(shuffled, mb.frame, "turbidity");
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        EXPECT_EQ(ds.rows[i].x(), ds2.rows[i].x());
        EXPECT_EQ(ds.rows[i].label.label, ds2.rows[i].label.label);
    }
    EXPECT_THROW(build_meta_dataset(std::span(mb.records).first(10), mb.frame, "turbidity"), std::invalid_argument);
}

TEST(Dataset, HistoryShortfallAndMismatch) {
    const auto mb = synthetic::make_meta_benchmark();
    auto recs = mb.records;
    MetaOptions opt;
    opt.window_len = 250;
    EXPECT_THROW(build_meta_dataset(recs, mb.frame, "turbidity", opt), DataError);
    recs[5].actual += 1.0;
    EXPECT_THROW(build_meta_dataset(recs, mb.frame, "turbidity"), DataError);
}

TEST(Dataset, CovariateExtension) {
    const auto mb = synthetic::make_meta_benchmark();
    MetaOptions opt;
    opt.covariate_features = {"turbidity"};
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity", opt);
    EXPECT_EQ(ds.feature_names.size(), tsfeat::FeatureVector::kSize + 2);
    EXPECT_EQ(ds.rows[0].x().size(), tsfeat::FeatureVector::kSize + 2);
}

TEST(Routing, OracleIsPointwiseMinimum) {
    const auto mb = synthetic::make_meta_benchmark(11);
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    const auto oracle = oracle_forecast(ds.rows);
    double best_single = INFINITY;
    for (ModelTag t : kAllModels) best_single = std::min(best_single, constant_forecast(ds.rows, t).metrics.rmse);
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& e = ds.rows[i].label.errors;
        EXPECT_NEAR(std::abs(oracle.signed_errors[i]), *std::min_element(e.begin(), e.end()), 1e-12);
    }
    EXPECT_LE(oracle.metrics.rmse, best_single + 1e-12);
}

TEST(Routing, ConstantRoutingMatchesModelMetrics) {
    const auto mb = synthetic::make_meta_benchmark(12);
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    std::vector<FoldRecord> test;
    for (const auto& r : ds.test()) test.push_back(r.record);
    for (ModelTag t : kAllModels) {
        const auto a = constant_forecast(ds.test(), t).metrics, b = compute_metrics(test, t);
        EXPECT_EQ(a.rmse, b.rmse);
        EXPECT_EQ(a.mae, b.mae);
        EXPECT_EQ(a.std_dev, b.std_dev);
        EXPECT_EQ(a.error_min, b.error_min);
        EXPECT_EQ(a.error_max, b.error_max);
    }
}

TEST(Meta, LearnsFeatureRule) {
    const auto mb = synthetic::make_meta_benchmark(13);
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    const auto mm = train_meta(ds, small_forest());
    EXPECT_GE(mm.test_accuracy, 0.85);
    const auto routed = meta_forecast(mm, ds.test());
    const auto oracle = oracle_forecast(ds.test());
    double best = INFINITY;
    for (ModelTag t : kAllModels) best = std::min(best, constant_forecast(ds.test(), t).metrics.rmse);
    EXPECT_LE(routed.metrics.rmse, 1.05 * best);
    EXPECT_GE(routed.metrics.rmse, oracle.metrics.rmse - 1e-12);
    int total = 0;
    for (const auto& row : mm.test_confusion)
        for (int v : row) total += v;
    EXPECT_EQ(total, 46);

    const auto again = train_meta(ds, small_forest());
    EXPECT_EQ(meta_forecast(again, ds.test()).chosen, routed.chosen);
    const auto rep = meta_report(ds, mm);
    EXPECT_EQ(rep["train_rows"], 110);
    EXPECT_TRUE(rep["test_metrics"].contains("Meta-model"));
}

TEST(Meta, ShuffledLabelsNearBaseline) {
    const auto mb = synthetic::make_meta_benchmark(14);
    auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    std::vector<ModelTag> labs;
    for (const auto& r : ds.rows) labs.push_back(r.label.label);
    std::mt19937_64 rng(5);
    std::shuffle(labs.begin(), labs.end(), rng);
    for (std::size_t i = 0; i < ds.rows.size(); ++i) ds.rows[i].label.label = labs[i];
    const auto mm = train_meta(ds, small_forest());
    const auto dist = label_distribution(ds.test());
    const double baseline = *std::max_element(dist.begin(), dist.end());
    EXPECT_NEAR(mm.test_accuracy, baseline, 0.15);
}

TEST(Meta, SingleClassRejected) {
    const auto mb = synthetic::make_meta_benchmark(15);
    auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    for (auto& r : ds.rows) r.label.label = ModelTag::Gam;
    EXPECT_THROW(train_meta(ds, small_forest()), std::invalid_argument);
}

TEST(Meta, MisalignedFeaturesRejected) {
    const auto mb = synthetic::make_meta_benchmark(16);
    const auto ds = build_meta_dataset(mb.records, mb.frame, "turbidity");
    const auto mm = train_meta(ds, small_forest());
    std::vector<FoldRecord> recs;
    std::vector<tsfeat::FeatureVector> fvs;
    for (const auto& r : ds.test()) recs.push_back(r.record), fvs.push_back(r.features);
    EXPECT_EQ(meta_forecast(mm, recs, fvs).chosen, meta_forecast(mm, ds.test()).chosen);
    std::rotate(fvs.begin(), fvs.begin() + 1, fvs.end());
    EXPECT_THROW(meta_forecast(mm, recs, fvs), DataError);
}

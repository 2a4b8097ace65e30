#pragma once

// Rolling-origin cross-validation over the three forecasters and the
// staged pipeline (ingest -> cv -> features -> meta -> report) that the
// command-line tool drives.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "turbid/arima.hpp"
#include "turbid/common.hpp"
#include "turbid/config.hpp"
#include "turbid/dataset.hpp"
#include "turbid/folds.hpp"
#include "turbid/forest.hpp"
#include "turbid/gam.hpp"
#include "turbid/lstm.hpp"
#include "turbid/metamodel.hpp"
#include "turbid/svg.hpp"
#include "turbid/tsfeat.hpp"

namespace turbid::harness {

/// Error carrying the pipeline stage it came from.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Process exit code for a failure in `stage`.
inline int exit_code_for(std::string_view stage) {
    if (stage == "config") return 2;
    if (stage == "ingest") return 3;
    if (stage == "cv") return 4;
    if (stage == "features") return 5;
    if (stage == "meta") return 6;
    if (stage == "report") return 7;
    return 1;
}

// ---------------------------------------------------------------- forecasters

class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual ModelTag tag() const = 0;
    /// Called once with the first training window before any fold.
    virtual void prepare(const TimeSeriesFrame& /*first_window*/) {}
    /// Fits on `train` and forecasts the single row of `next`, which holds
    /// the covariates (never the target) of the test day.
    virtual ForecastPoint fit_predict(const TimeSeriesFrame& train, const TimeSeriesFrame& next, int fold) = 0;
    virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

namespace detail {
inline std::vector<double> row_values(const TimeSeriesFrame& row, std::span<const std::string> names) {
    std::vector<double> out;
    for (const auto& n : names) out.push_back(row.column(n)[0]);
    return out;
}
} // namespace detail

class ArimaForecaster : public Forecaster {
public:
    ArimaForecaster(std::string target, std::vector<std::string> candidates, bool reselect_each_fold = false,
                    arima::SelectionOptions options = {})
        : target_(std::move(target)), candidates_(std::move(candidates)), reselect_(reselect_each_fold), options_(options) {}

    ModelTag tag() const override { return ModelTag::Arima; }

    void prepare(const TimeSeriesFrame& first) override {
        const auto sel = arima::select_best_dynreg(first, target_, candidates_, options_);
        order_ = sel.best.order;
        chosen_ = sel.best.covariates;
        selection_ = arima::to_json(sel);
    }

    ForecastPoint fit_predict(const TimeSeriesFrame& train, const TimeSeriesFrame& next, int fold) override {
        if (reselect_ && fold > 0) {
            const auto sel = arima::select_best_dynreg(train, target_, candidates_, options_);
            order_ = sel.best.order;
            chosen_ = sel.best.covariates;
        }
        const auto fit = arima::fit_dynamic_regression(train, target_, chosen_, order_, options_.fit);
        return arima::forecast_one_step(fit, detail::row_values(next, chosen_));
    }

    nlohmann::json describe() const override {
        nlohmann::json j = selection_;
        j["reselect_each_fold"] = reselect_;
        return j;
    }
    const arima::ArimaOrder& order() const { return order_; }
    const std::vector<std::string>& covariates() const { return chosen_; }

private:
    std::string target_;
    std::vector<std::string> candidates_;
    bool reselect_;
    arima::SelectionOptions options_;
    arima::ArimaOrder order_{};
    std::vector<std::string> chosen_;
    nlohmann::json selection_;
};

class GamForecaster : public Forecaster {
public:
    GamForecaster(std::string target, std::vector<std::string> candidates, gam::Band band = gam::Band::Prediction)
        : target_(std::move(target)), candidates_(std::move(candidates)), band_(band) {}

    ModelTag tag() const override { return ModelTag::Gam; }

    void prepare(const TimeSeriesFrame& first) override {
        const auto sel = gam::select_best_gam(first, target_, candidates_);
        specs_.clear();
        for (const auto& sm : sel.best.smooths) specs_.push_back(sm.spec);
        use_lags_ = sel.best.use_lags;
        selection_ = gam::to_json(sel.best);
    }

    ForecastPoint fit_predict(const TimeSeriesFrame& train, const TimeSeriesFrame& next, int) override {
        const auto fit = gam::fit_gam(train, target_, specs_, use_lags_);
        std::vector<std::string> names;
        for (const auto& s : specs_) names.push_back(s.covariate);
        const auto y = train.column(target_);
        return gam::forecast_one_step(fit, detail::row_values(next, names), y[y.size() - 1], y[y.size() - 2], band_);
    }

    nlohmann::json describe() const override {
        nlohmann::json j = selection_;
        j["band"] = band_ == gam::Band::Prediction ? "prediction" : "confidence";
        return j;
    }
    const std::vector<gam::SmoothSpec>& specs() const { return specs_; }

private:
    std::string target_;
    std::vector<std::string> candidates_;
    gam::Band band_;
    std::vector<gam::SmoothSpec> specs_;
    bool use_lags_ = true;
    nlohmann::json selection_;
};

class LstmForecaster : public Forecaster {
public:
    LstmForecaster(std::string target, std::vector<std::string> covariates, lstm::LstmParams params, bool warm_start = false)
        : target_(std::move(target)), covariates_(std::move(covariates)), params_(params), warm_(warm_start) {}

    ModelTag tag() const override { return ModelTag::Lstm; }

    ForecastPoint fit_predict(const TimeSeriesFrame& train, const TimeSeriesFrame& next, int fold) override {
        auto p = params_;
        p.seed = fold_seed(params_.seed, fold);
        const auto st = lstm::train_lstm(train, target_, covariates_, p, warm_ && last_ ? &*last_ : nullptr);
        if (warm_) last_ = st.net;
        const auto y = train.column(target_);
        return lstm::predict_one_step(st, detail::row_values(next, covariates_), y[y.size() - 1]);
    }

    /// Per-fold seed derived from the master seed (SplitMix64 step).
    static std::uint64_t fold_seed(std::uint64_t master, int fold) {
        std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(fold) + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    nlohmann::json describe() const override {
        return {{"covariates", covariates_}, {"units", params_.units},          {"epochs", params_.epochs},
                {"learning_rate", params_.learning_rate}, {"batch_size", params_.batch_size}, {"append_lag1", params_.append_lag1},
                {"master_seed", params_.seed}, {"warm_start", warm_}};
    }

private:
    std::string target_;
    std::vector<std::string> covariates_;
    lstm::LstmParams params_;
    bool warm_;
    std::optional<lstm::Network> last_;
};

// ---------------------------------------------------------------- rolling CV

struct CvOptions {
    std::size_t train_len = 200;
    std::optional<std::size_t> max_folds; ///< cap for quick runs
    std::function<void(int fold, int total)> progress;
};

/// Frame with `drop` removed.
inline TimeSeriesFrame without_column(const TimeSeriesFrame& f, std::string_view drop) {
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (const auto& n : f.names()) {
        if (n == drop) continue;
        names.push_back(n);
        auto c = f.column(n);
        cols.emplace_back(c.begin(), c.end());
    }
    return TimeSeriesFrame(f.dates(), std::move(names), std::move(cols));
}

/// Fold k trains on rows [k, k + train_len) and forecasts row k + train_len.
/// A forecaster that throws in a fold is replaced for that fold by the last
/// observed target value, and the fold is marked as a fallback.
inline std::vector<FoldRecord> rolling_cv(const TimeSeriesFrame& frame, std::string_view target,
                                          std::span<Forecaster* const> forecasters, const CvOptions& opt = {}) {
    const std::size_t n = frame.size();
    if (opt.train_len < 3) throw std::invalid_argument("rolling_cv: train_len must be at least 3");
    if (n <= opt.train_len)
        throw std::invalid_argument("rolling_cv: series length " + std::to_string(n) + " leaves no test row after train_len " +
                                    std::to_string(opt.train_len));
    const auto y = frame.column(target);
    std::size_t folds = n - opt.train_len;
    if (opt.max_folds) folds = std::min(folds, *opt.max_folds);

    const TimeSeriesFrame first = frame.slice(0, opt.train_len);
    for (auto* f : forecasters) f->prepare(first);

    std::vector<FoldRecord> out;
    out.reserve(folds);
    for (std::size_t k = 0; k < folds; ++k) {
        const std::size_t test = k + opt.train_len;
        const TimeSeriesFrame train = frame.slice(k, test);
        const TimeSeriesFrame next = without_column(frame.slice(test, test + 1), target);
        FoldRecord rec;
        rec.fold_index = static_cast<int>(k);
        rec.train_start = train.dates().front();
        rec.train_end = train.dates().back();
        rec.test_date = frame.dates()[test];
        rec.test_row = test;
        rec.actual = y[test];
        if (!(rec.train_end < rec.test_date)) throw std::logic_error("rolling_cv: training window overlaps the test day");
        for (auto* f : forecasters) {
            ModelResult res;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                res.forecast = f->fit_predict(train, next, rec.fold_index);
                if (!std::isfinite(res.forecast.mean)) throw FitError("non-finite forecast");
            } catch (const std::exception& e) {
                res.forecast = ForecastPoint{y[test - 1], std::nullopt, std::nullopt, f->tag()};
                res.fallback = true;
                res.note = e.what();
            }
            res.forecast.model = f->tag();
            res.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rec.set(f->tag(), std::move(res));
        }
        out.push_back(std::move(rec));
        if (opt.progress) opt.progress(static_cast<int>(k) + 1, static_cast<int>(folds));
    }
    return out;
}

// ---------------------------------------------------------------- pipeline

struct Paths {
    std::filesystem::path out;
    std::filesystem::path aligned() const { return out / "aligned.csv"; }
    std::filesystem::path folds() const { return out / "folds.csv"; }
    std::filesystem::path timings() const { return out / "timings.csv"; }
    std::filesystem::path selection() const { return out / "selection.json"; }
    std::filesystem::path features() const { return out / "features.csv"; }
    std::filesystem::path metrics() const { return out / "metrics.json"; }
    std::filesystem::path meta_report() const { return out / "meta_report.json"; }
    std::filesystem::path meta_forecasts() const { return out / "meta_forecasts.csv"; }
};

inline Paths paths_for(const Config& cfg) {
    Paths p{cfg.get_path("output_dir", "out")};
    std::filesystem::create_directories(p.out);
    return p;
}

namespace detail {

template <class F>
auto staged(const std::string& stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot write " + p.string());
    os << text;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return nlohmann::json::parse(in);
}

inline std::vector<FoldRecord> read_folds(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string() + " (run the cv stage first)");
    return read_folds_csv(in);
}

inline TimeSeriesFrame read_aligned(const Paths& paths) {
    if (!std::filesystem::exists(paths.aligned()))
        throw DataError("cannot open " + paths.aligned().string() + " (run the ingest stage first)");
    return read_frame_csv(paths.aligned());
}

inline std::vector<std::string> covariates(const Config& cfg) {
    auto c = cfg.get_list("covariates");
    if (c.empty()) throw DataError("config: covariates list is empty");
    return c;
}

inline lstm::LstmParams lstm_params(const Config& cfg) {
    lstm::LstmParams p;
    p.units = static_cast<int>(cfg.get_int("lstm.units", p.units));
    p.epochs = static_cast<int>(cfg.get_int("lstm.epochs", p.epochs));
    p.learning_rate = cfg.get_real("lstm.learning_rate", p.learning_rate);
    p.batch_size = static_cast<int>(cfg.get_int("lstm.batch_size", p.batch_size));
    p.append_lag1 = cfg.get_bool("lstm.append_lag1", p.append_lag1);
    p.shuffle = cfg.get_bool("lstm.shuffle", p.shuffle);
    p.seed = static_cast<std::uint64_t>(cfg.get_int("lstm.seed", cfg.get_int("seed", 42)));
    p.validate();
    return p;
}

inline forest::ForestParams forest_params(const Config& cfg) {
    forest::ForestParams p;
    p.n_trees = static_cast<int>(cfg.get_int("forest.n_trees", p.n_trees));
    p.mtry = static_cast<int>(cfg.get_int("forest.mtry", p.mtry));
    p.min_leaf = static_cast<int>(cfg.get_int("forest.min_leaf", p.min_leaf));
    if (cfg.has("forest.max_depth")) p.max_depth = static_cast<int>(cfg.get_int("forest.max_depth", 0));
    p.seed = static_cast<std::uint64_t>(cfg.get_int("forest.seed", cfg.get_int("seed", 42)));
    return p;
}

inline meta::MetaOptions meta_options(const Config& cfg) {
    meta::MetaOptions o;
    o.window_len = static_cast<std::size_t>(cfg.get_int("window_len", 30));
    o.min_records = static_cast<std::size_t>(cfg.get_int("meta.min_records", 40));
    if (cfg.get_bool("meta.covariate_features", false)) o.covariate_features = covariates(cfg);
    return o;
}

} // namespace detail

/// Reads every source listed under `sources`, aggregates sub-daily series
/// to daily means, aligns them, and writes aligned.csv.
inline TimeSeriesFrame stage_ingest(const Config& cfg) {
    return detail::staged("ingest", [&] {
        const auto paths = paths_for(cfg);
        const auto sources = cfg.get_list("sources");
        if (sources.empty()) throw DataError("config: no sources listed");
        std::vector<RawSeries> series;
        nlohmann::json report;
        report["sources"] = nlohmann::json::array();
        for (const auto& s : sources) {
            const auto src_cfg = Config::load(cfg.resolve(s));
            const auto schema = SourceSchema::from_config(src_cfg);
            auto raw = ingest_csv(src_cfg.get_path("file"), schema);
            const bool daily = raw.is_daily();
            report["sources"].push_back({{"variable", raw.variable},
                                         {"unit", std::string(to_string(raw.unit))},
                                         {"file", src_cfg.get_path("file").filename().string()},
                                         {"observations", raw.observations.size()},
                                         {"unparseable_rows", raw.unparseable_rows},
                                         {"aggregated_to_daily", !daily}});
            series.push_back(daily ? std::move(raw) : aggregate_daily(raw));
        }
        GapPolicy gp;
        gp.max_interpolated_gap = static_cast<std::size_t>(cfg.get_int("max_gap", 2));
        auto aligned = align_frame(series, gp);
        const auto target = cfg.get("target", "turbidity");
        if (!aligned.frame.has(target)) throw DataError("target '" + target + "' is not among the sources");
        for (const auto& c : detail::covariates(cfg))
            if (!aligned.frame.has(c)) throw DataError("covariate '" + c + "' is not among the sources");
        report["days"] = aligned.frame.size();
        report["start"] = format_date(aligned.frame.dates().front());
        report["end"] = format_date(aligned.frame.dates().back());
        report["interpolated_cells"] = aligned.filled;
        std::ofstream os(paths.aligned(), std::ios::binary);
        write_frame_csv(os, aligned.frame);
        detail::write_text(paths.out / "ingest_report.json", report.dump(2) + "\n");
        return aligned.frame;
    });
}

inline nlohmann::json cv_metrics_json(std::span<const FoldRecord> records) {
    nlohmann::json table, coverage;
    for (ModelTag t : kAllModels) {
        auto m = to_json(compute_metrics(records, t));
        int fb = 0;
        for (const auto& r : records) fb += r.result(t)->fallback;
        m["fallback_folds"] = fb;
        table[std::string(to_string(t))] = m;
        coverage[std::string(to_string(t))] = to_json(ci_coverage(records, t));
    }
    return {{"cv_metrics", table}, {"coverage", coverage}};
}

inline std::vector<FoldRecord> stage_cv(const Config& cfg, std::optional<TimeSeriesFrame> frame = std::nullopt) {
    return detail::staged("cv", [&] {
        const auto paths = paths_for(cfg);
        const TimeSeriesFrame f = frame ? *frame : detail::read_aligned(paths);
        const auto target = cfg.get("target", "turbidity");
        const auto covs = detail::covariates(cfg);
        ArimaForecaster arima_f(target, covs, cfg.get_bool("arima.reselect_each_fold", false));
        const auto band = cfg.get("gam.band", "prediction");
        if (band != "prediction" && band != "confidence") throw DataError("config: gam.band must be prediction or confidence");
        GamForecaster gam_f(target, covs, band == "prediction" ? gam::Band::Prediction : gam::Band::Confidence);
        LstmForecaster lstm_f(target, covs, detail::lstm_params(cfg), cfg.get_bool("lstm.warm_start", false));
        std::vector<Forecaster*> fs{&arima_f, &lstm_f, &gam_f};
        CvOptions opt;
        opt.train_len = static_cast<std::size_t>(cfg.get_int("train_len", 200));
        if (cfg.has("max_folds")) opt.max_folds = static_cast<std::size_t>(cfg.get_int("max_folds", 0));
        auto records = rolling_cv(f, target, fs, opt);
        {
            std::ofstream os(paths.folds(), std::ios::binary);
            write_folds_csv(os, records);
            std::ofstream ts(paths.timings(), std::ios::binary);
            write_timings_csv(ts, records);
        }
        nlohmann::json sel{{"ARIMA", arima_f.describe()}, {"GAM", gam_f.describe()}, {"LSTM", lstm_f.describe()},
                           {"train_len", opt.train_len}, {"folds", records.size()}};
        nlohmann::json notes = nlohmann::json::array();
        for (const auto& r : records)
            for (ModelTag t : kAllModels)
                if (r.result(t)->fallback)
                    notes.push_back({{"fold", r.fold_index}, {"model", to_string(t)}, {"error", r.result(t)->note}});
        sel["fallbacks"] = notes;
        detail::write_text(paths.selection(), sel.dump(2) + "\n");
        detail::write_text(paths.metrics(), cv_metrics_json(records).dump(2) + "\n");
        return records;
    });
}

inline std::vector<tsfeat::FeatureVector> stage_features(const Config& cfg) {
    return detail::staged("features", [&] {
        const auto paths = paths_for(cfg);
        const auto frame = detail::read_aligned(paths);
        const auto records = detail::read_folds(paths.folds());
        const auto target = cfg.get("target", "turbidity");
        const auto window = static_cast<std::size_t>(cfg.get_int("window_len", 30));
        std::vector<std::size_t> ts;
        for (const auto& r : records) {
            const auto off = (r.test_date - frame.dates().front()).count();
            if (off < 0 || static_cast<std::size_t>(off) >= frame.size()) throw DataError("fold date outside the aligned series");
            ts.push_back(static_cast<std::size_t>(off));
        }
        auto fv = tsfeat::extract_features(frame, target, ts, window);
        std::ofstream os(paths.features(), std::ios::binary);
        tsfeat::write_feature_csv(os, fv);
        return fv;
    });
}

struct MetaOutcome {
    meta::MetaDataset dataset;
    meta::MetaModel model;
    nlohmann::json report;
};

inline MetaOutcome stage_meta(const Config& cfg) {
    return detail::staged("meta", [&] {
        const auto paths = paths_for(cfg);
        const auto frame = detail::read_aligned(paths);
        const auto records = detail::read_folds(paths.folds());
        MetaOutcome mo;
        mo.dataset = meta::build_meta_dataset(records, frame, cfg.get("target", "turbidity"), detail::meta_options(cfg));
        mo.model = meta::train_meta(mo.dataset, detail::forest_params(cfg));
        mo.report = meta::meta_report(mo.dataset, mo.model);
        detail::write_text(paths.meta_report(), mo.report.dump(2) + "\n");
        const auto routed = meta::meta_forecast(mo.model, mo.dataset.test());
        std::ofstream os(paths.meta_forecasts(), std::ios::binary);
        os << "test_date,actual,chosen,best,meta_mean\n";
        for (std::size_t i = 0; i < routed.chosen.size(); ++i) {
            const auto& row = mo.dataset.test()[i];
            os << format_date(row.record.test_date) << ',' << format_real(row.record.actual) << ',' << to_string(routed.chosen[i])
               << ',' << to_string(row.label.label) << ',' << format_real(routed.forecasts[i].mean) << '\n';
        }
        return mo;
    });
}

/// Optional `reference.<model>_rmse` keys hold externally published values
/// to compare against; missing keys are simply not compared.
inline nlohmann::json reference_comparison(const Config& cfg, const nlohmann::json& metrics) {
    nlohmann::json out = nlohmann::json::object();
    const double tol = cfg.get_real("reference.tolerance", 0.30);
    for (ModelTag t : kAllModels) {
        const std::string key = "reference." + lower_name(t) + "_rmse";
        if (!cfg.has(key)) continue;
        const double ref = cfg.get_real(key, 0.0);
        const double got = metrics["cv_metrics"][std::string(to_string(t))]["rmse"].get<double>();
        out[std::string(to_string(t))] = {{"reference_rmse", ref}, {"rmse", got}, {"relative_difference", (got - ref) / ref},
                                          {"within_tolerance", std::abs(got - ref) <= tol * ref}};
    }
    if (metrics.contains("test_metrics")) {
        const auto& tm = metrics["test_metrics"];
        double best = std::numeric_limits<double>::infinity();
        for (ModelTag t : kAllModels) best = std::min(best, tm[std::string(to_string(t))]["rmse"].get<double>());
        const double m = tm["Meta-model"]["rmse"].get<double>();
        out["meta_below_best_single"] = {{"meta_rmse", m}, {"best_single_rmse", best}, {"holds", m < best}};
        if (cfg.has("reference.meta_rmse")) out["meta_reference_rmse"] = cfg.get_real("reference.meta_rmse", 0.0);
    }
    return out;
}

inline nlohmann::json stage_report(const Config& cfg) {
    return detail::staged("report", [&] {
        const auto paths = paths_for(cfg);
        const auto frame = detail::read_aligned(paths);
        const auto records = detail::read_folds(paths.folds());
        if (records.empty()) throw DataError("folds.csv has no rows");
        nlohmann::json metrics = cv_metrics_json(records);
        metrics["run"] = {{"seed", cfg.get_int("seed", 42)},
                          {"train_len", cfg.get_int("train_len", 200)},
                          {"window_len", cfg.get_int("window_len", 30)},
                          {"folds", records.size()}};
        if (std::filesystem::exists(paths.meta_report())) {
            const auto mr = detail::read_json(paths.meta_report());
            if (mr.contains("test_metrics")) metrics["test_metrics"] = mr["test_metrics"];
            metrics["label_distribution"] = mr["label_distribution"];
        }
        auto refs = reference_comparison(cfg, metrics);
        if (!refs.empty()) metrics["reference_comparison"] = refs;
        detail::write_text(paths.metrics(), metrics.dump(2) + "\n");
        {
            std::ofstream os(paths.out / "metric_tables.csv", std::ios::binary);
            os << "split,model,n,rmse,mae,std_dev,error_min,error_max\n";
            for (const char* split : {"cv_metrics", "test_metrics"}) {
                if (!metrics.contains(split)) continue;
                for (const auto& [model, m] : metrics[split].items())
                    os << (std::string_view(split) == "cv_metrics" ? "all_folds" : "meta_test") << ',' << model << ','
                       << m["n"].get<int>() << ',' << format_real(m["rmse"].get<double>()) << ',' << format_real(m["mae"].get<double>())
                       << ',' << format_real(m["std_dev"].get<double>()) << ',' << format_real(m["error_range"][0].get<double>()) << ','
                       << format_real(m["error_range"][1].get<double>()) << '\n';
            }
        }

        std::vector<std::string> dates;
        std::vector<double> actual;
        for (const auto& r : records) dates.push_back(format_date(r.test_date)), actual.push_back(r.actual);
        const std::string unit = cfg.get("target_unit", "NTU");
        std::vector<std::string> labels;
        std::vector<std::vector<double>> errors, preds;
        for (ModelTag t : kAllModels) {
            svg::Series obs{"observed", actual, {}, {}};
            svg::Series fc{std::string(to_string(t)) + " forecast", {}, {}, {}};
            std::vector<double> lo, hi, err;
            bool bands = true;
            for (const auto& r : records) {
                const auto* m = r.result(t);
                fc.y.push_back(m->forecast.mean);
                err.push_back(r.signed_error(t));
                bands = bands && m->forecast.has_interval();
                lo.push_back(m->forecast.lower95.value_or(m->forecast.mean));
                hi.push_back(m->forecast.upper95.value_or(m->forecast.mean));
            }
            if (bands) fc.lower = lo, fc.upper = hi;
            const std::vector<svg::Series> series{obs, fc};
            detail::write_text(paths.out / ("forecast_" + lower_name(t) + ".svg"),
                               svg::line_chart(std::string(to_string(t)) + ": one-step forecasts", unit, dates, series));
            labels.emplace_back(to_string(t));
            errors.push_back(std::move(err));
            preds.push_back(std::move(fc.y));
        }
        detail::write_text(paths.out / "error_density.svg", svg::density_chart("Forecast error density", "observed - forecast (" + unit + ")", labels, errors));
        detail::write_text(paths.out / "scatter.svg", svg::scatter_chart("Observed vs predicted", actual, labels, preds));
        if (std::filesystem::exists(paths.meta_forecasts())) {
            std::ifstream in(paths.meta_forecasts());
            const auto tbl = csv::read(in);
            std::vector<std::string> d;
            std::vector<double> a, m;
            for (const auto& row : tbl.rows) d.push_back(row[0]), a.push_back(std::stod(row[1])), m.push_back(std::stod(row[4]));
            if (!d.empty()) {
                const std::vector<svg::Series> s{{"observed", a, {}, {}}, {"meta-model", m, {}, {}}};
                detail::write_text(paths.out / "forecast_meta.svg", svg::line_chart("Meta-model routed forecasts (test split)", unit, d, s));
            }
        }
        (void)frame;
        return metrics;
    });
}

/// All stages in order. Returns the final metrics bundle.
inline nlohmann::json run_pipeline(const Config& cfg, std::ostream* log = nullptr) {
    auto say = [&](const std::string& s) {
        if (log) *log << s << std::endl;
    };
    const auto frame = stage_ingest(cfg);
    say("ingest: " + std::to_string(frame.size()) + " days");
    const auto records = stage_cv(cfg, frame);
    say("cv: " + std::to_string(records.size()) + " folds");
    stage_features(cfg);
    say("features: done");
    const auto mo = stage_meta(cfg);
    say("meta: " + std::to_string(mo.dataset.train().size()) + " train / " + std::to_string(mo.dataset.test().size()) + " test rows");
    auto metrics = stage_report(cfg);
    say("report: " + paths_for(cfg).metrics().string());
    return metrics;
}

} // namespace turbid::harness

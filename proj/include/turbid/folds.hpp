#pragma once

// Per-fold forecast records and the error summaries computed from them.

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "turbid/common.hpp"
#include "turbid/csv.hpp"

namespace turbid {

struct ModelResult {
    ForecastPoint forecast;
    double abs_error = 0.0;
    double fit_seconds = 0.0;
    bool fallback = false; ///< fit failed; forecast is the last observed value
    std::string note;
};

struct FoldRecord {
    int fold_index = 0;
    Date train_start{}, train_end{}, test_date{};
    std::size_t test_row = 0; ///< row of the test day in the source frame
    double actual = 0.0;
    std::array<std::optional<ModelResult>, 3> results;

    const ModelResult* result(ModelTag tag) const {
        const auto& r = results[static_cast<std::size_t>(tag)];
        return r ? &*r : nullptr;
    }
    /// actual - forecast
    double signed_error(ModelTag tag) const {
        const auto* r = result(tag);
        if (!r) throw std::invalid_argument("fold " + std::to_string(fold_index) + " has no " + std::string(to_string(tag)) + " result");
        return actual - r->forecast.mean;
    }
    void set(ModelTag tag, ModelResult r) {
        r.abs_error = std::abs(actual - r.forecast.mean);
        results[static_cast<std::size_t>(tag)] = std::move(r);
    }
};

struct MetricSummary {
    std::size_t n = 0;
    double rmse = 0.0, mae = 0.0, std_dev = 0.0;
    double error_min = 0.0, error_max = 0.0;
};

inline MetricSummary summarize_errors(std::span<const double> signed_errors) {
    if (signed_errors.empty()) throw std::invalid_argument("compute_metrics: no records");
    MetricSummary m;
    m.n = signed_errors.size();
    double sq = 0.0, ab = 0.0, sum = 0.0;
    m.error_min = std::numeric_limits<double>::infinity();
    m.error_max = -std::numeric_limits<double>::infinity();
    for (double e : signed_errors) {
        sq += e * e;
        ab += std::abs(e);
        sum += e;
        m.error_min = std::min(m.error_min, e);
        m.error_max = std::max(m.error_max, e);
    }
    const double n = static_cast<double>(m.n);
    m.rmse = std::sqrt(sq / n);
    m.mae = ab / n;
    if (m.n > 1) {
        const double mean = sum / n;
        double ss = 0.0;
        for (double e : signed_errors) ss += (e - mean) * (e - mean);
        m.std_dev = std::sqrt(ss / (n - 1.0));
    }
    return m;
}

inline MetricSummary compute_metrics(std::span<const FoldRecord> records, ModelTag tag) {
    std::vector<double> e;
    e.reserve(records.size());
    for (const auto& r : records) e.push_back(r.signed_error(tag));
    return summarize_errors(e);
}

struct Coverage {
    bool supported = false; ///< false when the model emits no intervals
    std::size_t n = 0;
    double inside = 0.0, above = 0.0, below = 0.0;
};

inline Coverage ci_coverage(std::span<const FoldRecord> records, ModelTag tag) {
    if (records.empty()) throw std::invalid_argument("ci_coverage: no records");
    Coverage c;
    std::size_t in = 0, up = 0, lo = 0;
    for (const auto& r : records) {
        const auto* m = r.result(tag);
        if (!m) throw std::invalid_argument("ci_coverage: missing result");
        if (!m->forecast.has_interval()) return Coverage{};
        if (r.actual > *m->forecast.upper95) ++up;
        else if (r.actual < *m->forecast.lower95) ++lo;
        else ++in;
    }
    c.supported = true;
    c.n = records.size();
    const double n = static_cast<double>(c.n);
    c.inside = double(in) / n;
    c.above = double(up) / n;
    c.below = double(lo) / n;
    return c;
}

inline nlohmann::json to_json(const MetricSummary& m) {
    return {{"n", m.n}, {"rmse", m.rmse}, {"mae", m.mae}, {"std_dev", m.std_dev},
            {"error_range", {m.error_min, m.error_max}}};
}

inline nlohmann::json to_json(const Coverage& c) {
    if (!c.supported) return {{"supported", false}};
    return {{"supported", true}, {"n", c.n}, {"inside", c.inside}, {"above", c.above}, {"below", c.below}};
}

inline std::string lower_name(ModelTag tag) {
    std::string s(to_string(tag));
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

/// Fold table: one row per fold, per-model mean / bounds / absolute error.
/// Missing bounds are written as NA. Timings are kept out of this file so
/// identical runs produce identical bytes.
inline void write_folds_csv(std::ostream& os, std::span<const FoldRecord> records) {
    os << "fold,train_start,train_end,test_date,actual";
    for (ModelTag t : kAllModels) {
        const auto m = lower_name(t);
        os << ',' << m << "_mean," << m << "_lower," << m << "_upper," << m << "_abs_error," << m << "_fallback";
    }
    os << '\n';
    const double na = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : records) {
        os << r.fold_index << ',' << format_date(r.train_start) << ',' << format_date(r.train_end) << ','
           << format_date(r.test_date) << ',' << format_real(r.actual);
        for (ModelTag t : kAllModels) {
            const auto* m = r.result(t);
            if (!m) {
                os << ",NA,NA,NA,NA,NA";
                continue;
            }
            os << ',' << format_real(m->forecast.mean) << ',' << format_real(m->forecast.lower95.value_or(na)) << ','
               << format_real(m->forecast.upper95.value_or(na)) << ',' << format_real(m->abs_error) << ','
               << (m->fallback ? 1 : 0);
        }
        os << '\n';
    }
}

inline void write_timings_csv(std::ostream& os, std::span<const FoldRecord> records) {
    os << "fold";
    for (ModelTag t : kAllModels) os << ',' << lower_name(t) << "_seconds";
    os << '\n';
    for (const auto& r : records) {
        os << r.fold_index;
        for (ModelTag t : kAllModels) {
            const auto* m = r.result(t);
            os << ',' << (m ? format_real(m->fit_seconds) : "NA");
        }
        os << '\n';
    }
}

/// Reads a table written by write_folds_csv. Fit timings are not stored
/// there and come back as zero.
inline std::vector<FoldRecord> read_folds_csv(std::istream& in) {
    const auto table = csv::read(in);
    auto col = [&](const std::string& name) {
        const auto c = table.column(name);
        if (c < 0) throw DataError("folds csv: missing column " + name);
        return static_cast<std::size_t>(c);
    };
    auto num = [](const std::string& s) -> std::optional<double> {
        if (s == "NA" || s.empty()) return std::nullopt;
        return std::stod(s);
    };
    auto date = [](const std::string& s) {
        auto d = parse_date(s);
        if (!d) throw DataError("folds csv: bad date " + s);
        return *d;
    };
    std::vector<FoldRecord> out;
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("folds csv: ragged row");
        FoldRecord r;
        r.fold_index = std::stoi(row[col("fold")]);
        r.train_start = date(row[col("train_start")]);
        r.train_end = date(row[col("train_end")]);
        r.test_date = date(row[col("test_date")]);
        r.actual = *num(row[col("actual")]);
        for (ModelTag t : kAllModels) {
            const auto m = lower_name(t);
            const auto mean = num(row[col(m + "_mean")]);
            if (!mean) continue;
            ModelResult res;
            res.forecast.model = t;
            res.forecast.mean = *mean;
            res.forecast.lower95 = num(row[col(m + "_lower")]);
            res.forecast.upper95 = num(row[col(m + "_upper")]);
            res.fallback = row[col(m + "_fallback")] == "1";
            r.set(t, res);
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace turbid

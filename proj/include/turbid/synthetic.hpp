#pragma once

// Synthetic inputs: a daily river-like dataset in the raw source formats,
// and a meta-benchmark whose best-model labels are functions of the window
// features by construction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "turbid/common.hpp"
#include "turbid/dataset.hpp"
#include "turbid/folds.hpp"
#include "turbid/stats.hpp"
#include "turbid/tsfeat.hpp"

namespace turbid::synthetic {

namespace detail {
inline double normal(std::mt19937_64& rng) { return std::normal_distribution<double>{}(rng); }
inline double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
} // namespace detail

// ---------------------------------------------------------------- hydrology

struct HydroOptions {
    int days = 356;
    Date start = make_date(2013, 1, 1);
    std::uint64_t seed = 2013;
    double missing_hourly_fraction = 0.02; ///< individual hourly readings dropped
    int gap_day = 150;                    ///< index of a day with no turbidity readings at all (-1 = none)
};

/// Daily truth used to build the raw files.
struct HydroTruth {
    std::vector<Date> dates;
    std::vector<double> rain, temperature, solar, level, turbidity;
};

inline HydroTruth simulate_hydrology(const HydroOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed);
    HydroTruth h;
    const int n = opt.days;
    double store = 0.0, ar_noise = 0.0;
    for (int d = 0; d < n; ++d) {
        h.dates.push_back(opt.start + std::chrono::days{d});
        const double season = std::cos(2.0 * std::numbers::pi * (d - 20) / 365.25); // southern summer peak in January
        const double wet = 0.25 + 0.15 * (1.0 - season);
        double rain = 0.0;
        if (detail::uniform(rng) < wet) rain = -std::log(1.0 - detail::uniform(rng)) * (3.0 + 2.0 * (1.0 - season));
        const double temp = 15.0 + 6.0 * season + 2.0 * detail::normal(rng) - 0.15 * rain;
        const double solar = std::max(1.0, 15.0 + 8.0 * season - 0.6 * rain + 1.5 * detail::normal(rng));
        store = 0.75 * store + rain;
        const double level = 0.3 + 0.012 * store + 0.08 * (1.0 - season) + 0.01 * detail::normal(rng);
        ar_noise = 0.6 * ar_noise + 1.2 * detail::normal(rng);
        const double turb = std::max(0.5, 8.0 + 0.9 * rain + 14.0 * std::max(0.0, level - 0.35) + 0.25 * (temp - 15.0) + ar_noise);
        h.rain.push_back(rain);
        h.temperature.push_back(temp);
        h.solar.push_back(solar);
        h.level.push_back(level);
        h.turbidity.push_back(turb);
    }
    return h;
}

/// Writes per-source CSVs in the raw formats plus source cfg files:
/// turbidity and level hourly (with dropped readings and one empty day),
/// rain / temperature / solar daily.
inline void write_hydrology(const std::filesystem::path& dir, const HydroOptions& opt = {}) {
    std::filesystem::create_directories(dir);
    const auto h = simulate_hydrology(opt);
    std::mt19937_64 rng(opt.seed ^ 0x5bd1e995ULL);
    auto hourly = [&](const std::string& file, const std::vector<double>& daily, double jitter, bool with_gap, double floor) {
        std::ofstream os(dir / file);
        os << "timestamp,value\n";
        for (std::size_t d = 0; d < daily.size(); ++d) {
            if (with_gap && static_cast<int>(d) == opt.gap_day) continue;
            const std::string day = format_date(h.dates[d]);
            for (int hr = 0; hr < 24; ++hr) {
                if (detail::uniform(rng) < opt.missing_hourly_fraction) continue;
                const double err = jitter * detail::normal(rng);
                char buf[8];
                std::snprintf(buf, sizeof buf, "%02d:00", hr);
                os << day << ' ' << buf << ',' << format_real(std::max(floor, std::round((daily[d] + err) * 1e4) / 1e4)) << '\n';
            }
        }
    };
    hourly("turbidity_hourly.csv", h.turbidity, 0.5, true, 0.0);
    hourly("level_hourly.csv", h.level, 0.005, false, 0.0);
    auto daily = [&](const std::string& file, const std::string& date_col, const std::string& value_col, const std::vector<double>& v) {
        std::ofstream os(dir / file);
        os << date_col << ',' << value_col << '\n';
        for (std::size_t d = 0; d < v.size(); ++d) os << format_date(h.dates[d]) << ',' << format_real(v[d]) << '\n';
    };
    daily("rain_daily.csv", "Date", "Rainfall (mm)", h.rain);
    daily("temperature_daily.csv", "Date", "Maximum temperature (Degree C)", h.temperature);
    daily("solar_daily.csv", "Date", "Daily global solar exposure (MJ/m*m)", h.solar);
    auto cfg = [&](const std::string& file, const std::string& csv, const std::string& dcol, const std::string& vcol,
                   const std::string& var, const std::string& unit) {
        std::ofstream os(dir / file);
        os << "file = " << csv << "\ndate_col = " << dcol << "\nvalue_col = " << vcol << "\nvariable = " << var
           << "\nunit = " << unit << '\n';
    };
    cfg("turbidity.cfg", "turbidity_hourly.csv", "timestamp", "value", "turbidity", "NTU");
    cfg("level.cfg", "level_hourly.csv", "timestamp", "value", "level", "m");
    cfg("rain.cfg", "rain_daily.csv", "Date", "Rainfall (mm)", "rain", "mm");
    cfg("temperature.cfg", "temperature_daily.csv", "Date", "Maximum temperature (Degree C)", "temperature", "degC");
    cfg("solar.cfg", "solar_daily.csv", "Date", "Daily global solar exposure (MJ/m*m)", "solar", "MJ/m2");
}

// ---------------------------------------------------------------- meta benchmark

struct MetaBenchmark {
    TimeSeriesFrame frame; ///< single "turbidity" column
    std::vector<FoldRecord> records;
    double trend_threshold = 0.0, acf_threshold = 0.0;
};

/// Regime-switching series; for each fold, the winning model is GAM when
/// the window's trend_strength is high, else ARIMA when its lag-1
/// autocorrelation is high, else LSTM. The winner's error is small and the
/// losers' errors are strictly larger, so best-model labels recover the
/// rule exactly.
inline MetaBenchmark make_meta_benchmark(std::uint64_t seed = 7, std::size_t n = 356, std::size_t train_len = 200,
                                         std::size_t window_len = 30) {
    std::mt19937_64 rng(seed);
    std::vector<double> y;
    y.reserve(n);
    double level = 20.0, ar = 0.0;
    while (y.size() < n) {
        const int regime = static_cast<int>(rng() % 3);
        const std::size_t len = 15 + rng() % 30;
        const double slope = (detail::uniform(rng) - 0.5) * 1.2;
        for (std::size_t k = 0; k < len && y.size() < n; ++k) {
            double v;
            if (regime == 0) {
                level += slope;
                v = level + 0.2 * detail::normal(rng);
            } else if (regime == 1) {
                ar = 0.85 * ar + detail::normal(rng);
                v = level + 2.0 * ar;
            } else {
                v = level + 2.0 * detail::normal(rng);
            }
            y.push_back(v);
        }
        level = std::clamp(level, 5.0, 60.0);
    }
    std::vector<Date> dates;
    for (std::size_t i = 0; i < n; ++i) dates.push_back(make_date(2013, 1, 1) + std::chrono::days{static_cast<int>(i)});

    MetaBenchmark mb{TimeSeriesFrame(dates, {"turbidity"}, {y}), {}, 0.0, 0.0};
    std::vector<tsfeat::FeatureVector> fv;
    for (std::size_t t = train_len; t < n; ++t) fv.push_back(tsfeat::extract_feature_vector(y, t, window_len));
    std::vector<double> ts;
    for (const auto& f : fv) ts.push_back(f.trend_strength);
    mb.trend_threshold = stats::quantile(ts, 0.6);
    std::vector<double> ac;
    for (const auto& f : fv)
        if (f.trend_strength <= mb.trend_threshold) ac.push_back(f.x_acf1);
    mb.acf_threshold = stats::quantile(ac, 0.5);

    for (std::size_t t = train_len; t < n; ++t) {
        const auto& f = fv[t - train_len];
        const ModelTag win = f.trend_strength > mb.trend_threshold ? ModelTag::Gam
                             : f.x_acf1 > mb.acf_threshold       ? ModelTag::Arima
                                                                 : ModelTag::Lstm;
        FoldRecord r;
        r.fold_index = static_cast<int>(t - train_len);
        r.train_start = dates[t - train_len];
        r.train_end = dates[t - 1];
        r.test_date = dates[t];
        r.test_row = t;
        r.actual = y[t];
        const double e_win = 0.05 + 0.3 * std::abs(detail::normal(rng));
        for (ModelTag m : kAllModels) {
            const double mag = m == win ? e_win : e_win + 1.0 + 2.0 * std::abs(detail::normal(rng));
            const double sign = detail::uniform(rng) < 0.5 ? -1.0 : 1.0;
            ModelResult res;
            res.forecast.model = m;
            res.forecast.mean = y[t] - sign * mag;
            if (m != ModelTag::Lstm) {
                res.forecast.lower95 = res.forecast.mean - 3.0;
                res.forecast.upper95 = res.forecast.mean + 3.0;
            }
            r.set(m, res);
        }
        mb.records.push_back(std::move(r));
    }
    return mb;
}

} // namespace turbid::synthetic

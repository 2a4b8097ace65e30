#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace turbid {

/// Raised when a numerical fit cannot produce a usable model
/// (non-convergence, singular design, constraint violation).
class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by ingestion and alignment on malformed or incompatible input.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The three forecaster families. The enumerator order is also the
/// tie-break order used whenever two models are equally good.
enum class ModelTag { Arima = 0, Lstm = 1, Gam = 2 };

inline constexpr std::array<ModelTag, 3> kAllModels{ModelTag::Arima, ModelTag::Lstm, ModelTag::Gam};

inline std::string_view to_string(ModelTag tag) {
    switch (tag) {
    case ModelTag::Arima: return "ARIMA";
    case ModelTag::Lstm: return "LSTM";
    case ModelTag::Gam: return "GAM";
    }
    return "?";
}

inline ModelTag model_tag_from_string(std::string_view s) {
    if (s == "ARIMA") return ModelTag::Arima;
    if (s == "LSTM") return ModelTag::Lstm;
    if (s == "GAM") return ModelTag::Gam;
    throw std::invalid_argument("unknown model tag: " + std::string(s));
}

/// One-step forecast. Interval bounds are absent for models that cannot
/// produce them (LSTM).
struct ForecastPoint {
    double mean = 0.0;
    std::optional<double> lower95;
    std::optional<double> upper95;
    ModelTag model = ModelTag::Arima;

    bool has_interval() const { return lower95.has_value() && upper95.has_value(); }
};

inline constexpr double kZ975 = 1.959963984540054;

// ---------------------------------------------------------------------------
// calendar dates

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
    return Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

/// Parses "YYYY-MM-DD" (anything after the day is ignored).
inline std::optional<Date> parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (s.size() < 10) return std::nullopt;
    std::string head(s.substr(0, 10));
    char tail = 0;
    if (std::sscanf(head.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

inline std::string format_date(Date date) {
    std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

/// Shortest decimal text that round-trips to the same double.
inline std::string format_real(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

} // namespace turbid

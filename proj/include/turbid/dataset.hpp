#pragma once

// Ingestion of raw sensor/weather CSV files, daily aggregation of sub-daily
// readings, and alignment of several daily series into one gap-free frame.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "turbid/common.hpp"
#include "turbid/config.hpp"
#include "turbid/csv.hpp"

namespace turbid {

enum class Unit { Ntu, Millimetre, Metre, DegreeC, MegajoulePerSquareMetre };

inline std::string_view to_string(Unit u) {
    switch (u) {
    case Unit::Ntu: return "NTU";
    case Unit::Millimetre: return "mm";
    case Unit::Metre: return "m";
    case Unit::DegreeC: return "degC";
    case Unit::MegajoulePerSquareMetre: return "MJ/m2";
    }
    return "?";
}

inline Unit unit_from_string(std::string_view s) {
    if (s == "NTU") return Unit::Ntu;
    if (s == "mm") return Unit::Millimetre;
    if (s == "m") return Unit::Metre;
    if (s == "degC") return Unit::DegreeC;
    if (s == "MJ/m2") return Unit::MegajoulePerSquareMetre;
    throw DataError("unsupported unit: " + std::string(s));
}

/// Date plus an optional time of day (minutes after midnight).
struct Timestamp {
    Date date;
    std::optional<int> minute;

    friend bool operator==(const Timestamp&, const Timestamp&) = default;
    friend bool operator<(const Timestamp& a, const Timestamp& b) {
        if (a.date != b.date) return a.date < b.date;
        return a.minute.value_or(-1) < b.minute.value_or(-1);
    }
};

/// Accepts `YYYY-MM-DD`, optionally followed by ` HH:MM[:SS]`, `THH:MM[:SS]`
/// or ` HH`.
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    auto date = parse_date(s);
    if (!date) return std::nullopt;
    Timestamp ts{*date, std::nullopt};
    if (s.size() == 10) return ts;
    if (s[10] != ' ' && s[10] != 'T') return std::nullopt;
    std::string rest(s.substr(11));
    int h = 0, m = 0, sec = 0;
    char extra = 0;
    const int got = std::sscanf(rest.c_str(), "%d:%d:%d%c", &h, &m, &sec, &extra);
    if (got < 1 || got > 3 || h < 0 || h > 23 || m < 0 || m > 59) return std::nullopt;
    ts.minute = h * 60 + m;
    return ts;
}

struct Observation {
    Timestamp time;
    std::optional<double> value; ///< empty when the reading is missing
};

struct RawSeries {
    std::string variable;
    Unit unit = Unit::Ntu;
    std::vector<Observation> observations;
    std::size_t unparseable_rows = 0;

    bool is_daily() const {
        for (std::size_t i = 0; i < observations.size(); ++i) {
            if (observations[i].time.minute) return false;
            if (i > 0 && observations[i].time.date == observations[i - 1].time.date) return false;
        }
        return true;
    }
};

/// Where the date/value columns live in a source file and what they hold.
struct SourceSchema {
    std::string date_col = "date";
    std::string value_col = "value";
    std::string variable;
    Unit unit = Unit::Ntu;

    static SourceSchema from_config(const Config& cfg) {
        SourceSchema s;
        s.date_col = cfg.get("date_col", s.date_col);
        s.value_col = cfg.get("value_col", s.value_col);
        s.variable = cfg.get("variable");
        s.unit = unit_from_string(cfg.get("unit"));
        return s;
    }
};

inline RawSeries ingest_csv(std::istream& in, const SourceSchema& schema) {
    const csv::Table table = csv::read(in);
    const auto dcol = table.column(schema.date_col);
    const auto vcol = table.column(schema.value_col);
    if (dcol < 0) throw DataError("date column '" + schema.date_col + "' not in header");
    if (vcol < 0) throw DataError("value column '" + schema.value_col + "' not in header");

    RawSeries series;
    series.variable = schema.variable;
    series.unit = schema.unit;
    for (const auto& row : table.rows) {
        const auto need = static_cast<std::size_t>(std::max(dcol, vcol));
        if (row.size() <= need) {
            ++series.unparseable_rows;
            continue;
        }
        auto ts = parse_timestamp(row[static_cast<std::size_t>(dcol)]);
        if (!ts) {
            ++series.unparseable_rows;
            continue;
        }
        const std::string cell = Config::trim(row[static_cast<std::size_t>(vcol)]);
        Observation obs{*ts, std::nullopt};
        if (!cell.empty() && cell != "NA" && cell != "NaN" && cell != "nan") {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
                ++series.unparseable_rows;
                continue;
            }
            obs.value = v;
        }
        series.observations.push_back(obs);
    }
    if (series.observations.empty()) throw DataError("no parseable rows for " + schema.variable);

    std::stable_sort(series.observations.begin(), series.observations.end(),
                     [](const Observation& a, const Observation& b) { return a.time < b.time; });

    // Collapse exact duplicates; refuse conflicting ones.
    std::vector<Observation> unique;
    for (const auto& obs : series.observations) {
        if (!unique.empty() && unique.back().time == obs.time) {
            auto& prev = unique.back();
            if (!prev.value) {
                prev.value = obs.value;
            } else if (obs.value && *obs.value != *prev.value) {
                throw DataError("conflicting duplicate timestamp " + format_date(obs.time.date) +
                                " in " + schema.variable);
            }
            continue;
        }
        unique.push_back(obs);
    }
    series.observations = std::move(unique);
    return series;
}

inline RawSeries ingest_csv(const std::filesystem::path& path, const SourceSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return ingest_csv(in, schema);
}

/// One value per calendar day: the mean of that day's non-missing readings,
/// or missing when the day has none.
inline RawSeries aggregate_daily(const RawSeries& series) {
    std::map<Date, std::pair<double, std::size_t>> days;
    for (const auto& obs : series.observations) {
        auto& [sum, count] = days[obs.time.date];
        if (obs.value) {
            sum += *obs.value;
            ++count;
        }
    }
    RawSeries out;
    out.variable = series.variable;
    out.unit = series.unit;
    out.unparseable_rows = series.unparseable_rows;
    out.observations.reserve(days.size());
    for (const auto& [date, acc] : days) {
        Observation obs{{date, std::nullopt}, std::nullopt};
        if (acc.second > 0) obs.value = acc.first / static_cast<double>(acc.second);
        out.observations.push_back(obs);
    }
    return out;
}

/// Contiguous daily table. All columns have the same length as `dates`.
class TimeSeriesFrame {
public:
    TimeSeriesFrame() = default;
    TimeSeriesFrame(std::vector<Date> dates, std::vector<std::string> names,
                    std::vector<std::vector<double>> columns)
        : dates_(std::move(dates)), names_(std::move(names)), columns_(std::move(columns)) {
        if (names_.size() != columns_.size()) throw DataError("frame: names/columns mismatch");
        for (const auto& c : columns_)
            if (c.size() != dates_.size()) throw DataError("frame: column length mismatch");
        for (std::size_t i = 1; i < dates_.size(); ++i)
            if (dates_[i] - dates_[i - 1] != std::chrono::days{1})
                throw DataError("frame: dates are not consecutive at " + format_date(dates_[i]));
    }

    std::size_t size() const { return dates_.size(); }
    const std::vector<Date>& dates() const { return dates_; }
    const std::vector<std::string>& names() const { return names_; }

    bool has(std::string_view name) const {
        return std::find(names_.begin(), names_.end(), name) != names_.end();
    }
    std::span<const double> column(std::string_view name) const {
        auto it = std::find(names_.begin(), names_.end(), name);
        if (it == names_.end()) throw DataError("frame has no column '" + std::string(name) + "'");
        return columns_[static_cast<std::size_t>(it - names_.begin())];
    }

    /// Rows [begin, end) as a new frame.
    TimeSeriesFrame slice(std::size_t begin, std::size_t end) const {
        if (begin > end || end > size()) throw std::out_of_range("frame slice out of range");
        std::vector<Date> d(dates_.begin() + static_cast<std::ptrdiff_t>(begin),
                            dates_.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<std::vector<double>> cols;
        for (const auto& c : columns_)
            cols.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(begin),
                              c.begin() + static_cast<std::ptrdiff_t>(end));
        return TimeSeriesFrame(std::move(d), names_, std::move(cols));
    }

private:
    std::vector<Date> dates_;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> columns_;
};

struct GapPolicy {
    std::size_t max_interpolated_gap = 2; ///< longest run of missing days filled
};

struct AlignedFrame {
    TimeSeriesFrame frame;
    std::size_t filled = 0; ///< number of interpolated cells
};

/// Restricts all series to their common date coverage and linearly
/// interpolates short interior gaps.
inline AlignedFrame align_frame(std::span<const RawSeries> series_list, const GapPolicy& policy = {}) {
    if (series_list.empty()) throw DataError("align_frame: no series");
    std::optional<Date> start, stop;
    std::vector<std::map<Date, double>> lookup(series_list.size());
    for (std::size_t s = 0; s < series_list.size(); ++s) {
        const auto& series = series_list[s];
        if (!series.is_daily())
            throw DataError("align_frame: " + series.variable + " is not daily; aggregate first");
        for (const auto& obs : series.observations)
            if (obs.value) lookup[s][obs.time.date] = *obs.value;
        if (lookup[s].empty()) throw DataError("align_frame: " + series.variable + " has no values");
        const Date first = lookup[s].begin()->first;
        const Date last = lookup[s].rbegin()->first;
        start = start ? std::max(*start, first) : first;
        stop = stop ? std::min(*stop, last) : last;
    }
    if (*start > *stop) throw DataError("align_frame: empty date intersection");

    std::vector<Date> dates;
    for (Date d = *start; d <= *stop; d += std::chrono::days{1}) dates.push_back(d);

    AlignedFrame out;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    for (std::size_t s = 0; s < series_list.size(); ++s) {
        std::vector<double> col(dates.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t i = 0; i < dates.size(); ++i)
            if (auto it = lookup[s].find(dates[i]); it != lookup[s].end()) col[i] = it->second;
        // Endpoints are present by construction of the intersection.
        std::size_t i = 0;
        while (i < col.size()) {
            if (!std::isnan(col[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < col.size() && std::isnan(col[j])) ++j;
            const std::size_t gap = j - i;
            if (gap > policy.max_interpolated_gap)
                throw DataError("align_frame: " + std::to_string(gap) + "-day gap in " +
                                series_list[s].variable + " starting " + format_date(dates[i]) +
                                " exceeds limit of " + std::to_string(policy.max_interpolated_gap));
            const double lo = col[i - 1], hi = col[j];
            for (std::size_t k = i; k < j; ++k)
                col[k] = lo + (hi - lo) * static_cast<double>(k - i + 1) / static_cast<double>(gap + 1);
            out.filled += gap;
            i = j;
        }
        names.push_back(series_list[s].variable);
        columns.push_back(std::move(col));
    }
    out.frame = TimeSeriesFrame(std::move(dates), std::move(names), std::move(columns));
    return out;
}

inline void write_frame_csv(std::ostream& os, const TimeSeriesFrame& frame) {
    os << "date";
    for (const auto& n : frame.names()) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < frame.size(); ++i) {
        os << format_date(frame.dates()[i]);
        for (const auto& n : frame.names()) os << ',' << format_real(frame.column(n)[i]);
        os << '\n';
    }
}

inline TimeSeriesFrame read_frame_csv(std::istream& in) {
    const csv::Table table = csv::read(in);
    if (table.header.empty() || table.header[0] != "date")
        throw DataError("frame csv: first column must be 'date'");
    std::vector<Date> dates;
    std::vector<std::string> names(table.header.begin() + 1, table.header.end());
    std::vector<std::vector<double>> cols(names.size());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw DataError("frame csv: ragged row");
        auto d = parse_date(row[0]);
        if (!d) throw DataError("frame csv: bad date '" + row[0] + "'");
        dates.push_back(*d);
        for (std::size_t c = 0; c < names.size(); ++c) cols[c].push_back(std::stod(row[c + 1]));
    }
    return TimeSeriesFrame(std::move(dates), std::move(names), std::move(cols));
}

inline TimeSeriesFrame read_frame_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_frame_csv(in);
}

} // namespace turbid

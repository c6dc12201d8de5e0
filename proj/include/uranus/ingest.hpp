#pragma once

// Loading of per-sensor CSV streams and drone flight logs, and the
// timestamp-indexed merge that produces one fused table per scenario.
//
// On-disk layout of a dataset root:
//
//   <root>/Scenario 1.1/alvira.csv
//                       arcus.csv
//                       diana.csv
//                       venus.csv
//                       drone_log.csv      (training scenarios only)
//
// Any directory named "Scenario <n>" or "Scenario <n>.<m>" is a scenario.

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <tuple>
#include <vector>

#include "uranus/core.hpp"
#include "uranus/csv.hpp"

namespace uranus {

namespace fs = std::filesystem;

using SensorStreams = std::array<std::vector<SensorReading>, 4>;

struct MergePolicy {
    std::int64_t tolerance_ms = 1000;
};

/// Ground-truth values attached to a fused row.
struct TargetRow {
    double latitude = 0.0;
    double longitude = 0.0;
    double speed = 0.0;
    double altitude = 0.0;
    DroneType type = DroneType::MavicPro;
};

inline constexpr std::array<std::string_view, 5> kTargetNames{"latitude", "longitude", "speed", "altitude",
                                                              "drone_type"};

/// Timestamp-indexed table of sensor feature cells. Cell (i, j) is absent
/// when the sensor behind column j had no reading within tolerance of row i.
struct FusedFrame {
    std::vector<std::string> columns;
    std::vector<Timestamp> timestamps;
    std::vector<std::vector<std::optional<double>>> cells;
    std::optional<std::vector<TargetRow>> targets;
    /// Per row and sensor, the index of the contributing reading in the
    /// sorted stream handed to merge_frames.
    std::vector<std::array<std::optional<std::size_t>, 4>> provenance;

    [[nodiscard]] std::size_t row_count() const { return timestamps.size(); }
    [[nodiscard]] bool empty() const { return timestamps.empty(); }
    [[nodiscard]] std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        return std::nullopt;
    }
    [[nodiscard]] std::vector<std::optional<double>> column_values(std::size_t j) const {
        std::vector<std::optional<double>> out;
        out.reserve(cells.size());
        for (const auto& row : cells) out.push_back(row[j]);
        return out;
    }
};

/// Appends the rows of `more` to `frame`. Column lists must agree.
inline void append_rows(FusedFrame& frame, const FusedFrame& more) {
    if (frame.columns.empty() && frame.empty()) {
        frame = more;
        return;
    }
    if (frame.columns != more.columns) throw DataError("cannot concatenate frames with different columns");
    if (frame.targets.has_value() != more.targets.has_value())
        throw DataError("cannot concatenate training and test frames");
    frame.timestamps.insert(frame.timestamps.end(), more.timestamps.begin(), more.timestamps.end());
    frame.cells.insert(frame.cells.end(), more.cells.begin(), more.cells.end());
    frame.provenance.insert(frame.provenance.end(), more.provenance.begin(), more.provenance.end());
    if (frame.targets) frame.targets->insert(frame.targets->end(), more.targets->begin(), more.targets->end());
}

// ---------------------------------------------------------------------------
// Feature fields

enum class Field { Latitude, Longitude, Altitude, Bearing, Range, Rss, Rcs, Freq };

inline std::string_view field_name(Field f) {
    switch (f) {
        case Field::Latitude: return "latitude";
        case Field::Longitude: return "longitude";
        case Field::Altitude: return "altitude";
        case Field::Bearing: return "bearing_deg";
        case Field::Range: return "range_m";
        case Field::Rss: return "rss_dbm";
        case Field::Rcs: return "rcs_dbsm";
        case Field::Freq: return "freq_mhz";
    }
    return "?";
}

/// Feature fields carried by each kind of sensor, in column order.
inline std::vector<Field> sensor_fields(SensorKind kind) {
    switch (kind) {
        case SensorKind::Radar3D:
            return {Field::Latitude, Field::Longitude, Field::Altitude, Field::Bearing, Field::Range, Field::Rcs};
        case SensorKind::Radar2D:
            return {Field::Latitude, Field::Longitude, Field::Bearing, Field::Range, Field::Rcs};
        case SensorKind::RfDf:
            return {Field::Bearing, Field::Rss, Field::Freq};
    }
    return {};
}

inline std::optional<double> field_value(const SensorReading& r, Field f) {
    switch (f) {
        case Field::Latitude: return r.position ? std::optional(r.position->lat_deg) : std::nullopt;
        case Field::Longitude: return r.position ? std::optional(r.position->lon_deg) : std::nullopt;
        case Field::Altitude: return r.position ? r.position->alt_m : std::nullopt;
        case Field::Bearing: return r.bearing_deg;
        case Field::Range: return r.range_m;
        case Field::Rss: return r.rss_dbm;
        case Field::Rcs: return r.rcs_dbsm;
        case Field::Freq: return r.freq_mhz;
    }
    return std::nullopt;
}

inline std::string column_name(SensorName s, Field f) {
    return std::string(to_string(s)) + "." + std::string(field_name(f));
}

/// Fused feature columns for the full four-sensor network.
inline std::vector<std::string> fused_columns() {
    std::vector<std::string> cols;
    for (auto s : kAllSensors)
        for (auto f : sensor_fields(sensor_spec(s).kind)) cols.push_back(column_name(s, f));
    return cols;
}

// ---------------------------------------------------------------------------
// Header mapping

/// Maps raw CSV header names onto canonical column names. Matching is
/// case-insensitive and ignores surrounding whitespace.
class HeaderMap {
public:
    HeaderMap() {
        aliases_ = {
            {"timestamp", {"timestamp", "time", "unix_ms", "ts", "datetime"}},
            {"latitude", {"latitude", "lat", "lat_deg"}},
            {"longitude", {"longitude", "lon", "lng", "lon_deg"}},
            {"altitude", {"altitude", "alt", "alt_m", "height"}},
            {"bearing_deg", {"bearing_deg", "bearing", "azimuth", "doa"}},
            {"range_m", {"range_m", "range", "distance"}},
            {"rss_dbm", {"rss_dbm", "rss", "rssi"}},
            {"rcs_dbsm", {"rcs_dbsm", "rcs"}},
            {"freq_mhz", {"freq_mhz", "frequency", "freq"}},
            {"speed", {"speed", "speed_mps"}},
            {"drone_type", {"drone_type", "model", "drone"}},
            {"drone_id", {"drone_id", "id"}},
        };
    }

    void add_alias(const std::string& canonical, const std::string& raw) { aliases_[canonical].push_back(raw); }

    /// Canonical name for a raw header, if recognised.
    [[nodiscard]] std::optional<std::string> canonical(std::string_view raw) const {
        const std::string key = normalise(raw);
        for (const auto& [canon, names] : aliases_)
            for (const auto& n : names)
                if (normalise(n) == key) return canon;
        return std::nullopt;
    }

    /// Column index for each canonical name present in the header.
    [[nodiscard]] std::map<std::string, std::size_t> resolve(const std::vector<std::string>& header) const {
        std::map<std::string, std::size_t> out;
        for (std::size_t i = 0; i < header.size(); ++i)
            if (auto c = canonical(header[i]); c && !out.contains(*c)) out[*c] = i;
        return out;
    }

private:
    static std::string normalise(std::string_view s) {
        std::string out;
        for (char c : s)
            if (!std::isspace(static_cast<unsigned char>(c)))
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        return out;
    }

    std::map<std::string, std::vector<std::string>> aliases_;
};

// ---------------------------------------------------------------------------
// Loading

/// Missingness and schema bookkeeping from one file load.
struct LoadReport {
    std::size_t rows = 0;
    std::map<std::string, std::size_t> absent_cells;  // per canonical column
    std::size_t unparseable_cells = 0;
    std::size_t schema_violations = 0;
};

/// Total order used for sorting: timestamp first, then every field, so the
/// result does not depend on input row order.
inline auto reading_key(const SensorReading& r) {
    auto o = [](const std::optional<double>& v) { return std::make_pair(v.has_value(), v.value_or(0.0)); };
    return std::make_tuple(r.t.millis, o(field_value(r, Field::Latitude)), o(field_value(r, Field::Longitude)),
                           o(field_value(r, Field::Altitude)), o(r.bearing_deg), o(r.range_m), o(r.rss_dbm),
                           o(r.rcs_dbsm), o(r.freq_mhz));
}

inline void sort_readings(std::vector<SensorReading>& readings) {
    std::sort(readings.begin(), readings.end(),
              [](const SensorReading& a, const SensorReading& b) { return reading_key(a) < reading_key(b); });
}

inline std::vector<SensorReading> parse_sensor_table(const csv::Table& table, const SensorSpec& sensor,
                                                     LoadReport* report = nullptr,
                                                     const HeaderMap& headers = HeaderMap{}) {
    const auto cols = headers.resolve(table.header);
    if (!cols.contains("timestamp")) throw DataError("schema violation: no timestamp column");

    LoadReport local;
    LoadReport& rep = report ? *report : local;
    rep.rows = table.rows.size();

    auto cell = [&](const std::vector<std::string>& row, const std::string& name) -> std::optional<double> {
        auto it = cols.find(name);
        if (it == cols.end()) return std::nullopt;
        if (it->second >= row.size() || row[it->second].empty()) {
            ++rep.absent_cells[name];
            return std::nullopt;
        }
        auto v = csv::parse_double(row[it->second]);
        if (!v) {
            ++rep.unparseable_cells;
            ++rep.absent_cells[name];
        }
        return v;
    };

    const std::size_t ts_col = cols.at("timestamp");
    std::vector<SensorReading> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (ts_col >= row.size()) throw DataError("schema violation: row without timestamp");
        auto ts = csv::parse_int(row[ts_col]);
        if (!ts) throw DataError("schema violation: bad timestamp '" + row[ts_col] + "'");

        SensorReading r;
        r.t = Timestamp{*ts};
        r.sensor = sensor.name;
        r.bearing_deg = cell(row, "bearing_deg");
        r.range_m = cell(row, "range_m");
        r.rss_dbm = cell(row, "rss_dbm");
        r.rcs_dbsm = cell(row, "rcs_dbsm");
        r.freq_mhz = cell(row, "freq_mhz");
        auto lat = cell(row, "latitude");
        auto lon = cell(row, "longitude");
        auto alt = cell(row, "altitude");
        if (lat && lon) r.position = GeoPosition{*lat, *lon, sensor.kind == SensorKind::Radar3D ? alt : std::nullopt};
        if (!validate_reading(r).empty()) ++rep.schema_violations;
        out.push_back(std::move(r));
    }
    sort_readings(out);
    return out;
}

inline std::vector<SensorReading> load_sensor_csv(const fs::path& path, const SensorSpec& sensor,
                                                  LoadReport* report = nullptr,
                                                  const HeaderMap& headers = HeaderMap{}) {
    if (!fs::exists(path)) throw DataError("scenario incomplete: missing " + path.string());
    return parse_sensor_table(csv::read(path.string()), sensor, report, headers);
}

/// A flight log row plus the log-local drone identifier (0 when the log
/// carries a single drone).
struct LoggedRecord {
    DroneLogRecord record;
    int drone_id = 0;
};

inline std::vector<LoggedRecord> parse_drone_log(const csv::Table& table, const HeaderMap& headers = HeaderMap{}) {
    const auto cols = headers.resolve(table.header);
    for (const char* required : {"timestamp", "latitude", "longitude", "speed", "altitude", "drone_type"})
        if (!cols.contains(required)) throw DataError(std::string("schema violation: drone log lacks ") + required);

    auto get = [&](const std::vector<std::string>& row, const char* name) -> const std::string& {
        const std::size_t i = cols.at(name);
        if (i >= row.size()) throw DataError(std::string("schema violation: short drone log row at ") + name);
        return row[i];
    };
    auto num = [&](const std::vector<std::string>& row, const char* name) {
        auto v = csv::parse_double(get(row, name));
        if (!v) throw DataError(std::string("schema violation: drone log ") + name + " not numeric");
        return *v;
    };

    std::vector<LoggedRecord> out;
    for (const auto& row : table.rows) {
        auto ts = csv::parse_int(get(row, "timestamp"));
        if (!ts) throw DataError("schema violation: bad drone log timestamp");
        auto type = parse_drone_type(get(row, "drone_type"));
        if (!type) throw DataError("unknown drone type '" + get(row, "drone_type") + "'");
        LoggedRecord lr;
        lr.record.t = Timestamp{*ts};
        lr.record.position = {num(row, "latitude"), num(row, "longitude"), num(row, "altitude")};
        lr.record.speed_mps = num(row, "speed");
        lr.record.type = *type;
        if (cols.contains("drone_id")) {
            auto id = csv::parse_int(get(row, "drone_id"));
            if (!id) throw DataError("schema violation: bad drone_id");
            lr.drone_id = static_cast<int>(*id);
        }
        out.push_back(lr);
    }
    std::stable_sort(out.begin(), out.end(), [](const LoggedRecord& a, const LoggedRecord& b) {
        return std::tie(a.record.t.millis, a.drone_id) < std::tie(b.record.t.millis, b.drone_id);
    });
    return out;
}

inline std::vector<LoggedRecord> load_drone_log_records(const fs::path& path, const HeaderMap& headers = HeaderMap{}) {
    if (!fs::exists(path)) throw DataError("scenario incomplete: missing " + path.string());
    return parse_drone_log(csv::read(path.string()), headers);
}

inline std::vector<DroneLogRecord> load_drone_log(const fs::path& path, const HeaderMap& headers = HeaderMap{}) {
    std::vector<DroneLogRecord> out;
    for (auto& lr : load_drone_log_records(path, headers)) out.push_back(lr.record);
    return out;
}

// ---------------------------------------------------------------------------
// Writing

inline void write_sensor_csv(const fs::path& path, const SensorSpec& sensor,
                             const std::vector<SensorReading>& readings) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    csv::Writer w(out);
    const auto fields = sensor_fields(sensor.kind);
    std::vector<std::string> header{"timestamp"};
    for (auto f : fields) header.emplace_back(field_name(f));
    w.row(header);
    for (const auto& r : readings) {
        std::vector<std::string> row{std::to_string(r.t.millis)};
        for (auto f : fields) row.push_back(csv::format_optional(field_value(r, f)));
        w.row(row);
    }
    if (!out) throw DataError("I/O failure writing " + path.string());
}

inline void write_drone_log(const fs::path& path, const std::vector<LoggedRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    csv::Writer w(out);
    w.row({"timestamp", "drone_id", "latitude", "longitude", "speed", "altitude", "drone_type"});
    for (const auto& lr : records) {
        const auto& r = lr.record;
        w.row({std::to_string(r.t.millis), std::to_string(lr.drone_id), csv::format_double(r.position.lat_deg),
               csv::format_double(r.position.lon_deg), csv::format_double(r.speed_mps),
               csv::format_double(r.position.alt_m.value_or(0.0)), std::string(model_name(r.type))});
    }
    if (!out) throw DataError("I/O failure writing " + path.string());
}

// ---------------------------------------------------------------------------
// Scenarios

inline bool is_scenario_dir_name(const std::string& name) {
    static const std::regex pattern(R"(Scenario \d+(\.\d+)?)");
    return std::regex_match(name, pattern);
}

inline std::string sensor_file_name(SensorName s) { return std::string(to_string(s)) + ".csv"; }
inline constexpr std::string_view kDroneLogFile = "drone_log.csv";

struct Scenario {
    std::string id;
    SensorStreams streams;
    std::optional<std::vector<LoggedRecord>> log;
    std::array<LoadReport, 4> reports;

    [[nodiscard]] bool is_training() const { return log.has_value(); }
};

/// Loads every sensor file and, when present, the drone log.
inline Scenario load_scenario(const fs::path& dir, const HeaderMap& headers = HeaderMap{}) {
    if (!fs::is_directory(dir)) throw DataError("scenario incomplete: no directory " + dir.string());
    Scenario sc;
    sc.id = dir.filename().string();
    for (auto s : kAllSensors) {
        const auto i = index_of(s);
        sc.streams[i] = load_sensor_csv(dir / sensor_file_name(s), sensor_spec(s), &sc.reports[i], headers);
    }
    if (fs::exists(dir / kDroneLogFile)) sc.log = load_drone_log_records(dir / kDroneLogFile, headers);
    return sc;
}

/// Scenario directories under a dataset root, sorted by name.
inline std::vector<fs::path> list_scenarios(const fs::path& root) {
    std::vector<fs::path> out;
    if (!fs::is_directory(root)) return out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && is_scenario_dir_name(e.path().filename().string())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Merge

/// Index of the reading nearest to `t` within tolerance; the earlier one
/// wins a tie. `sorted` must be ordered by timestamp.
inline std::optional<std::size_t> nearest_within(const std::vector<SensorReading>& sorted, Timestamp t,
                                                 std::int64_t tolerance_ms) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), t,
                               [](const SensorReading& r, Timestamp x) { return r.t < x; });
    std::optional<std::size_t> best;
    std::int64_t best_gap = 0;
    auto consider = [&](std::size_t idx) {
        const std::int64_t gap = std::abs(sorted[idx].t.millis - t.millis);
        if (gap > tolerance_ms) return;
        if (!best || gap < best_gap) {
            best = idx;
            best_gap = gap;
        }
    };
    if (it != sorted.begin()) {
        // First reading of the run of equal timestamps just before t.
        auto prev = std::prev(it);
        auto first = std::lower_bound(sorted.begin(), prev, prev->t,
                                      [](const SensorReading& r, Timestamp x) { return r.t < x; });
        consider(static_cast<std::size_t>(first - sorted.begin()));
    }
    if (it != sorted.end()) consider(static_cast<std::size_t>(it - sorted.begin()));
    return best;
}

/// Joins every sensor stream onto the anchor timestamps. Anchors are the
/// drone log rows when a log is given, otherwise the union of all sensor
/// timestamps. Streams are sorted in place so provenance indices refer to
/// the caller's data.
inline FusedFrame merge_frames(SensorStreams& sensors, const std::optional<std::vector<LoggedRecord>>& log,
                               const MergePolicy& policy = {}) {
    if (policy.tolerance_ms <= 0) throw ConfigError("merge tolerance must be positive");
    const bool any = std::any_of(sensors.begin(), sensors.end(), [](const auto& v) { return !v.empty(); });
    if (!any) throw DataError("nothing to merge");
    for (auto& s : sensors) sort_readings(s);

    FusedFrame frame;
    frame.columns = fused_columns();

    std::vector<Timestamp> anchors;
    if (log) {
        std::vector<LoggedRecord> sorted = *log;
        std::stable_sort(sorted.begin(), sorted.end(), [](const LoggedRecord& a, const LoggedRecord& b) {
            return std::tie(a.record.t.millis, a.drone_id) < std::tie(b.record.t.millis, b.drone_id);
        });
        frame.targets.emplace();
        for (const auto& lr : sorted) {
            anchors.push_back(lr.record.t);
            const auto& r = lr.record;
            frame.targets->push_back(
                {r.position.lat_deg, r.position.lon_deg, r.speed_mps, r.position.alt_m.value_or(0.0), r.type});
        }
    } else {
        for (const auto& s : sensors)
            for (const auto& r : s) anchors.push_back(r.t);
        std::sort(anchors.begin(), anchors.end());
        anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
    }

    for (Timestamp anchor : anchors) {
        std::vector<std::optional<double>> row;
        row.reserve(frame.columns.size());
        std::array<std::optional<std::size_t>, 4> prov{};
        for (auto s : kAllSensors) {
            const auto& stream = sensors[index_of(s)];
            auto hit = nearest_within(stream, anchor, policy.tolerance_ms);
            prov[index_of(s)] = hit;
            for (auto f : sensor_fields(sensor_spec(s).kind))
                row.push_back(hit ? field_value(stream[*hit], f) : std::nullopt);
        }
        frame.timestamps.push_back(anchor);
        frame.cells.push_back(std::move(row));
        frame.provenance.push_back(prov);
    }
    return frame;
}

/// Single-sensor frame with that sensor's columns, one row per reading.
inline FusedFrame readings_to_frame(SensorName sensor, const std::vector<SensorReading>& readings) {
    FusedFrame frame;
    const auto fields = sensor_fields(sensor_spec(sensor).kind);
    for (auto f : fields) frame.columns.push_back(column_name(sensor, f));
    for (std::size_t i = 0; i < readings.size(); ++i) {
        std::vector<std::optional<double>> row;
        for (auto f : fields) row.push_back(field_value(readings[i], f));
        frame.timestamps.push_back(readings[i].t);
        frame.cells.push_back(std::move(row));
        std::array<std::optional<std::size_t>, 4> prov{};
        prov[index_of(sensor)] = i;
        frame.provenance.push_back(prov);
    }
    return frame;
}

}  // namespace uranus

#pragma once

// Read-only replay of precomputed predictions: scenario listing, time-window
// detection tables, per-track trajectories and model metadata. The HTTP
// binding lives in console_http.hpp.

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uranus/core.hpp"
#include "uranus/pipeline.hpp"

namespace uranus::console {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::size_t kPageSize = 10'000;

/// Request failure with an HTTP status and a stable machine-readable code.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    [[nodiscard]] int status() const { return status_; }
    [[nodiscard]] const std::string& code() const { return code_; }

private:
    int status_;
    std::string code_;
};

struct ScenarioDescriptor {
    std::string id;
    std::optional<Timestamp> from;
    std::optional<Timestamp> to;
    std::size_t rows = 0;
};

/// Immutable set of prediction tables keyed by scenario id.
class PredictionStore {
public:
    PredictionStore() = default;

    void add(std::string id, std::vector<pipeline::TrackEstimate> rows) {
        std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
        scenarios_[std::move(id)] = std::move(rows);
    }

    /// Every `*.csv` prediction file in `dir`; the scenario id is the file
    /// name without extension.
    static PredictionStore load(const fs::path& dir) {
        if (!fs::is_directory(dir)) throw DataError("prediction store not found: " + dir.string());
        PredictionStore store;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) store.add(f.stem().string(), pipeline::load_predictions(f));
        return store;
    }

    [[nodiscard]] std::vector<ScenarioDescriptor> list() const {
        std::vector<ScenarioDescriptor> out;
        for (const auto& [id, rows] : scenarios_) {
            ScenarioDescriptor d{id, std::nullopt, std::nullopt, rows.size()};
            if (!rows.empty()) {
                d.from = rows.front().t;
                d.to = rows.back().t;
            }
            out.push_back(std::move(d));
        }
        return out;
    }

    [[nodiscard]] const std::vector<pipeline::TrackEstimate>* find(const std::string& id) const {
        auto it = scenarios_.find(id);
        return it == scenarios_.end() ? nullptr : &it->second;
    }

    [[nodiscard]] std::size_t size() const { return scenarios_.size(); }

private:
    std::map<std::string, std::vector<pipeline::TrackEstimate>> scenarios_;
};

struct WindowQuery {
    std::string scenario;
    Timestamp from{std::numeric_limits<std::int64_t>::min()};
    Timestamp to{std::numeric_limits<std::int64_t>::max()};
    std::size_t cursor = 0;  // offset into the window, from a continuation token
};

struct Summary {
    DroneType modal_type = DroneType::MavicPro;
    double mean_confidence = 0.0;
    std::size_t rows = 0;
};

struct TrackPolyline {
    int track_id = 0;
    std::vector<const pipeline::TrackEstimate*> points;
};

struct WindowResult {
    std::vector<const pipeline::TrackEstimate*> rows;
    std::size_t total = 0;  // rows in the whole window
    std::optional<std::size_t> next_cursor;
    std::vector<TrackPolyline> tracks;
    std::optional<Summary> summary;
};

/// Rows with from <= t <= to, one page at a time. Tracks and the summary
/// cover the returned rows only.
inline WindowResult query_window(const PredictionStore& store, const WindowQuery& q, std::size_t page = kPageSize) {
    if (q.from > q.to) throw ApiError(400, "bad_request", "window start is after window end");
    const auto* rows = store.find(q.scenario);
    if (!rows) throw ApiError(404, "not_found", "unknown scenario '" + q.scenario + "'");

    auto lo = std::lower_bound(rows->begin(), rows->end(), q.from, [](const auto& r, Timestamp t) { return r.t < t; });
    auto hi = std::upper_bound(lo, rows->end(), q.to, [](Timestamp t, const auto& r) { return t < r.t; });
    WindowResult res;
    res.total = static_cast<std::size_t>(hi - lo);
    if (q.cursor > res.total) throw ApiError(400, "bad_request", "continuation token out of range");
    const std::size_t end = std::min(res.total, q.cursor + page);
    for (std::size_t i = q.cursor; i < end; ++i) res.rows.push_back(&*(lo + static_cast<std::ptrdiff_t>(i)));
    if (end < res.total) res.next_cursor = end;

    std::map<int, TrackPolyline> tracks;
    std::array<std::size_t, kDroneTypeCount> votes{};
    double conf = 0.0;
    for (const auto* r : res.rows) {
        auto& tr = tracks[r->track_id];
        tr.track_id = r->track_id;
        tr.points.push_back(r);
        ++votes[static_cast<std::size_t>(r->type)];
        conf += r->confidence;
    }
    for (auto& [id, tr] : tracks) res.tracks.push_back(std::move(tr));
    if (!res.rows.empty()) {
        Summary s;
        s.rows = res.rows.size();
        s.mean_confidence = conf / static_cast<double>(res.rows.size());
        std::size_t best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c)
            if (votes[c] > votes[best]) best = c;
        s.modal_type = static_cast<DroneType>(best);
        res.summary = s;
    }
    return res;
}

// ---------------------------------------------------------------------------
// JSON bodies

inline json to_json(const ScenarioDescriptor& d) {
    return {{"id", d.id},
            {"from", d.from ? json(d.from->millis) : json(nullptr)},
            {"to", d.to ? json(d.to->millis) : json(nullptr)},
            {"rows", d.rows}};
}

inline json scenarios_body(const PredictionStore& store) {
    json list = json::array();
    for (const auto& d : store.list()) list.push_back(to_json(d));
    return {{"scenarios", list}};
}

inline json detection_json(const pipeline::TrackEstimate& r) {
    json sensors = json::array();
    for (auto s : r.sensors) sensors.push_back(to_string(s));
    json votes = json::object();
    for (auto t : kAllDroneTypes) votes[std::string(short_name(t))] = r.votes[static_cast<std::size_t>(t)];
    return {{"timestamp", r.t.millis},   {"sensors", sensors},
            {"latitude", r.latitude},    {"longitude", r.longitude},
            {"altitude", r.altitude},    {"speed", r.speed},
            {"drone_type", short_name(r.type)}, {"confidence", r.confidence},
            {"votes", votes},            {"track_id", r.track_id}};
}

inline json summary_json(const std::optional<Summary>& s) {
    if (!s) return nullptr;
    return {{"modal_type", short_name(s->modal_type)}, {"mean_confidence", s->mean_confidence}, {"rows", s->rows}};
}

inline json window_header(const WindowQuery& q, const WindowResult& w) {
    return {{"scenario", q.scenario},
            {"from", q.from.millis},
            {"to", q.to.millis},
            {"total", w.total},
            {"next", w.next_cursor ? json(std::to_string(*w.next_cursor)) : json(nullptr)},
            {"summary", summary_json(w.summary)}};
}

inline json detections_body(const WindowQuery& q, const WindowResult& w) {
    json body = window_header(q, w);
    json rows = json::array();
    for (const auto* r : w.rows) rows.push_back(detection_json(*r));
    body["rows"] = rows;
    return body;
}

inline json track_body(const WindowQuery& q, const WindowResult& w) {
    json body = window_header(q, w);
    json tracks = json::array();
    for (const auto& tr : w.tracks) {
        json pts = json::array();
        for (const auto* p : tr.points)
            pts.push_back({{"timestamp", p->t.millis},
                           {"latitude", p->latitude},
                           {"longitude", p->longitude},
                           {"altitude", p->altitude},
                           {"drone_type", short_name(p->type)}});
        tracks.push_back({{"track_id", tr.track_id}, {"points", pts}});
    }
    body["tracks"] = tracks;
    return body;
}

/// Bundle metadata for the console; values are copied from bundle.json.
inline json model_info(const json& bundle) {
    json targets = json::array();
    json cv = json::object();
    for (const auto& t : bundle.at("targets")) {
        targets.push_back({{"name", t.at("name")}, {"task", t.at("task")}, {"features", t.at("features")}, {"cv", t.at("cv")}});
        cv[t.at("name").get<std::string>()] = t.at("cv");
    }
    json accuracy = nullptr;
    const auto& cls = bundle.at("training_report").at("classification");
    if (!cls.is_null()) accuracy = cls.at("accuracy");
    return {{"model_version", bundle.at("model_version")},
            {"bundle_version", bundle.at("bundle_version")},
            {"seed", bundle.at("seed")},
            {"class_names", bundle.at("class_names")},
            {"targets", targets},
            {"cv", cv},
            {"cv_accuracy", bundle.at("targets").at(pipeline::kTypeTarget).at("cv").at("mean_accuracy")},
            {"training_accuracy", accuracy}};
}

inline json error_body(const ApiError& e) { return {{"error", e.what()}, {"code", e.code()}}; }

/// Parses a UNIX-ms query value; absent values fall back to `fallback`.
inline Timestamp parse_query_time(const std::optional<std::string>& value, Timestamp fallback, const char* name) {
    if (!value) return fallback;
    std::int64_t v = 0;
    const auto* b = value->data();
    const auto* e = b + value->size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e || value->empty())
        throw ApiError(400, "bad_request", std::string("'") + name + "' must be an integer UNIX-ms timestamp");
    return Timestamp{v};
}

inline std::size_t parse_cursor(const std::optional<std::string>& value) {
    if (!value) return 0;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(value->data(), value->data() + value->size(), v);
    if (ec != std::errc{} || p != value->data() + value->size() || value->empty())
        throw ApiError(400, "bad_request", "malformed continuation token");
    return v;
}

}  // namespace uranus::console

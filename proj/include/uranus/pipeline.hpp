#pragma once

// End-to-end training, prediction and reporting. Training runs the stages
// data analysis, IQR filtering of the 3D radar, k-means clutter removal on
// the 2D radar, timestamp merge, one-hot encoding, per-target ANOVA feature
// selection, and finally one Random Forest per target with k-fold
// cross-validation. Every fitted preprocessing parameter is stored in the
// bundle and reused unchanged at prediction time.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uranus/core.hpp"
#include "uranus/csv.hpp"
#include "uranus/forest.hpp"
#include "uranus/ingest.hpp"
#include "uranus/metrics.hpp"
#include "uranus/prep.hpp"
#include "uranus/rfanalysis.hpp"

namespace uranus::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr std::size_t kTargetCount = 5;
inline constexpr std::size_t kTypeTarget = 4;
inline constexpr std::string_view kBundleFile = "bundle.json";
inline constexpr int kBundleVersion = 1;

inline std::string target_name(std::size_t t) { return std::string(kTargetNames.at(t)); }

inline double target_value(const TargetRow& row, std::size_t t) {
    switch (t) {
        case 0: return row.latitude;
        case 1: return row.longitude;
        case 2: return row.speed;
        case 3: return row.altitude;
        default: return static_cast<double>(static_cast<int>(row.type));
    }
}

inline Field parse_field(const std::string& name) {
    for (auto f : {Field::Latitude, Field::Longitude, Field::Altitude, Field::Bearing, Field::Range, Field::Rss,
                   Field::Rcs, Field::Freq})
        if (field_name(f) == name) return f;
    throw ConfigError("unknown sensor field '" + name + "'");
}

inline SensorName parse_sensor(const std::string& name) {
    auto s = parse_sensor_name(name);
    if (!s) throw ConfigError("unknown sensor '" + name + "'");
    return *s;
}

// ---------------------------------------------------------------------------
// Configuration

struct IqrScope {
    SensorName sensor = SensorName::Arcus;
    std::vector<Field> fields{Field::Rcs};
};

struct ClusterScope {
    SensorName sensor = SensorName::Alvira;
    int k = 2;
    std::vector<Field> fields{Field::Rcs};
};

struct PipelineConfig {
    fs::path data_root;
    std::vector<std::string> scenarios;
    MergePolicy merge;
    IqrScope iqr;
    ClusterScope kmeans;
    std::vector<std::string> one_hot_columns{"diana.freq_mhz", "venus.freq_mhz"};
    prep::SelectionPolicy selection;
    bool shared_features = false;
    std::array<forest::ForestParams, kTargetCount> forest{
        forest::ForestParams::regression_defaults(), forest::ForestParams::regression_defaults(),
        forest::ForestParams::regression_defaults(), forest::ForestParams::regression_defaults(),
        forest::ForestParams::classification_defaults()};
    std::size_t cv_folds = 5;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

namespace detail {

inline json params_to_json(const forest::ForestParams& p) {
    return {{"n_trees", p.n_trees},
            {"max_depth", p.max_depth},
            {"min_leaf", p.min_leaf},
            {"features_per_split", p.features_per_split},
            {"bootstrap", p.bootstrap}};
}

inline void params_from_json(const json& j, forest::ForestParams& p) {
    if (j.contains("n_trees")) p.n_trees = j.at("n_trees").get<std::size_t>();
    if (j.contains("max_depth")) p.max_depth = j.at("max_depth").get<std::size_t>();
    if (j.contains("min_leaf")) p.min_leaf = j.at("min_leaf").get<std::size_t>();
    if (j.contains("features_per_split")) p.features_per_split = j.at("features_per_split").get<std::size_t>();
    if (j.contains("bootstrap")) p.bootstrap = j.at("bootstrap").get<bool>();
}

inline std::vector<std::string> field_names(const std::vector<Field>& fields) {
    std::vector<std::string> out;
    for (auto f : fields) out.emplace_back(field_name(f));
    return out;
}

inline std::vector<Field> fields_from_json(const json& j) {
    std::vector<Field> out;
    for (const auto& s : j) out.push_back(parse_field(s.get<std::string>()));
    if (out.empty()) throw ConfigError("field list must not be empty");
    return out;
}

}  // namespace detail

/// Snapshot stored in the bundle. Output locations are not part of it.
inline json to_json(const PipelineConfig& c) {
    json forest = json::object();
    for (std::size_t t = 0; t < kTargetCount; ++t) forest[target_name(t)] = detail::params_to_json(c.forest[t]);
    return {{"data_root", c.data_root.generic_string()},
            {"scenarios", c.scenarios},
            {"merge_tolerance_ms", c.merge.tolerance_ms},
            {"iqr", {{"sensor", to_string(c.iqr.sensor)}, {"fields", detail::field_names(c.iqr.fields)}}},
            {"kmeans",
             {{"sensor", to_string(c.kmeans.sensor)}, {"k", c.kmeans.k}, {"fields", detail::field_names(c.kmeans.fields)}}},
            {"one_hot_columns", c.one_hot_columns},
            {"anova_top_k", c.selection.top_k},
            {"shared_features", c.shared_features},
            {"forest", forest},
            {"cv_folds", c.cv_folds},
            {"seed", c.seed}};
}

/// Parses a config document. Relative data roots resolve against `base`.
inline PipelineConfig config_from_json(const json& j, const fs::path& base = {}) {
    try {
        PipelineConfig c;
        if (!j.contains("seed")) throw ConfigError("config: 'seed' is required");
        c.seed = j.at("seed").get<std::uint64_t>();
        if (!j.contains("data_root")) throw ConfigError("config: 'data_root' is required");
        c.data_root = j.at("data_root").get<std::string>();
        if (c.data_root.is_relative() && !base.empty()) c.data_root = base / c.data_root;
        if (j.contains("scenarios")) c.scenarios = j.at("scenarios").get<std::vector<std::string>>();
        if (j.contains("merge_tolerance_ms")) c.merge.tolerance_ms = j.at("merge_tolerance_ms").get<std::int64_t>();
        if (j.contains("iqr")) {
            const auto& q = j.at("iqr");
            if (q.contains("sensor")) c.iqr.sensor = parse_sensor(q.at("sensor").get<std::string>());
            if (q.contains("fields")) c.iqr.fields = detail::fields_from_json(q.at("fields"));
        }
        if (j.contains("kmeans")) {
            const auto& q = j.at("kmeans");
            if (q.contains("sensor")) c.kmeans.sensor = parse_sensor(q.at("sensor").get<std::string>());
            if (q.contains("k")) c.kmeans.k = q.at("k").get<int>();
            if (q.contains("fields")) c.kmeans.fields = detail::fields_from_json(q.at("fields"));
        }
        if (j.contains("one_hot_columns")) c.one_hot_columns = j.at("one_hot_columns").get<std::vector<std::string>>();
        if (j.contains("anova_top_k")) c.selection.top_k = j.at("anova_top_k").get<std::size_t>();
        if (j.contains("shared_features")) c.shared_features = j.at("shared_features").get<bool>();
        if (j.contains("forest")) {
            const auto& f = j.at("forest");
            if (f.contains("regression"))
                for (std::size_t t = 0; t < kTypeTarget; ++t) detail::params_from_json(f.at("regression"), c.forest[t]);
            if (f.contains("classification")) detail::params_from_json(f.at("classification"), c.forest[kTypeTarget]);
            for (std::size_t t = 0; t < kTargetCount; ++t)
                if (f.contains(target_name(t))) detail::params_from_json(f.at(target_name(t)), c.forest[t]);
        }
        if (j.contains("cv_folds")) c.cv_folds = j.at("cv_folds").get<std::size_t>();
        if (j.contains("threads")) c.threads = j.at("threads").get<std::size_t>();

        if (c.merge.tolerance_ms <= 0) throw ConfigError("config: merge_tolerance_ms must be positive");
        if (c.kmeans.k < 1) throw ConfigError("config: kmeans.k must be at least 1");
        if (c.selection.top_k == 0) throw ConfigError("config: anova_top_k must be at least 1");
        if (c.cv_folds < 2) throw ConfigError("config: cv_folds must be at least 2");
        for (const auto& p : c.forest)
            if (p.n_trees == 0 || p.min_leaf == 0) throw ConfigError("config: forest n_trees and min_leaf must be >= 1");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Frozen preprocessing

struct FrozenPrep {
    MergePolicy merge;
    SensorName iqr_sensor = SensorName::Arcus;
    std::vector<std::pair<Field, prep::IqrFences>> fences;
    SensorName cluster_sensor = SensorName::Alvira;
    std::vector<Field> cluster_fields;
    std::vector<double> cluster_mean;
    std::vector<double> cluster_scale;
    std::vector<prep::Point> centroids;
    int drone_cluster = 0;
    double silhouette = 0.0;
    std::vector<std::pair<std::string, std::vector<double>>> one_hot;
    std::vector<std::string> columns;  // fused columns after encoding
};

struct FilterCounts {
    std::size_t iqr_removed = 0;
    std::size_t clutter_removed = 0;
    std::vector<std::size_t> unseen_categories;  // per one-hot column
};

/// Drops readings of the IQR sensor with any configured field outside its
/// fences. Absent fields never cause removal.
inline std::size_t apply_iqr(const FrozenPrep& p, SensorStreams& streams) {
    auto& v = streams[index_of(p.iqr_sensor)];
    const auto before = v.size();
    std::erase_if(v, [&](const SensorReading& r) {
        for (const auto& [f, fence] : p.fences) {
            const auto x = field_value(r, f);
            if (x && !fence.contains(*x)) return true;
        }
        return false;
    });
    return before - v.size();
}

inline std::optional<prep::Point> cluster_point(const FrozenPrep& p, const SensorReading& r) {
    prep::Point pt;
    for (std::size_t i = 0; i < p.cluster_fields.size(); ++i) {
        const auto x = field_value(r, p.cluster_fields[i]);
        if (!x) return std::nullopt;
        pt.push_back((*x - p.cluster_mean[i]) / p.cluster_scale[i]);
    }
    return pt;
}

/// Keeps only readings of the clustered sensor that fall in the drone
/// cluster. Readings lacking a clustering field are dropped.
inline std::size_t apply_clusters(const FrozenPrep& p, SensorStreams& streams) {
    auto& v = streams[index_of(p.cluster_sensor)];
    const auto before = v.size();
    std::erase_if(v, [&](const SensorReading& r) {
        auto pt = cluster_point(p, r);
        return !pt || prep::nearest_centroid(*pt, p.centroids) != p.drone_cluster;
    });
    return before - v.size();
}

/// Applies the frozen one-hot vocabularies. `unseen` receives, per encoded
/// column, the number of rows whose category was not in the vocabulary.
inline FusedFrame encode(const FrozenPrep& p, FusedFrame frame, std::vector<std::size_t>* unseen = nullptr) {
    if (unseen) unseen->clear();
    for (const auto& [column, vocab] : p.one_hot) {
        auto res = prep::apply_one_hot(frame, column, vocab);
        if (unseen) unseen->push_back(res.unseen);
        frame = std::move(res.frame);
    }
    return frame;
}

/// Filters, merges and encodes one scenario with frozen parameters. Returns
/// an empty frame when nothing survives filtering.
inline FusedFrame fuse(const FrozenPrep& p, SensorStreams streams, const std::optional<std::vector<LoggedRecord>>& log,
                       FilterCounts* counts = nullptr) {
    FilterCounts c;
    c.iqr_removed = apply_iqr(p, streams);
    c.clutter_removed = apply_clusters(p, streams);
    if (counts) *counts = c;
    const bool any = std::any_of(streams.begin(), streams.end(), [](const auto& s) { return !s.empty(); });
    if (!any) {
        FusedFrame empty;
        empty.columns = p.columns;
        return empty;
    }
    FusedFrame merged = merge_frames(streams, log, p.merge);
    return encode(p, std::move(merged), counts ? &counts->unseen_categories : nullptr);
}

inline json to_json(const FrozenPrep& p) {
    json fences = json::object();
    for (const auto& [f, fe] : p.fences)
        fences[std::string(field_name(f))] = {{"q1", fe.q1}, {"q3", fe.q3}, {"lower", fe.lower}, {"upper", fe.upper}};
    json oh = json::object();
    for (const auto& [col, vocab] : p.one_hot) oh[col] = vocab;
    return {{"merge_tolerance_ms", p.merge.tolerance_ms},
            {"iqr", {{"sensor", to_string(p.iqr_sensor)}, {"fences", fences}}},
            {"kmeans",
             {{"sensor", to_string(p.cluster_sensor)},
              {"fields", detail::field_names(p.cluster_fields)},
              {"mean", p.cluster_mean},
              {"scale", p.cluster_scale},
              {"centroids", p.centroids},
              {"drone_cluster", p.drone_cluster},
              {"silhouette", p.silhouette}}},
            {"one_hot", oh},
            {"columns", p.columns}};
}

inline FrozenPrep prep_from_json(const json& j) {
    FrozenPrep p;
    p.merge.tolerance_ms = j.at("merge_tolerance_ms").get<std::int64_t>();
    p.iqr_sensor = parse_sensor(j.at("iqr").at("sensor").get<std::string>());
    for (const auto& [name, fe] : j.at("iqr").at("fences").items()) {
        prep::IqrFences f;
        f.q1 = fe.at("q1").get<double>();
        f.q3 = fe.at("q3").get<double>();
        f.iqr = f.q3 - f.q1;
        f.lower = fe.at("lower").get<double>();
        f.upper = fe.at("upper").get<double>();
        p.fences.emplace_back(parse_field(name), f);
    }
    const auto& k = j.at("kmeans");
    p.cluster_sensor = parse_sensor(k.at("sensor").get<std::string>());
    p.cluster_fields = detail::fields_from_json(k.at("fields"));
    p.cluster_mean = k.at("mean").get<std::vector<double>>();
    p.cluster_scale = k.at("scale").get<std::vector<double>>();
    p.centroids = k.at("centroids").get<std::vector<prep::Point>>();
    p.drone_cluster = k.at("drone_cluster").get<int>();
    p.silhouette = k.at("silhouette").get<double>();
    for (const auto& [col, vocab] : j.at("one_hot").items()) p.one_hot.emplace_back(col, vocab.get<std::vector<double>>());
    p.columns = j.at("columns").get<std::vector<std::string>>();
    return p;
}

// ---------------------------------------------------------------------------
// Bundle

struct TargetModel {
    std::string name;
    forest::ForestModel model;
    std::vector<std::string> features;
    std::vector<prep::AnovaScore> anova;
    json cv;
};

struct ModelBundle {
    FrozenPrep prep;
    std::array<TargetModel, kTargetCount> targets;
    json config;
    json analysis;
    std::string input_digest;
    metrics::EvaluationReport training_report;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<std::string> class_names() const { return targets[kTypeTarget].model.class_names; }
};

inline std::string model_file_name(std::size_t t) { return target_name(t) + ".urns"; }

inline std::string model_version_string() {
    return std::string(forest::kMagic.begin(), forest::kMagic.end() - 1) + std::to_string(forest::kFormatVersion);
}

inline json bundle_metadata(const ModelBundle& b) {
    json targets = json::array();
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        const auto& tm = b.targets[t];
        json anova = json::array();
        for (const auto& s : tm.anova) anova.push_back(prep::to_json(s));
        targets.push_back({{"name", tm.name},
                           {"file", model_file_name(t)},
                           {"task", tm.model.task == forest::Task::Regression ? "regression" : "classification"},
                           {"features", tm.features},
                           {"n_trees", tm.model.n_trees()},
                           {"anova", anova},
                           {"cv", tm.cv}});
    }
    return {{"format", "uranus-bundle"},
            {"bundle_version", kBundleVersion},
            {"model_version", model_version_string()},
            {"seed", b.seed},
            {"input_digest", b.input_digest},
            {"class_names", b.class_names()},
            {"config", b.config},
            {"preprocessing", to_json(b.prep)},
            {"targets", targets},
            {"training_report", metrics::to_json(b.training_report)},
            {"analysis", b.analysis}};
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("I/O failure writing " + path.string());
}

/// Writes the bundle into a sibling staging directory and renames it into
/// place, so a failed save never leaves a partial bundle at `dir`.
inline void save_bundle(const ModelBundle& b, const fs::path& dir) {
    fs::path staging = dir;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        fs::create_directories(staging);
        write_text(staging / kBundleFile, bundle_metadata(b).dump(2) + "\n");
        for (std::size_t t = 0; t < kTargetCount; ++t) forest::save(b.targets[t].model, (staging / model_file_name(t)).string());
        fs::remove_all(dir, ec);
        fs::rename(staging, dir);
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(staging, ec);
        throw DataError(std::string("cannot write bundle: ") + e.what());
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
}

inline json read_json(const fs::path& path, bool model) {
    std::ifstream in(path);
    if (!in) {
        if (model) throw ModelError("cannot open " + path.string());
        throw DataError("cannot open " + path.string());
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        if (model) throw ModelError("corrupt " + path.string() + ": " + e.what());
        throw DataError("corrupt " + path.string() + ": " + e.what());
    }
}

inline json load_bundle_metadata(const fs::path& dir) { return read_json(dir / kBundleFile, true); }

inline ModelBundle load_bundle(const fs::path& dir) {
    const json j = load_bundle_metadata(dir);
    try {
        if (j.value("format", "") != "uranus-bundle") throw ModelError("not a URANUS model");
        if (j.at("bundle_version").get<int>() != kBundleVersion)
            throw ModelError("model-version mismatch: bundle v" + std::to_string(j.at("bundle_version").get<int>()));
        ModelBundle b;
        b.seed = j.at("seed").get<std::uint64_t>();
        b.input_digest = j.at("input_digest").get<std::string>();
        b.config = j.at("config");
        b.analysis = j.at("analysis");
        b.prep = prep_from_json(j.at("preprocessing"));
        b.training_report = metrics::report_from_json(j.at("training_report"));
        const auto& targets = j.at("targets");
        if (targets.size() != kTargetCount) throw ModelError("bundle must hold exactly five models");
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            const auto& jt = targets.at(t);
            auto& tm = b.targets[t];
            tm.name = jt.at("name").get<std::string>();
            if (tm.name != target_name(t)) throw ModelError("bundle target order mismatch");
            tm.features = jt.at("features").get<std::vector<std::string>>();
            tm.cv = jt.at("cv");
            for (const auto& s : jt.at("anova")) {
                prep::AnovaScore a;
                a.feature = s.at("feature").get<std::string>();
                a.target = s.at("target").get<std::string>();
                a.f = metrics::number_or_inf(s.at("f"));
                a.df_between = s.at("df").at(0).get<double>();
                a.df_within = s.at("df").at(1).get<double>();
                tm.anova.push_back(std::move(a));
            }
            tm.model = forest::load((dir / jt.at("file").get<std::string>()).string());
            if (tm.model.feature_names != tm.features) throw ModelError("feature mismatch");
        }
        return b;
    } catch (const json::exception& e) {
        throw ModelError(std::string("corrupt bundle metadata: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training

/// Runs `fn`, prefixing any failure with the stage name. Error categories
/// are preserved.
template <class Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(stage + ": " + e.what());
    } catch (const ModelError& e) {
        throw ModelError(stage + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(stage + ": " + e.what());
    }
}

inline std::string fnv1a_hex(std::string_view data, std::uint64_t h = 1469598103934665603ull) {
    for (char c : data) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Digest of every input file of the listed scenarios, in a fixed order.
inline std::string input_digest(const fs::path& root, const std::vector<std::string>& scenarios) {
    std::string acc;
    for (const auto& id : scenarios) {
        std::vector<fs::path> files;
        for (auto s : kAllSensors) files.push_back(root / id / sensor_file_name(s));
        files.push_back(root / id / kDroneLogFile);
        for (const auto& f : files) {
            acc += id + "/" + f.filename().string() + ":";
            acc += fs::exists(f) ? fnv1a_hex(csv::read_file(f.string())) : std::string("absent");
            acc += ";";
        }
    }
    return fnv1a_hex(acc);
}

struct TrainResult {
    ModelBundle bundle;
    metrics::EvaluationReport report;
    FusedFrame frame;  // encoded training frame
};

namespace detail {

/// One feature row per frame row for the named columns.
inline forest::Dataset dataset_for(const FusedFrame& frame, const std::vector<std::string>& features) {
    std::vector<std::size_t> idx;
    for (const auto& f : features) {
        auto j = frame.column_index(f);
        if (!j) throw ModelError("feature mismatch: column '" + f + "' not in frame");
        idx.push_back(*j);
    }
    forest::Dataset d(frame.row_count(), idx.size());
    for (std::size_t r = 0; r < frame.row_count(); ++r)
        for (std::size_t k = 0; k < idx.size(); ++k) d.set(r, k, frame.cells[r][idx[k]]);
    return d;
}

inline std::vector<std::string> class_names() {
    std::vector<std::string> out;
    for (auto t : kAllDroneTypes) out.emplace_back(short_name(t));
    return out;
}

inline std::vector<prep::AnovaScore> score_features(const FusedFrame& frame, std::size_t target) {
    std::vector<prep::AnovaScore> scores;
    std::vector<double> y;
    std::vector<int> groups;
    for (const auto& row : *frame.targets) {
        y.push_back(target_value(row, target));
        groups.push_back(static_cast<int>(row.type));
    }
    for (std::size_t j = 0; j < frame.columns.size(); ++j) {
        const auto col = frame.column_values(j);
        try {
            if (target == kTypeTarget)
                scores.push_back(prep::anova_f_categorical(col, groups, frame.columns[j], target_name(target)));
            else
                scores.push_back(prep::anova_f_continuous(col, y, frame.columns[j], target_name(target)));
        } catch (const DataError&) {
            // Too few observed values to score; the column cannot be selected.
        }
    }
    return scores;
}

}  // namespace detail

/// Per-type RCS fits and frequency likelihoods from single-type training
/// scenarios, plus the missing-value report of the merged frame.
inline json analyze(const std::vector<Scenario>& scenarios, const IqrScope& radar) {
    std::array<std::vector<double>, kDroneTypeCount> rcs;
    std::array<std::vector<double>, kDroneTypeCount> freq;
    for (const auto& sc : scenarios) {
        if (!sc.log || sc.log->empty()) continue;
        const DroneType type = sc.log->front().record.type;
        const bool single = std::all_of(sc.log->begin(), sc.log->end(),
                                        [&](const LoggedRecord& r) { return r.record.type == type; });
        if (!single) continue;
        const auto ti = static_cast<std::size_t>(type);
        for (const auto& r : sc.streams[index_of(radar.sensor)])
            if (r.rcs_dbsm) rcs[ti].push_back(*r.rcs_dbsm);
        for (auto s : {SensorName::Diana, SensorName::Venus})
            for (const auto& r : sc.streams[index_of(s)])
                if (r.freq_mhz) freq[ti].push_back(*r.freq_mhz);
    }
    json out = json::object();
    json fits = json::array(), freqs = json::array();
    for (auto t : kAllDroneTypes) {
        const auto ti = static_cast<std::size_t>(t);
        if (rcs[ti].size() >= 2) fits.push_back(rf::to_json(rf::fit_rcs(rcs[ti], t)));
        if (!freq[ti].empty()) freqs.push_back(rf::to_json(rf::freq_likelihood(freq[ti], t)));
    }
    out["rcs"] = fits;
    out["frequency"] = freqs;
    return out;
}

inline TrainResult train(const PipelineConfig& config) {
    if (!fs::is_directory(config.data_root))
        throw ConfigError("data root does not exist: " + config.data_root.string());
    std::vector<std::string> ids = config.scenarios;
    if (ids.empty())
        for (const auto& p : list_scenarios(config.data_root)) ids.push_back(p.filename().string());
    if (ids.empty()) throw DataError("ingest: no scenarios under " + config.data_root.string());

    const auto scenarios = run_stage("ingest", [&] {
        std::vector<Scenario> out;
        for (const auto& id : ids) {
            const fs::path dir = config.data_root / id;
            if (!fs::exists(dir / kDroneLogFile)) throw DataError("scenario incomplete: no drone log in " + id);
            out.push_back(load_scenario(dir));
        }
        return out;
    });

    TrainResult res;
    ModelBundle& b = res.bundle;
    b.seed = config.seed;
    b.config = to_json(config);
    b.input_digest = input_digest(config.data_root, ids);
    b.analysis = run_stage("analysis", [&] { return analyze(scenarios, config.iqr); });

    FrozenPrep& p = b.prep;
    p.merge = config.merge;

    run_stage("iqr", [&] {
        p.iqr_sensor = config.iqr.sensor;
        for (auto f : config.iqr.fields) {
            std::vector<double> pooled;
            for (const auto& sc : scenarios)
                for (const auto& r : sc.streams[index_of(p.iqr_sensor)])
                    if (auto v = field_value(r, f)) pooled.push_back(*v);
            p.fences.emplace_back(f, prep::iqr_fences(pooled));
        }
    });

    run_stage("kmeans", [&] {
        p.cluster_sensor = config.kmeans.sensor;
        p.cluster_fields = config.kmeans.fields;
        const std::size_t dims = p.cluster_fields.size();
        std::vector<SensorReading> readings;
        std::vector<DroneLogRecord> truth;
        for (const auto& sc : scenarios) {
            for (const auto& r : sc.streams[index_of(p.cluster_sensor)]) {
                bool complete = true;
                for (auto f : p.cluster_fields) complete = complete && field_value(r, f).has_value();
                if (complete) readings.push_back(r);
            }
            for (const auto& lr : *sc.log) truth.push_back(lr.record);
        }
        if (readings.empty()) throw DataError("no readings to cluster");
        p.cluster_mean.assign(dims, 0.0);
        p.cluster_scale.assign(dims, 0.0);
        for (const auto& r : readings)
            for (std::size_t i = 0; i < dims; ++i) p.cluster_mean[i] += *field_value(r, p.cluster_fields[i]);
        for (auto& m : p.cluster_mean) m /= static_cast<double>(readings.size());
        for (const auto& r : readings)
            for (std::size_t i = 0; i < dims; ++i) {
                const double d = *field_value(r, p.cluster_fields[i]) - p.cluster_mean[i];
                p.cluster_scale[i] += d * d;
            }
        for (auto& s : p.cluster_scale) {
            s = std::sqrt(s / static_cast<double>(readings.size()));
            if (s == 0.0) s = 1.0;
        }
        std::vector<prep::Point> points;
        for (const auto& r : readings) points.push_back(*cluster_point(p, r));
        const auto km = prep::kmeans(points, config.kmeans.k, derive_seed(config.seed, 0x4B4D));
        p.centroids = km.centroids;
        p.drone_cluster = prep::select_drone_cluster(readings, km.assignments, truth);
        if (config.kmeans.k >= 2) {
            const bool several = std::any_of(km.assignments.begin(), km.assignments.end(),
                                             [&](int a) { return a != km.assignments.front(); });
            if (several) p.silhouette = prep::silhouette(points, km.assignments).mean;
        }
    });

    FusedFrame frame = run_stage("merge", [&] {
        FrozenPrep raw = p;  // one-hot parameters are fitted after the merge
        FusedFrame all;
        for (const auto& sc : scenarios) {
            FusedFrame f = fuse(raw, sc.streams, sc.log);
            if (!f.empty()) append_rows(all, f);
        }
        if (all.empty()) throw DataError("merged training frame is empty");
        return all;
    });

    frame = run_stage("encode", [&] {
        for (const auto& col : config.one_hot_columns) {
            auto vocab = prep::category_vocabulary(frame, col);
            std::sort(vocab.begin(), vocab.end());
            p.one_hot.emplace_back(col, std::move(vocab));
        }
        FusedFrame encoded = encode(p, frame);
        p.columns = encoded.columns;
        return encoded;
    });
    b.analysis["missing"] = prep::to_json(prep::missing_report(frame));
    b.analysis["kmeans_silhouette"] = p.silhouette;

    run_stage("anova", [&] {
        std::vector<prep::AnovaScore> shared;
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            auto& tm = b.targets[t];
            tm.name = target_name(t);
            tm.anova = detail::score_features(frame, t);
            if (tm.anova.empty()) throw DataError("no scorable features for " + tm.name);
            tm.features = prep::select_features(tm.anova, config.selection);
            shared.insert(shared.end(), tm.anova.begin(), tm.anova.end());
        }
        if (config.shared_features) {
            // Best score per column across targets, then one common list.
            std::map<std::string, prep::AnovaScore> best;
            for (const auto& s : shared) {
                auto [it, inserted] = best.emplace(s.feature, s);
                if (!inserted && s.f > it->second.f) it->second = s;
            }
            std::vector<prep::AnovaScore> merged;
            for (auto& [k, s] : best) merged.push_back(s);
            const auto common = prep::select_features(merged, config.selection);
            for (auto& tm : b.targets) tm.features = common;
        }
    });

    run_stage("forest", [&] {
        const auto names = detail::class_names();
        res.report.rows = frame.row_count();
        std::vector<std::size_t> actual, predicted;
        std::vector<std::vector<double>> scores;
        for (std::size_t t = 0; t < kTargetCount; ++t) {
            auto& tm = b.targets[t];
            const auto data = detail::dataset_for(frame, tm.features);
            forest::Targets targets;
            if (t == kTypeTarget) {
                std::vector<int> labels;
                for (const auto& row : *frame.targets) labels.push_back(static_cast<int>(row.type));
                targets = forest::Targets::classification(std::move(labels), kDroneTypeCount);
            } else {
                std::vector<double> y;
                for (const auto& row : *frame.targets) y.push_back(target_value(row, t));
                targets = forest::Targets::regression(std::move(y));
            }
            auto params = config.forest[t];
            params.threads = config.threads;
            const auto cls = t == kTypeTarget ? names : std::vector<std::string>{};

            const forest::FoldSpec folds{config.cv_folds, derive_seed(config.seed, 0xC5 + t)};
            const auto cv = forest::cross_validate(data, targets, params, folds, derive_seed(config.seed, 0xC0 + t), cls);
            tm.cv = {{"folds", config.cv_folds}};
            if (t == kTypeTarget) {
                tm.cv["mean_accuracy"] = *cv.mean_accuracy;
                for (std::size_t r = 0; r < frame.row_count(); ++r) {
                    actual.push_back(static_cast<std::size_t>(targets.labels[r]));
                    predicted.push_back(cv.out_of_fold[r].label);
                    scores.push_back(cv.out_of_fold[r].vote_fraction);
                }
            } else {
                tm.cv["mean_mae"] = cv.mean_mae;
                tm.cv["mean_mse"] = cv.mean_mse;
                tm.cv["mean_r2"] = cv.mean_r2 ? json(*cv.mean_r2) : json(nullptr);
                std::vector<double> yhat;
                for (const auto& pr : cv.out_of_fold) yhat.push_back(pr.value);
                res.report.regression.emplace_back(
                    tm.name, metrics::regression_metrics(metrics::RegressionSample(targets.values, yhat)));
            }
            tm.model = forest::fit_forest(data, targets, params, derive_seed(config.seed, t + 1), tm.features,
                                          tm.name, cls);
        }
        res.report.classification = metrics::classification_report(names, actual, predicted, scores);
    });

    b.training_report = res.report;
    res.frame = std::move(frame);
    return res;
}

// ---------------------------------------------------------------------------
// Prediction

struct TrackEstimate {
    Timestamp t;
    std::vector<SensorName> sensors;
    double latitude = 0.0;
    double longitude = 0.0;
    double speed = 0.0;
    double altitude = 0.0;
    DroneType type = DroneType::MavicPro;
    double confidence = 0.0;
    std::array<double, kDroneTypeCount> votes{};
    int track_id = 0;
};

struct TrackGate {
    double base_m = 150.0;
    double max_speed_mps = 25.0;
    std::int64_t max_gap_ms = 5000;
    /// Tracks shorter than this are folded into the nearest longer track.
    std::size_t min_points = 3;
};

/// Greedy nearest-neighbour association of estimates into tracks, in
/// timestamp order. An estimate joins the closest live track whose gate it
/// falls in, otherwise it opens a new track. Ids start at 1.
inline void assign_tracks(std::vector<TrackEstimate>& rows, const TrackGate& gate = {}) {
    struct Live {
        int id;
        GeoPosition last;
        Timestamp t;
    };
    std::vector<Live> live;
    int next_id = 1;
    for (auto& r : rows) {
        const GeoPosition pos{r.latitude, r.longitude, std::nullopt};
        std::optional<std::size_t> best;
        double best_d = 0.0;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const auto dt = r.t.millis - live[i].t.millis;
            if (dt > gate.max_gap_ms) continue;
            const double d = haversine_m(live[i].last, pos);
            const double limit = gate.base_m + gate.max_speed_mps * static_cast<double>(dt) / 1000.0;
            if (d <= limit && (!best || d < best_d)) {
                best = i;
                best_d = d;
            }
        }
        if (!best) {
            live.push_back({next_id++, pos, r.t});
            best = live.size() - 1;
        }
        live[*best].last = pos;
        live[*best].t = r.t;
        r.track_id = live[*best].id;
    }

    std::map<int, std::size_t> sizes;
    for (const auto& r : rows) ++sizes[r.track_id];
    const bool any_long = std::any_of(sizes.begin(), sizes.end(), [&](auto& kv) { return kv.second >= gate.min_points; });
    if (any_long) {
        std::vector<int> reassigned(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            reassigned[i] = rows[i].track_id;
            if (sizes[rows[i].track_id] >= gate.min_points) continue;
            // Closest point of a long track, by time then distance.
            std::optional<std::size_t> best;
            std::pair<std::int64_t, double> best_key{};
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (sizes[rows[j].track_id] < gate.min_points) continue;
                const std::pair<std::int64_t, double> key{
                    std::abs(rows[j].t.millis - rows[i].t.millis),
                    haversine_m({rows[i].latitude, rows[i].longitude, std::nullopt},
                                {rows[j].latitude, rows[j].longitude, std::nullopt})};
                if (!best || key < best_key) {
                    best = j;
                    best_key = key;
                }
            }
            reassigned[i] = rows[*best].track_id;
        }
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].track_id = reassigned[i];
    }
    // Renumber by first appearance.
    std::map<int, int> ids;
    for (auto& r : rows) {
        auto [it, inserted] = ids.emplace(r.track_id, static_cast<int>(ids.size()) + 1);
        r.track_id = it->second;
    }
}

struct PredictResult {
    std::vector<TrackEstimate> rows;
    FilterCounts filtered;
    std::vector<std::string> warnings;
};

inline PredictResult predict(const ModelBundle& b, const Scenario& scenario) {
    PredictResult res;
    const FusedFrame frame = run_stage("merge", [&] { return fuse(b.prep, scenario.streams, scenario.log, &res.filtered); });
    if (frame.empty()) {
        res.warnings.emplace_back("no fused rows for " + scenario.id + "; prediction output is empty");
        return res;
    }
    if (frame.columns != b.prep.columns) throw ModelError("feature mismatch: fused columns differ from training");
    for (std::size_t i = 0; i < res.filtered.unseen_categories.size(); ++i)
        if (res.filtered.unseen_categories[i] > 0)
            res.warnings.push_back(std::to_string(res.filtered.unseen_categories[i]) + " rows carry a " +
                                   b.prep.one_hot[i].first + " category unseen in training");

    run_stage("predict", [&] {
        std::array<forest::Dataset, kTargetCount> data;
        for (std::size_t t = 0; t < kTargetCount; ++t) data[t] = detail::dataset_for(frame, b.targets[t].features);
        res.rows.resize(frame.row_count());
        for (std::size_t r = 0; r < frame.row_count(); ++r) {
            auto& e = res.rows[r];
            e.t = frame.timestamps[r];
            for (auto s : kAllSensors)
                if (frame.provenance[r][index_of(s)]) e.sensors.push_back(s);
            e.latitude = forest::predict(b.targets[0].model, data[0], r).value;
            e.longitude = forest::predict(b.targets[1].model, data[1], r).value;
            e.speed = forest::predict(b.targets[2].model, data[2], r).value;
            e.altitude = forest::predict(b.targets[3].model, data[3], r).value;
            const auto cls = forest::predict(b.targets[kTypeTarget].model, data[kTypeTarget], r);
            e.type = static_cast<DroneType>(cls.label);
            for (std::size_t c = 0; c < kDroneTypeCount && c < cls.vote_fraction.size(); ++c)
                e.votes[c] = cls.vote_fraction[c];
            e.confidence = e.votes[cls.label];
        }
    });
    assign_tracks(res.rows);
    return res;
}

inline std::vector<std::string> prediction_header() {
    std::vector<std::string> h{"timestamp", "sensors", "latitude", "longitude", "speed",
                               "altitude",  "drone_type", "confidence"};
    for (auto t : kAllDroneTypes) h.push_back("vote_" + std::string(short_name(t)));
    h.emplace_back("track_id");
    return h;
}

inline void write_predictions(std::ostream& out, const std::vector<TrackEstimate>& rows) {
    csv::Writer w(out);
    w.row(prediction_header());
    for (const auto& e : rows) {
        std::string sensors;
        for (auto s : e.sensors) {
            if (!sensors.empty()) sensors += '|';
            sensors += to_string(s);
        }
        std::vector<std::string> f{std::to_string(e.t.millis), sensors, csv::format_double(e.latitude),
                                   csv::format_double(e.longitude), csv::format_double(e.speed),
                                   csv::format_double(e.altitude), std::string(short_name(e.type)),
                                   csv::format_double(e.confidence)};
        for (double v : e.votes) f.push_back(csv::format_double(v));
        f.push_back(std::to_string(e.track_id));
        w.row(f);
    }
}

inline void write_predictions(const fs::path& path, const std::vector<TrackEstimate>& rows) {
    std::ostringstream ss;
    write_predictions(ss, rows);
    write_text(path, ss.str());
}

inline std::vector<TrackEstimate> parse_predictions(const csv::Table& table) {
    const auto header = prediction_header();
    std::vector<std::size_t> idx;
    for (const auto& h : header) {
        auto j = table.column(h);
        if (!j) throw DataError("schema violation: prediction file lacks column '" + h + "'");
        idx.push_back(*j);
    }
    auto number = [](const std::string& s, const char* what) {
        auto v = csv::parse_double(s);
        if (!v) throw DataError(std::string("unparseable ") + what + " '" + s + "'");
        return *v;
    };
    std::vector<TrackEstimate> rows;
    for (const auto& rec : table.rows) {
        if (rec.size() < header.size()) throw DataError("schema violation: short prediction row");
        TrackEstimate e;
        auto ts = csv::parse_int(rec[idx[0]]);
        if (!ts) throw DataError("unparseable timestamp '" + rec[idx[0]] + "'");
        e.t = Timestamp{*ts};
        std::string_view sv = rec[idx[1]];
        while (!sv.empty()) {
            const auto bar = sv.find('|');
            const auto name = sv.substr(0, bar);
            auto s = parse_sensor_name(name);
            if (!s) throw DataError("unknown sensor '" + std::string(name) + "'");
            e.sensors.push_back(*s);
            sv = bar == std::string_view::npos ? std::string_view{} : sv.substr(bar + 1);
        }
        e.latitude = number(rec[idx[2]], "latitude");
        e.longitude = number(rec[idx[3]], "longitude");
        e.speed = number(rec[idx[4]], "speed");
        e.altitude = number(rec[idx[5]], "altitude");
        auto type = parse_drone_type(rec[idx[6]]);
        if (!type) throw DataError("unknown drone type '" + rec[idx[6]] + "'");
        e.type = *type;
        e.confidence = number(rec[idx[7]], "confidence");
        for (std::size_t c = 0; c < kDroneTypeCount; ++c) e.votes[c] = number(rec[idx[8 + c]], "vote");
        auto track = csv::parse_int(rec[idx[8 + kDroneTypeCount]]);
        if (!track) throw DataError("unparseable track_id");
        e.track_id = static_cast<int>(*track);
        rows.push_back(std::move(e));
    }
    return rows;
}

inline std::vector<TrackEstimate> load_predictions(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("prediction file not found: " + path.string());
    return parse_predictions(csv::read(path.string()));
}

/// Scores every target of `b` on an encoded frame that carries targets.
inline metrics::EvaluationReport evaluate(const ModelBundle& b, const FusedFrame& frame) {
    if (!frame.targets) throw DataError("evaluation needs a frame with targets");
    if (frame.columns != b.prep.columns) throw ModelError("feature mismatch: frame columns differ from training");
    metrics::EvaluationReport ev;
    ev.rows = frame.row_count();
    if (frame.empty()) return ev;
    for (std::size_t t = 0; t < kTargetCount; ++t) {
        const auto data = detail::dataset_for(frame, b.targets[t].features);
        if (t == kTypeTarget) {
            std::vector<std::size_t> actual, predicted;
            std::vector<std::vector<double>> scores;
            for (std::size_t r = 0; r < frame.row_count(); ++r) {
                const auto p = forest::predict(b.targets[t].model, data, r);
                actual.push_back(static_cast<std::size_t>((*frame.targets)[r].type));
                predicted.push_back(p.label);
                scores.push_back(p.vote_fraction);
            }
            ev.classification = metrics::classification_report(b.class_names(), actual, predicted, scores);
        } else {
            std::vector<double> y, yhat;
            for (std::size_t r = 0; r < frame.row_count(); ++r) {
                y.push_back(target_value((*frame.targets)[r], t));
                yhat.push_back(forest::predict(b.targets[t].model, data, r).value);
            }
            ev.regression.emplace_back(target_name(t), metrics::regression_metrics(metrics::RegressionSample(y, yhat)));
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Reporting

struct Report {
    json document;
    std::string summary;
};

namespace detail {

inline json range_json(const std::vector<TrackEstimate>& rows, double TrackEstimate::*field) {
    if (rows.empty()) return nullptr;
    double lo = rows.front().*field, hi = lo, sum = 0.0;
    for (const auto& r : rows) {
        lo = std::min(lo, r.*field);
        hi = std::max(hi, r.*field);
        sum += r.*field;
    }
    return {{"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(rows.size())}};
}

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

}  // namespace detail

/// Descriptive statistics when `truth` is absent; the full metric suite
/// when present. Predictions and truth are paired in timestamp order.
inline Report report(std::vector<TrackEstimate> preds, const std::optional<std::vector<LoggedRecord>>& truth) {
    Report rep;
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    std::ostringstream sum;

    json counts = json::object();
    for (auto t : kAllDroneTypes) counts[std::string(short_name(t))] = 0;
    std::map<int, std::size_t> tracks;
    for (const auto& p : preds) {
        counts[std::string(short_name(p.type))] = counts[std::string(short_name(p.type))].get<std::size_t>() + 1;
        ++tracks[p.track_id];
    }
    json desc = {{"rows", preds.size()},
                 {"tracks", tracks.size()},
                 {"class_distribution", counts},
                 {"latitude", detail::range_json(preds, &TrackEstimate::latitude)},
                 {"longitude", detail::range_json(preds, &TrackEstimate::longitude)},
                 {"speed", detail::range_json(preds, &TrackEstimate::speed)},
                 {"altitude", detail::range_json(preds, &TrackEstimate::altitude)}};
    desc["time_extent"] = preds.empty() ? json(nullptr)
                                        : json{{"from", preds.front().t.millis}, {"to", preds.back().t.millis}};
    rep.document["descriptive"] = desc;

    sum << "rows: " << preds.size() << "\n";
    sum << "tracks: " << tracks.size() << "\n";
    sum << "class distribution:";
    for (auto t : kAllDroneTypes) sum << ' ' << short_name(t) << '=' << counts[std::string(short_name(t))].get<std::size_t>();
    sum << "\n";

    if (!truth) {
        rep.document["evaluation"] = nullptr;
        rep.summary = sum.str();
        return rep;
    }

    std::vector<LoggedRecord> sorted = *truth;
    std::stable_sort(sorted.begin(), sorted.end(), [](const LoggedRecord& a, const LoggedRecord& b) {
        return std::tie(a.record.t.millis, a.drone_id) < std::tie(b.record.t.millis, b.drone_id);
    });
    if (sorted.size() != preds.size())
        throw DataError("length mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(sorted.size()) + " truth rows");
    if (preds.empty()) {
        rep.document["evaluation"] = metrics::to_json(metrics::EvaluationReport{});
        rep.summary = sum.str();
        return rep;
    }

    metrics::EvaluationReport ev;
    ev.rows = preds.size();
    std::array<std::vector<double>, 4> y, yhat;
    std::vector<std::size_t> actual, predicted;
    std::vector<std::vector<double>> scores;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& tr = sorted[i].record;
        const auto& p = preds[i];
        y[0].push_back(tr.position.lat_deg);
        y[1].push_back(tr.position.lon_deg);
        y[2].push_back(tr.speed_mps);
        y[3].push_back(tr.position.alt_m.value_or(0.0));
        yhat[0].push_back(p.latitude);
        yhat[1].push_back(p.longitude);
        yhat[2].push_back(p.speed);
        yhat[3].push_back(p.altitude);
        actual.push_back(static_cast<std::size_t>(tr.type));
        predicted.push_back(static_cast<std::size_t>(p.type));
        scores.emplace_back(p.votes.begin(), p.votes.end());
    }
    sum << "\ntarget      R2        MAE           MSE\n";
    for (std::size_t t = 0; t < 4; ++t) {
        const auto m = metrics::regression_metrics(metrics::RegressionSample(y[t], yhat[t]));
        ev.regression.emplace_back(target_name(t), m);
        std::string name = target_name(t);
        name.resize(10, ' ');
        sum << name << "  " << (m.r2 ? detail::fixed(*m.r2) : std::string("n/a   ")) << "  "
            << detail::fixed(m.mae, 6) << "  " << detail::fixed(m.mse, 8) << "\n";
    }
    ev.classification = metrics::classification_report(detail::class_names(), actual, predicted, scores);
    sum << "\nclass         accuracy  precision  recall  F1      AUC\n";
    for (const auto& c : ev.classification->per_class) {
        std::string name = c.name;
        name.resize(12, ' ');
        sum << name << "  " << detail::fixed(c.scores.accuracy) << "    " << detail::fixed(c.scores.precision)
            << "     " << detail::fixed(c.scores.recall) << "  " << detail::fixed(c.scores.f1) << "  "
            << (c.auc ? detail::fixed(*c.auc) : std::string("n/a")) << "\n";
    }
    sum << "overall accuracy: " << detail::fixed(ev.classification->accuracy) << "\n";
    rep.document["evaluation"] = metrics::to_json(ev);
    rep.summary = sum.str();
    return rep;
}

}  // namespace uranus::pipeline

#pragma once

// Signature analyses over observed data: Gaussian RCS fits per drone type,
// control-link frequency likelihoods, and drone-to-sensor distance series.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uranus/core.hpp"
#include "uranus/csv.hpp"

namespace uranus::rf {

using nlohmann::json;

struct RcsModel {
    std::optional<DroneType> type;
    double mean_dbsm = 0.0;
    double sigma_dbsm = 0.0;
    std::size_t count = 0;
    bool degenerate = false;

    [[nodiscard]] double mode_dbsm() const { return mean_dbsm; }

    [[nodiscard]] double pdf(double x) const {
        if (degenerate) return x == mean_dbsm ? std::numeric_limits<double>::infinity() : 0.0;
        const double z = (x - mean_dbsm) / sigma_dbsm;
        return std::exp(-0.5 * z * z) / (sigma_dbsm * std::sqrt(2.0 * kPi));
    }
};

/// Maximum-likelihood normal fit: sample mean and population sigma.
inline RcsModel fit_rcs(std::span<const double> samples, std::optional<DroneType> type = std::nullopt) {
    if (samples.size() < 2) throw DataError("RCS fit needs at least 2 samples");
    RcsModel m;
    m.type = type;
    m.count = samples.size();
    const double n = static_cast<double>(samples.size());
    double mean = 0.0;
    for (double v : samples) {
        if (!std::isfinite(v)) throw DataError("non-finite RCS sample");
        mean += v;
    }
    mean /= n;
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    m.mean_dbsm = mean;
    m.sigma_dbsm = std::sqrt(ss / n);
    m.degenerate = m.sigma_dbsm == 0.0;
    return m;
}

struct FreqLikelihood {
    std::optional<DroneType> type;
    std::map<double, double> pmf;
    double mode_mhz = 0.0;
    double mode_probability = 0.0;
    std::size_t count = 0;
};

/// Empirical PMF over observed channels. Ties for the mode go to the lowest
/// channel.
inline FreqLikelihood freq_likelihood(std::span<const double> samples, std::optional<DroneType> type = std::nullopt) {
    FreqLikelihood f;
    f.type = type;
    f.count = samples.size();
    if (samples.empty()) return f;
    std::map<double, std::size_t> counts;
    for (double v : samples) ++counts[v];
    std::size_t best = 0;
    for (const auto& [ch, c] : counts) {
        f.pmf[ch] = static_cast<double>(c) / static_cast<double>(samples.size());
        if (c > best) {
            best = c;
            f.mode_mhz = ch;
        }
    }
    f.mode_probability = f.pmf[f.mode_mhz];
    return f;
}

struct SeriesPoint {
    Timestamp t;
    double value = 0.0;
};

struct DistanceSeries {
    SensorName sensor = SensorName::Alvira;
    std::vector<SeriesPoint> distance_m;
    std::vector<SeriesPoint> altitude_m;
};

inline DistanceSeries distance_series(std::span<const DroneLogRecord> track, const SensorSpec& sensor) {
    DistanceSeries s;
    s.sensor = sensor.name;
    std::vector<const DroneLogRecord*> ordered;
    for (const auto& r : track) ordered.push_back(&r);
    std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->t < b->t; });
    for (const auto* r : ordered) {
        GeoPosition p = r->position;
        if (!p.alt_m) p.alt_m = 0.0;
        s.distance_m.push_back({r->t, distance_3d_m(sensor.position, p)});
        s.altitude_m.push_back({r->t, *p.alt_m});
    }
    return s;
}

// ---------------------------------------------------------------------------
// Export

inline json to_json(const RcsModel& m) {
    json j{{"mean_dbsm", m.mean_dbsm}, {"sigma_dbsm", m.sigma_dbsm}, {"count", m.count}, {"degenerate", m.degenerate}};
    j["drone_type"] = m.type ? json(model_name(*m.type)) : json(nullptr);
    return j;
}

inline json to_json(const FreqLikelihood& f) {
    json pmf = json::object();
    for (const auto& [ch, p] : f.pmf) pmf[csv::format_double(ch)] = p;
    json j{{"pmf", pmf}, {"mode_mhz", f.mode_mhz}, {"mode_probability", f.mode_probability}, {"count", f.count}};
    j["drone_type"] = f.type ? json(model_name(*f.type)) : json(nullptr);
    return j;
}

inline void write_series_csv(std::ostream& out, const DistanceSeries& s) {
    out << "timestamp,sensor,distance_m,altitude_m\n";
    for (std::size_t i = 0; i < s.distance_m.size(); ++i) {
        out << s.distance_m[i].t.millis << ',' << to_string(s.sensor) << ','
            << csv::format_double(s.distance_m[i].value) << ',' << csv::format_double(s.altitude_m[i].value) << '\n';
    }
}

}  // namespace uranus::rf

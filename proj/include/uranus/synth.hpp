#pragma once

// Synthetic scenarios: ground-truth flight logs for the reference flight
// patterns and the noisy readings the four sensors would report for them.
//
// Geometry is laid out in a local east/north/up frame centred on the RF/DF
// sensor pair; waypoint programs are walked at constant speed and sampled
// on a fixed clock.

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "uranus/core.hpp"
#include "uranus/ingest.hpp"
#include "uranus/random.hpp"

namespace uranus::synth {

struct Vec3 {
    double east = 0.0;
    double north = 0.0;
    double up = 0.0;
};

inline double norm(const Vec3& a, const Vec3& b) {
    const double de = b.east - a.east, dn = b.north - a.north, du = b.up - a.up;
    return std::sqrt(de * de + dn * dn + du * du);
}

/// Fly in a straight line to a point.
struct MoveTo {
    Vec3 target;
};
/// Hold position.
struct Hover {
    double seconds = 0.0;
};
using Leg = std::variant<MoveTo, Hover>;

struct DroneProgram {
    DroneType type = DroneType::MavicPro;
    Vec3 start;
    std::vector<Leg> legs;
    double speed_mps = 10.0;
};

struct FlightPattern {
    std::string id;  // "S1.1" ... "S3"
    std::vector<DroneProgram> drones;
};

inline constexpr double kCruiseSpeedMps = 10.0;

/// Origin of the local frame: midpoint of the two RF/DF sensors.
inline LocalFrame site_frame() {
    const auto d = sensor_spec(SensorName::Diana).position;
    const auto v = sensor_spec(SensorName::Venus).position;
    return LocalFrame{{(d.lat_deg + v.lat_deg) / 2.0, (d.lon_deg + v.lon_deg) / 2.0, 0.0}};
}

inline const std::vector<std::string>& pattern_ids() {
    static const std::vector<std::string> ids{"S1.1", "S1.2", "S1.3", "S1.4", "S2.1",
                                              "S2.2", "S2.3", "S2.4", "S3"};
    return ids;
}

/// Patterns with a training flight log in the reference dataset layout.
inline const std::vector<std::string>& training_pattern_ids() {
    static const std::vector<std::string> ids{"S1.1", "S1.2", "S1.3", "S1.4", "S2.1", "S2.2", "S3"};
    return ids;
}

/// "S1.1" -> "Scenario 1.1".
inline std::string scenario_dir_name(const std::string& pattern_id) {
    return "Scenario " + pattern_id.substr(1);
}

namespace detail {

inline DroneProgram straight_north(DroneType type, double east, double alt_first, double alt_second,
                                   double alt_third) {
    DroneProgram p{type, {east, -1000.0, alt_first}, {}, kCruiseSpeedMps};
    const double third = 2000.0 / 3.0;
    p.legs.push_back(MoveTo{{east, -1000.0 + third, alt_first}});
    p.legs.push_back(MoveTo{{east, -1000.0 + third, alt_second}});
    p.legs.push_back(MoveTo{{east, -1000.0 + 2.0 * third, alt_second}});
    p.legs.push_back(MoveTo{{east, -1000.0 + 2.0 * third, alt_third}});
    p.legs.push_back(MoveTo{{east, 1000.0, alt_third}});
    return p;
}

/// Converging approach from `east_offset` over `approach_m`, meeting the
/// sensor site, then a second leg along `exit_heading_deg` for `exit_m`.
inline DroneProgram converge(DroneType type, double east_offset, double approach_m, double exit_heading_deg,
                             double exit_m, double alt) {
    const double north0 = -std::sqrt(approach_m * approach_m - east_offset * east_offset);
    DroneProgram p{type, {east_offset, north0, alt}, {}, kCruiseSpeedMps};
    p.legs.push_back(MoveTo{{0.0, 0.0, alt}});
    const double h = deg_to_rad(exit_heading_deg);
    p.legs.push_back(MoveTo{{exit_m * std::sin(h), exit_m * std::cos(h), alt}});
    return p;
}

inline DroneProgram zigzag(DroneType type, double east, double exit_heading_deg, double alt) {
    DroneProgram p{type, {east, -1000.0, alt}, {}, kCruiseSpeedMps};
    for (int i = 1; i <= 10; ++i) {
        const double lateral = (i % 2 == 1) ? 50.0 : 0.0;
        p.legs.push_back(MoveTo{{east + (east < 0 ? -lateral : lateral), -1000.0 + 100.0 * i, alt}});
    }
    const double h = deg_to_rad(exit_heading_deg);
    p.legs.push_back(MoveTo{{east + 750.0 * std::sin(h), 750.0 * std::cos(h), alt}});
    return p;
}

}  // namespace detail

/// Waypoint program for a reference flight pattern.
inline FlightPattern make_pattern(const std::string& id) {
    using detail::converge;
    using detail::straight_north;
    FlightPattern fp{id, {}};
    if (id == "S1.1") {
        // 2 km pass over the RF sensors, stepping through 50/100/150 m.
        fp.drones.push_back(straight_north(DroneType::MavicPro, 25.0, 50.0, 100.0, 150.0));
    } else if (id == "S1.2") {
        // Same path at 100 m with a one-minute hover 100 m after the start.
        DroneProgram p{DroneType::Phantom4Pro, {25.0, -1000.0, 100.0}, {}, kCruiseSpeedMps};
        p.legs.push_back(MoveTo{{25.0, -900.0, 100.0}});
        p.legs.push_back(Hover{60.0});
        p.legs.push_back(MoveTo{{25.0, 1000.0, 100.0}});
        fp.drones.push_back(p);
    } else if (id == "S1.3") {
        // 100 m out, turn, 100 m to the end point.
        DroneProgram p{DroneType::MavicPro, {-50.0, -50.0, 60.0}, {}, kCruiseSpeedMps};
        p.legs.push_back(MoveTo{{-50.0, 50.0, 60.0}});
        p.legs.push_back(MoveTo{{50.0, 50.0, 60.0}});
        fp.drones.push_back(p);
    } else if (id == "S1.4") {
        // 2 km west to east while climbing from 20 m to 200 m.
        DroneProgram p{DroneType::MavicPro, {-1000.0, 40.0, 20.0}, {}, kCruiseSpeedMps};
        p.legs.push_back(MoveTo{{1000.0, 40.0, 200.0}});
        fp.drones.push_back(p);
    } else if (id == "S2.1") {
        // Two parallel 2 km tracks, 300 m apart.
        fp.drones.push_back(straight_north(DroneType::Phantom4Pro, -150.0, 70.0, 70.0, 70.0));
        fp.drones.push_back(straight_north(DroneType::Mavic2, 150.0, 90.0, 90.0, 90.0));
    } else if (id == "S2.2") {
        // 400 m apart, 750 m diagonal approach to the sensors, then 750 m at 30 degrees.
        fp.drones.push_back(converge(DroneType::Phantom4Pro, -200.0, 750.0, 30.0, 750.0, 60.0));
        fp.drones.push_back(converge(DroneType::MavicPro, 200.0, 750.0, -30.0, 750.0, 100.0));
    } else if (id == "S2.3") {
        // 250 m apart, 650 m diagonal approach, then 750 m straight on.
        fp.drones.push_back(converge(DroneType::Phantom4Pro, -125.0, 650.0, 0.0, 750.0, 60.0));
        fp.drones.push_back(converge(DroneType::Mavic2, 125.0, 650.0, 0.0, 750.0, 100.0));
    } else if (id == "S2.4") {
        // Zig-zag 300 m apart up to the sensors, then 750 m diagonal.
        fp.drones.push_back(detail::zigzag(DroneType::Phantom4Pro, -150.0, 30.0, 60.0));
        fp.drones.push_back(detail::zigzag(DroneType::MavicPro, 150.0, -30.0, 100.0));
    } else if (id == "S3") {
        // Fixed wing flying straight at the sensors and on past them.
        DroneProgram p{DroneType::ParrotDisco, {-1000.0, -1000.0, 80.0}, {}, kCruiseSpeedMps};
        p.legs.push_back(MoveTo{{500.0, 500.0, 80.0}});
        fp.drones.push_back(p);
    } else {
        throw ConfigError("unknown pattern id '" + id + "'");
    }
    return fp;
}

// ---------------------------------------------------------------------------
// Ground truth

namespace detail {

/// Position along a program at `t` seconds after take-off; clamps at the end.
inline Vec3 position_at(const DroneProgram& p, double t) {
    Vec3 at = p.start;
    double remaining = t;
    for (const auto& leg : p.legs) {
        if (const auto* h = std::get_if<Hover>(&leg)) {
            if (remaining <= h->seconds) return at;
            remaining -= h->seconds;
            continue;
        }
        const Vec3& to = std::get<MoveTo>(leg).target;
        const double len = norm(at, to);
        const double dur = len / p.speed_mps;
        if (remaining <= dur && dur > 0.0) {
            const double f = remaining / dur;
            return {at.east + f * (to.east - at.east), at.north + f * (to.north - at.north),
                    at.up + f * (to.up - at.up)};
        }
        remaining -= dur;
        at = to;
    }
    return at;
}

inline double program_duration(const DroneProgram& p) {
    Vec3 at = p.start;
    double total = 0.0;
    for (const auto& leg : p.legs) {
        if (const auto* h = std::get_if<Hover>(&leg)) {
            total += h->seconds;
        } else {
            const Vec3& to = std::get<MoveTo>(leg).target;
            total += norm(at, to) / p.speed_mps;
            at = to;
        }
    }
    return total;
}

inline std::int64_t pattern_epoch_ms(const std::string& id) {
    std::int64_t h = 0;
    for (char c : id) h = h * 31 + static_cast<unsigned char>(c);
    return 1'600'000'000'000 + (h % 1000) * 10'000'000;
}

}  // namespace detail

/// One flight log per drone. The second drone of a pair is sampled half a
/// period after the first so the two tracks stay separable by timestamp.
/// Reported speed is the finite difference of consecutive true positions.
inline std::vector<std::vector<DroneLogRecord>> generate_truth(const FlightPattern& pattern, std::int64_t sample_ms,
                                                               std::uint64_t seed) {
    if (sample_ms <= 0) throw ConfigError("sample period must be positive");
    (void)seed;  // flight programs are deterministic; the seed is reserved for sensor noise
    const LocalFrame frame = site_frame();
    const std::int64_t epoch = detail::pattern_epoch_ms(pattern.id);
    const double dt = static_cast<double>(sample_ms) / 1000.0;

    std::vector<std::vector<DroneLogRecord>> tracks;
    for (std::size_t d = 0; d < pattern.drones.size(); ++d) {
        const auto& prog = pattern.drones[d];
        const std::int64_t offset = static_cast<std::int64_t>(d) * sample_ms / 2;
        const double duration = detail::program_duration(prog);
        const auto samples = static_cast<std::size_t>(std::floor(duration / dt)) + 1;

        std::vector<Vec3> pts;
        for (std::size_t k = 0; k < samples; ++k) pts.push_back(detail::position_at(prog, k * dt));

        std::vector<DroneLogRecord> track;
        for (std::size_t k = 0; k < samples; ++k) {
            const std::size_t a = k == 0 ? 0 : k - 1;
            const std::size_t b = k == 0 ? std::min<std::size_t>(1, samples - 1) : k;
            const double speed = a == b ? 0.0 : norm(pts[a], pts[b]) / dt;
            DroneLogRecord r;
            r.t = Timestamp{epoch + offset + static_cast<std::int64_t>(k) * sample_ms};
            r.position = frame.to_geo(pts[k].east, pts[k].north, pts[k].up);
            r.speed_mps = speed;
            r.type = prog.type;
            track.push_back(r);
        }
        tracks.push_back(std::move(track));
    }
    return tracks;
}

// ---------------------------------------------------------------------------
// Sensor model

/// Mean RCS (dBsm) per drone type.
inline double rcs_mean_dbsm(DroneType t) {
    switch (t) {
        case DroneType::MavicPro: return -14.05;
        case DroneType::Mavic2: return -3.11;
        case DroneType::ParrotDisco: return -10.82;
        case DroneType::Phantom4Pro: return -8.55;
    }
    return 0.0;
}

/// Most likely control-link channel (MHz) and its probability per type.
inline std::pair<double, double> frequency_mode(DroneType t) {
    switch (t) {
        case DroneType::MavicPro: return {2406.5, 0.44};
        case DroneType::Mavic2: return {2416.5, 0.36};
        case DroneType::ParrotDisco: return {2440.0, 1.00};
        case DroneType::Phantom4Pro: return {2471.5, 0.38};
    }
    return {0.0, 0.0};
}

/// Channel PMF: the mode plus the remaining mass spread evenly over the
/// channels 10 and 20 MHz either side that fall inside the 2.4 GHz band.
inline std::map<double, double> default_frequency_pmf(DroneType t) {
    const auto [mode, p] = frequency_mode(t);
    std::map<double, double> pmf{{mode, p}};
    if (p >= 1.0) return pmf;
    std::vector<double> neighbours;
    for (double off : {-20.0, -10.0, 10.0, 20.0}) {
        const double ch = mode + off;
        if (ch >= 2400.0 && ch <= 2483.5) neighbours.push_back(ch);
    }
    for (double ch : neighbours) pmf[ch] = (1.0 - p) / static_cast<double>(neighbours.size());
    return pmf;
}

struct NoiseModel {
    double position_sigma_m = 5.0;
    double bearing_sigma_deg = 2.0;
    double rss_sigma_db = 2.0;
    std::array<double, kDroneTypeCount> rcs_mean_dbsm{};
    std::array<double, kDroneTypeCount> rcs_sigma_dbsm{};
    std::array<std::map<double, double>, kDroneTypeCount> frequency_pmf;
    double drop_probability = 0.05;
    /// Arcus glitches: RCS and range spikes that the IQR stage should remove.
    double arcus_outlier_probability = 0.01;
    /// Stationary Alvira clutter return emitted once per sample period.
    bool alvira_clutter = true;
    double transmit_power_dbm = 20.0;
    std::uint64_t seed = 0;

    static NoiseModel defaults(std::uint64_t seed = 0) {
        NoiseModel n;
        for (auto t : kAllDroneTypes) {
            const auto i = static_cast<std::size_t>(t);
            n.rcs_mean_dbsm[i] = synth::rcs_mean_dbsm(t);
            n.rcs_sigma_dbsm[i] = 2.0;
            n.frequency_pmf[i] = default_frequency_pmf(t);
        }
        n.seed = seed;
        return n;
    }

    static NoiseModel noiseless(std::uint64_t seed = 0) {
        NoiseModel n = defaults(seed);
        n.position_sigma_m = 0.0;
        n.bearing_sigma_deg = 0.0;
        n.rss_sigma_db = 0.0;
        n.rcs_sigma_dbsm.fill(0.0);
        n.drop_probability = 0.0;
        n.arcus_outlier_probability = 0.0;
        n.alvira_clutter = false;
        return n;
    }

    void validate() const {
        if (position_sigma_m < 0 || bearing_sigma_deg < 0 || rss_sigma_db < 0)
            throw ConfigError("noise sigmas must be non-negative");
        for (double s : rcs_sigma_dbsm)
            if (s < 0) throw ConfigError("noise sigmas must be non-negative");
        if (!(drop_probability >= 0.0 && drop_probability < 1.0))
            throw ConfigError("drop probability must lie in [0, 1)");
        for (const auto& pmf : frequency_pmf) {
            double total = 0.0;
            for (const auto& [ch, p] : pmf) {
                if (p < 0.0 || ch <= 0.0) throw ConfigError("invalid frequency PMF entry");
                total += p;
            }
            if (std::abs(total - 1.0) > 1e-9) throw ConfigError("frequency PMF must sum to 1");
        }
    }
};

/// Fixed reporting latency per sensor (ms).
inline std::int64_t sensor_latency_ms(SensorName s) {
    switch (s) {
        case SensorName::Alvira: return 60;
        case SensorName::Arcus: return 20;
        case SensorName::Diana: return 140;
        case SensorName::Venus: return 180;
    }
    return 0;
}

/// Free-space received power for a transmitter at `distance_m`.
inline double free_space_rss_dbm(double tx_dbm, double distance_m, double freq_mhz) {
    const double d_km = std::max(distance_m, 1.0) / 1000.0;
    return tx_dbm - (20.0 * std::log10(d_km) + 20.0 * std::log10(freq_mhz) + 32.44);
}

/// Where the stationary Alvira clutter sits (local east/north, m).
inline constexpr std::array<double, 2> kClutterEastNorth{420.0, 380.0};
inline constexpr double kClutterRcsMeanDbsm = 12.0;

inline double fold_bearing(double bearing) { return std::fmod(bearing, 180.0); }

inline double wrap_bearing(double bearing) {
    double b = std::fmod(bearing, 360.0);
    if (b < 0.0) b += 360.0;
    return b >= 360.0 ? 0.0 : b;
}

/// Noisy readings from each listed sensor for every truth sample.
inline SensorStreams simulate_sensors(const std::vector<std::vector<DroneLogRecord>>& truth,
                                      const std::vector<SensorSpec>& sensors, const NoiseModel& noise) {
    noise.validate();
    bool any = false;
    for (const auto& t : truth) any = any || !t.empty();
    if (!any) throw DataError("truth is empty");

    const LocalFrame frame = site_frame();
    SensorStreams out;

    for (std::size_t d = 0; d < truth.size(); ++d) {
        // Independent stream per drone; emission channel is shared by both RF sensors.
        Rng rng(derive_seed(noise.seed, d));
        for (const auto& rec : truth[d]) {
            const auto ti = static_cast<std::size_t>(rec.type);
            const double channel = [&] {
                std::vector<double> chans, weights;
                for (const auto& [c, p] : noise.frequency_pmf[ti]) {
                    chans.push_back(c);
                    weights.push_back(p);
                }
                return chans[rng.categorical(weights)];
            }();
            const auto truth_local = frame.to_local(rec.position);
            const double alt = rec.position.alt_m.value_or(0.0);

            for (const auto& spec : sensors) {
                // Draw every variate so a dropped reading does not shift later ones.
                const bool dropped = rng.bernoulli(noise.drop_probability);
                const double jitter = std::floor(rng.uniform(0.0, 40.0));
                const double ne = rng.normal(0.0, noise.position_sigma_m);
                const double nn = rng.normal(0.0, noise.position_sigma_m);
                const double nu = rng.normal(0.0, noise.position_sigma_m);
                const double nb = rng.normal(0.0, noise.bearing_sigma_deg);
                const double nr = rng.normal(0.0, noise.rss_sigma_db);
                const double rcs = rng.normal(noise.rcs_mean_dbsm[ti], noise.rcs_sigma_dbsm[ti]);
                const bool glitch = rng.bernoulli(noise.arcus_outlier_probability);
                if (dropped) continue;

                SensorReading r;
                r.t = Timestamp{rec.t.millis + sensor_latency_ms(spec.name) + static_cast<std::int64_t>(jitter)};
                r.sensor = spec.name;
                if (is_radar(spec.kind)) {
                    const bool three_d = spec.kind == SensorKind::Radar3D;
                    const double up = std::max(0.0, alt + nu);
                    GeoPosition p = frame.to_geo(truth_local[0] + ne, truth_local[1] + nn,
                                                 three_d ? std::optional(up) : std::nullopt);
                    r.position = p;
                    r.bearing_deg = wrap_bearing(bearing_deg(spec.position, p));
                    r.range_m = three_d ? distance_3d_m(spec.position, p) : haversine_m(spec.position, p);
                    r.rcs_dbsm = rcs;
                    if (spec.name == SensorName::Arcus && glitch) {
                        *r.rcs_dbsm += 30.0;
                        *r.range_m *= 3.0;
                    }
                } else {
                    const double b = wrap_bearing(bearing_deg(spec.position, rec.position) + nb);
                    r.bearing_deg = spec.bearing_ambiguous ? fold_bearing(b) : b;
                    r.rss_dbm = free_space_rss_dbm(noise.transmit_power_dbm,
                                                   distance_3d_m(spec.position, rec.position), channel) +
                                nr;
                    r.freq_mhz = channel;
                }
                out[index_of(spec.name)].push_back(r);
            }
        }
    }

    // Stationary clutter seen by Alvira over the whole flight window.
    const bool has_alvira = std::any_of(sensors.begin(), sensors.end(),
                                        [](const SensorSpec& s) { return s.name == SensorName::Alvira; });
    if (noise.alvira_clutter && has_alvira) {
        std::int64_t first = INT64_MAX, last = INT64_MIN, period = 1000;
        for (const auto& t : truth) {
            if (t.empty()) continue;
            first = std::min(first, t.front().t.millis);
            last = std::max(last, t.back().t.millis);
            if (t.size() > 1) period = t[1].t.millis - t[0].t.millis;
        }
        Rng rng(derive_seed(noise.seed, 0xC1u));
        const SensorSpec alvira = sensor_spec(SensorName::Alvira);
        for (std::int64_t t = first; t <= last; t += period) {
            SensorReading r;
            r.t = Timestamp{t + 300};
            r.sensor = SensorName::Alvira;
            GeoPosition p = frame.to_geo(kClutterEastNorth[0] + rng.normal(0.0, noise.position_sigma_m),
                                         kClutterEastNorth[1] + rng.normal(0.0, noise.position_sigma_m),
                                         std::nullopt);
            r.position = p;
            r.bearing_deg = wrap_bearing(bearing_deg(alvira.position, p));
            r.range_m = haversine_m(alvira.position, p);
            r.rcs_dbsm = rng.normal(kClutterRcsMeanDbsm, 1.5);
            out[index_of(SensorName::Alvira)].push_back(r);
        }
    }

    for (auto& s : out) sort_readings(s);
    return out;
}

inline std::vector<SensorSpec> all_sensor_specs() {
    std::vector<SensorSpec> v;
    for (auto s : kAllSensors) v.push_back(sensor_spec(s));
    return v;
}

/// Writes one scenario directory (four sensor files, plus the drone log
/// when `with_log`) under `root` and returns its path.
inline fs::path emit_scenario(const fs::path& root, const std::string& pattern_id, const NoiseModel& noise,
                              bool with_log = true, std::int64_t sample_ms = 1000) {
    const FlightPattern pattern = make_pattern(pattern_id);
    const auto truth = generate_truth(pattern, sample_ms, noise.seed);
    NoiseModel n = noise;
    // FNV-1a of the id; std::hash is implementation-defined.
    std::uint64_t id_hash = 1469598103934665603ull;
    for (char c : pattern_id) id_hash = (id_hash ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    n.seed = derive_seed(noise.seed, id_hash);
    const auto streams = simulate_sensors(truth, all_sensor_specs(), n);

    const fs::path dir = root / scenario_dir_name(pattern_id);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("I/O failure creating " + dir.string() + ": " + ec.message());
    for (auto s : kAllSensors)
        write_sensor_csv(dir / sensor_file_name(s), sensor_spec(s), streams[index_of(s)]);
    if (with_log) {
        std::vector<LoggedRecord> records;
        for (std::size_t d = 0; d < truth.size(); ++d)
            for (const auto& r : truth[d]) records.push_back({r, static_cast<int>(d)});
        std::stable_sort(records.begin(), records.end(), [](const LoggedRecord& a, const LoggedRecord& b) {
            return std::tie(a.record.t.millis, a.drone_id) < std::tie(b.record.t.millis, b.drone_id);
        });
        write_drone_log(dir / kDroneLogFile, records);
    } else if (fs::exists(dir / kDroneLogFile)) {
        fs::remove(dir / kDroneLogFile);
    }
    return dir;
}

}  // namespace uranus::synth

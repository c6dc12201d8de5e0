#pragma once

// Domain types shared by every stage: sensors, drones, readings, flight logs
// and the geodesy kernels used to relate them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uranus {

/// Raised for malformed or inconsistent input data (exit code 3 at the CLI).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for unusable configuration (exit code 2 at the CLI).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for unreadable or incompatible model files (exit code 4 at the CLI).
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// UNIX epoch milliseconds.
struct Timestamp {
    std::int64_t millis = 0;

    friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct GeoPosition {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    std::optional<double> alt_m;  // absent for 2D sources

    friend bool operator==(const GeoPosition&, const GeoPosition&) = default;
};

// ---------------------------------------------------------------------------
// Sensors

/// Enumerator values index per-sensor arrays (alphabetical order).
enum class SensorName : std::uint8_t { Alvira = 0, Arcus = 1, Diana = 2, Venus = 3 };
enum class SensorKind { RfDf, Radar2D, Radar3D };

inline constexpr std::array<SensorName, 4> kAllSensors{
    SensorName::Alvira, SensorName::Arcus, SensorName::Diana, SensorName::Venus};

struct SensorSpec {
    SensorName name;
    SensorKind kind;
    GeoPosition position;
    bool bearing_ambiguous = false;
};

inline std::string_view to_string(SensorName s) {
    switch (s) {
        case SensorName::Diana: return "diana";
        case SensorName::Venus: return "venus";
        case SensorName::Alvira: return "alvira";
        case SensorName::Arcus: return "arcus";
    }
    return "?";
}

inline std::optional<SensorName> parse_sensor_name(std::string_view s) {
    for (auto n : kAllSensors) {
        if (to_string(n) == s) return n;
    }
    return std::nullopt;
}

/// Fixed deployment of the no-drone-zone sensor network. Altitudes are not
/// published for the site, so every sensor sits at 0 m.
inline SensorSpec sensor_spec(SensorName name) {
    switch (name) {
        case SensorName::Diana:
            return {name, SensorKind::RfDf, {51.51913, 5.85795, 0.0}, true};
        case SensorName::Venus:
            return {name, SensorKind::RfDf, {51.51927, 5.85791, 0.0}, false};
        case SensorName::Alvira:
            return {name, SensorKind::Radar2D, {51.52126, 5.85860, 0.0}, false};
        case SensorName::Arcus:
            return {name, SensorKind::Radar3D, {51.52147, 5.87056, 0.0}, false};
    }
    throw std::invalid_argument("unknown sensor");
}

inline bool is_radar(SensorKind k) { return k != SensorKind::RfDf; }

inline constexpr std::size_t index_of(SensorName s) { return static_cast<std::size_t>(s); }

// ---------------------------------------------------------------------------
// Drones

enum class DroneType : std::uint8_t { MavicPro = 0, Mavic2 = 1, Phantom4Pro = 2, ParrotDisco = 3 };
enum class Airframe { MultiCopter, FixedWing };

inline constexpr std::size_t kDroneTypeCount = 4;

/// Class order used for vote fractions and tie-breaking.
inline constexpr std::array<DroneType, kDroneTypeCount> kAllDroneTypes{
    DroneType::MavicPro, DroneType::Mavic2, DroneType::Phantom4Pro, DroneType::ParrotDisco};

inline Airframe airframe(DroneType t) {
    return t == DroneType::ParrotDisco ? Airframe::FixedWing : Airframe::MultiCopter;
}

struct DroneSpec {
    DroneType type;
    double weight_kg;
    double max_velocity_mps;
    double rcs_m2;
    double fcsf_m2;
};

inline DroneSpec drone_spec(DroneType t) {
    if (t == DroneType::ParrotDisco) return {t, 1.0, 20.0, 0.005, 0.1};
    return {t, 1.0, 20.0, 0.01, 0.02};
}

/// Commercial model name as it appears in flight logs.
inline std::string_view model_name(DroneType t) {
    switch (t) {
        case DroneType::MavicPro: return "DJI Mavic Pro";
        case DroneType::Mavic2: return "DJI Mavic 2";
        case DroneType::Phantom4Pro: return "DJI Phantom 4 Pro";
        case DroneType::ParrotDisco: return "Parrot Disco";
    }
    return "?";
}

/// Short identifier used in frames, reports and JSON.
inline std::string_view short_name(DroneType t) {
    switch (t) {
        case DroneType::MavicPro: return "MavicPro";
        case DroneType::Mavic2: return "Mavic2";
        case DroneType::Phantom4Pro: return "Phantom4Pro";
        case DroneType::ParrotDisco: return "ParrotDisco";
    }
    return "?";
}

/// Accepts either the log model name or the short identifier.
inline std::optional<DroneType> parse_drone_type(std::string_view s) {
    for (auto t : kAllDroneTypes) {
        if (s == model_name(t) || s == short_name(t)) return t;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Observations

struct SensorReading {
    Timestamp t;
    SensorName sensor = SensorName::Arcus;
    std::optional<double> bearing_deg;
    std::optional<double> range_m;
    std::optional<double> rss_dbm;
    std::optional<double> rcs_dbsm;
    std::optional<double> freq_mhz;
    std::optional<GeoPosition> position;
};

struct DroneLogRecord {
    Timestamp t;
    GeoPosition position;
    double speed_mps = 0.0;
    DroneType type = DroneType::MavicPro;
};

/// Every violated schema invariant, in a fixed order. An empty list means ok.
inline std::vector<std::string> validate_reading(const SensorReading& r) {
    std::vector<std::string> violations;
    const SensorSpec spec = sensor_spec(r.sensor);

    if (r.t.millis < 0) violations.emplace_back("timestamp negative");
    if (r.bearing_deg && !(*r.bearing_deg >= 0.0 && *r.bearing_deg < 360.0))
        violations.emplace_back("bearing out of range");
    if (r.range_m && !(*r.range_m >= 0.0)) violations.emplace_back("range negative");
    if (r.freq_mhz && !(*r.freq_mhz > 0.0)) violations.emplace_back("frequency not positive");
    if (r.position) {
        const auto& p = *r.position;
        if (!(p.lat_deg >= -90.0 && p.lat_deg <= 90.0)) violations.emplace_back("latitude out of range");
        if (!(p.lon_deg >= -180.0 && p.lon_deg <= 180.0)) violations.emplace_back("longitude out of range");
        if (p.alt_m && !(*p.alt_m >= 0.0)) violations.emplace_back("altitude negative");
    }

    if (spec.kind == SensorKind::RfDf) {
        if (r.range_m) violations.emplace_back("RF/DF carries range");
        if (r.position) violations.emplace_back("RF/DF carries position");
        if (r.rcs_dbsm) violations.emplace_back("RF/DF carries rcs");
        if (!r.bearing_deg && !r.rss_dbm) violations.emplace_back("RF/DF lacks bearing and rss");
    } else {
        if (r.freq_mhz) violations.emplace_back("radar carries frequency");
        if (!r.position && !(r.bearing_deg && r.range_m))
            violations.emplace_back("radar lacks position and bearing+range");
        if (spec.kind == SensorKind::Radar2D && r.position && r.position->alt_m)
            violations.emplace_back("2D radar carries altitude");
    }
    if (r.sensor == SensorName::Diana && r.bearing_deg && *r.bearing_deg >= 180.0)
        violations.emplace_back("bearing outside ambiguous sector");
    return violations;
}

// ---------------------------------------------------------------------------
// Geodesy

/// Great-circle surface distance on a sphere of radius 6,371 km.
inline double haversine_m(const GeoPosition& a, const GeoPosition& b) {
    const double phi1 = deg_to_rad(a.lat_deg);
    const double phi2 = deg_to_rad(b.lat_deg);
    const double dphi = phi2 - phi1;
    const double dlambda = deg_to_rad(b.lon_deg - a.lon_deg);
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    h = std::min(1.0, std::max(0.0, h));
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

/// Slant distance; a missing altitude counts as 0 m.
inline double distance_3d_m(const GeoPosition& a, const GeoPosition& b) {
    const double horiz = haversine_m(a, b);
    const double dalt = b.alt_m.value_or(0.0) - a.alt_m.value_or(0.0);
    return std::sqrt(horiz * horiz + dalt * dalt);
}

/// Initial bearing from a to b, degrees clockwise from north in [0, 360).
inline double bearing_deg(const GeoPosition& a, const GeoPosition& b) {
    const double phi1 = deg_to_rad(a.lat_deg);
    const double phi2 = deg_to_rad(b.lat_deg);
    const double dlambda = deg_to_rad(b.lon_deg - a.lon_deg);
    const double y = std::sin(dlambda) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) - std::sin(phi1) * std::cos(phi2) * std::cos(dlambda);
    double deg = rad_to_deg(std::atan2(y, x));
    deg = std::fmod(deg + 360.0, 360.0);
    return deg >= 360.0 ? 0.0 : deg;
}

/// Local east/north/up frame around a reference point (equirectangular,
/// adequate over the few kilometres of the monitored zone).
struct LocalFrame {
    GeoPosition origin;

    [[nodiscard]] double metres_per_deg_lat() const { return deg_to_rad(1.0) * kEarthRadiusM; }
    [[nodiscard]] double metres_per_deg_lon() const {
        return deg_to_rad(1.0) * kEarthRadiusM * std::cos(deg_to_rad(origin.lat_deg));
    }

    [[nodiscard]] GeoPosition to_geo(double east_m, double north_m, std::optional<double> up_m) const {
        return {origin.lat_deg + north_m / metres_per_deg_lat(), origin.lon_deg + east_m / metres_per_deg_lon(),
                up_m};
    }
    [[nodiscard]] std::array<double, 2> to_local(const GeoPosition& p) const {
        return {(p.lon_deg - origin.lon_deg) * metres_per_deg_lon(),
                (p.lat_deg - origin.lat_deg) * metres_per_deg_lat()};
    }
};

}  // namespace uranus

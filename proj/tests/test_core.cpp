#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "uranus/core.hpp"

using namespace uranus;

namespace {

// Great-circle distance via the chord between unit vectors; algebraically
// independent of the haversine form used by the library.
double chord_distance_m(double lat1, double lon1, double lat2, double lon2) {
    const double d2r = std::acos(-1.0) / 180.0;
    auto unit = [&](double lat, double lon) {
        return std::array<double, 3>{std::cos(lat * d2r) * std::cos(lon * d2r), std::cos(lat * d2r) * std::sin(lon * d2r),
                                     std::sin(lat * d2r)};
    };
    const auto a = unit(lat1, lon1);
    const auto b = unit(lat2, lon2);
    const double c = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
    return 2.0 * std::asin(c / 2.0) * 6'371'000.0;
}

SensorReading reading(SensorName s) {
    SensorReading r;
    r.t = Timestamp{1000};
    r.sensor = s;
    return r;
}

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST(Haversine, DianaVenusMatchesChordOracle) {
    const auto d = sensor_spec(SensorName::Diana).position;
    const auto v = sensor_spec(SensorName::Venus).position;
    const double oracle = chord_distance_m(d.lat_deg, d.lon_deg, v.lat_deg, v.lon_deg);
    EXPECT_NEAR(oracle, 15.8, 0.1);
    EXPECT_NEAR(haversine_m(d, v), oracle, 1e-6);
}

TEST(Haversine, AlviraArcusMatchesChordOracle) {
    const auto a = sensor_spec(SensorName::Alvira).position;
    const auto b = sensor_spec(SensorName::Arcus).position;
    const double oracle = chord_distance_m(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg);
    EXPECT_NEAR(oracle, 828.0, 1.0);
    EXPECT_NEAR(haversine_m(a, b), oracle, 1e-6);
}

TEST(Haversine, IdentityIsZero) {
    const GeoPosition p{51.5, 5.86, std::nullopt};
    EXPECT_EQ(haversine_m(p, p), 0.0);
}

TEST(Haversine, SymmetricAndTriangleInequalityOnSiteBox) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> lat(51.50, 51.54), lon(5.83, 5.89);
    for (int i = 0; i < 1000; ++i) {
        const GeoPosition a{lat(gen), lon(gen), std::nullopt};
        const GeoPosition b{lat(gen), lon(gen), std::nullopt};
        const GeoPosition c{lat(gen), lon(gen), std::nullopt};
        EXPECT_LT(std::abs(haversine_m(a, b) - haversine_m(b, a)), 1e-9);
        EXPECT_LE(haversine_m(a, c), haversine_m(a, b) + haversine_m(b, c) + 1e-6);
    }
}

TEST(Distance3d, VerticalOnly) {
    const GeoPosition a{51.5, 5.86, 0.0}, b{51.5, 5.86, 40.0};
    EXPECT_DOUBLE_EQ(distance_3d_m(a, b), 40.0);
}

TEST(Distance3d, ThreeFourFive) {
    const LocalFrame frame{{51.52, 5.86, 0.0}};
    const GeoPosition a = frame.to_geo(0, 0, 0);
    GeoPosition b = frame.to_geo(30, 0, 0);
    const double horiz = haversine_m(a, b);
    EXPECT_NEAR(horiz, 30.0, 0.01);
    b.alt_m = 40.0;
    EXPECT_NEAR(distance_3d_m(a, b), std::sqrt(horiz * horiz + 1600.0), 1e-9);
    EXPECT_NEAR(distance_3d_m(a, b), 50.0, 0.01);
}

TEST(Distance3d, DianaToNearbyPointReusesHaversine) {
    const auto d = sensor_spec(SensorName::Diana).position;
    GeoPosition v = sensor_spec(SensorName::Venus).position;
    v.alt_m = 0.0;
    EXPECT_NEAR(distance_3d_m(d, v), chord_distance_m(d.lat_deg, d.lon_deg, v.lat_deg, v.lon_deg), 1e-6);
}

TEST(Bearing, CardinalDirections) {
    const GeoPosition o{51.52, 5.86, std::nullopt};
    const LocalFrame f{o};
    EXPECT_NEAR(bearing_deg(o, f.to_geo(0, 100, 0)), 0.0, 0.01);
    EXPECT_NEAR(bearing_deg(o, f.to_geo(100, 0, 0)), 90.0, 0.01);
    EXPECT_NEAR(bearing_deg(o, f.to_geo(0, -100, 0)), 180.0, 0.01);
    EXPECT_NEAR(bearing_deg(o, f.to_geo(-100, 0, 0)), 270.0, 0.01);
}

TEST(LocalFrame, RoundTrip) {
    const LocalFrame f{{51.52, 5.86, 0.0}};
    const auto g = f.to_geo(123.0, -456.0, 78.0);
    const auto back = f.to_local(g);
    EXPECT_NEAR(back[0], 123.0, 1e-6);
    EXPECT_NEAR(back[1], -456.0, 1e-6);
    EXPECT_DOUBLE_EQ(*g.alt_m, 78.0);
}

TEST(SensorSpec, DeploymentTable) {
    EXPECT_EQ(sensor_spec(SensorName::Diana).kind, SensorKind::RfDf);
    EXPECT_EQ(sensor_spec(SensorName::Venus).kind, SensorKind::RfDf);
    EXPECT_EQ(sensor_spec(SensorName::Alvira).kind, SensorKind::Radar2D);
    EXPECT_EQ(sensor_spec(SensorName::Arcus).kind, SensorKind::Radar3D);
    for (auto s : kAllSensors) EXPECT_EQ(sensor_spec(s).bearing_ambiguous, s == SensorName::Diana);
    EXPECT_DOUBLE_EQ(sensor_spec(SensorName::Arcus).position.lat_deg, 51.52147);
    EXPECT_DOUBLE_EQ(sensor_spec(SensorName::Arcus).position.lon_deg, 5.87056);
}

TEST(DroneSpec, TableValues) {
    for (auto t : kAllDroneTypes) {
        const auto s = drone_spec(t);
        EXPECT_EQ(s.weight_kg, 1.0);
        EXPECT_EQ(s.max_velocity_mps, 20.0);
        const bool parrot = t == DroneType::ParrotDisco;
        EXPECT_EQ(airframe(t) == Airframe::FixedWing, parrot);
        EXPECT_DOUBLE_EQ(s.rcs_m2, parrot ? 0.005 : 0.01);
        EXPECT_DOUBLE_EQ(s.fcsf_m2, parrot ? 0.1 : 0.02);
    }
}

TEST(DroneType, ParsesModelNames) {
    EXPECT_EQ(parse_drone_type("DJI Mavic Pro"), DroneType::MavicPro);
    EXPECT_EQ(parse_drone_type("Parrot Disco"), DroneType::ParrotDisco);
    EXPECT_EQ(parse_drone_type("Phantom4Pro"), DroneType::Phantom4Pro);
    EXPECT_FALSE(parse_drone_type("DJI Spark"));
}

TEST(ValidateReading, VenusWithRange) {
    auto r = reading(SensorName::Venus);
    r.bearing_deg = 10.0;
    r.rss_dbm = -60.0;
    r.freq_mhz = 2440.0;
    r.range_m = 100.0;
    EXPECT_TRUE(has(validate_reading(r), "RF/DF carries range"));
}

TEST(ValidateReading, ArcusWithPositionAndRcsIsOk) {
    auto r = reading(SensorName::Arcus);
    r.position = GeoPosition{51.52, 5.86, 80.0};
    r.rcs_dbsm = -12.0;
    EXPECT_TRUE(validate_reading(r).empty());
}

TEST(ValidateReading, BearingOutOfRange) {
    auto r = reading(SensorName::Venus);
    r.bearing_deg = 361.0;
    r.rss_dbm = -60.0;
    EXPECT_TRUE(has(validate_reading(r), "bearing out of range"));
}

TEST(ValidateReading, DeterministicVerdict) {
    auto r = reading(SensorName::Alvira);
    r.position = GeoPosition{51.52, 5.86, 30.0};
    r.freq_mhz = 2440.0;
    r.bearing_deg = -5.0;
    const auto a = validate_reading(r);
    const auto b = validate_reading(r);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(has(a, "2D radar carries altitude"));
    EXPECT_TRUE(has(a, "radar carries frequency"));
    EXPECT_TRUE(has(a, "bearing out of range"));
}

TEST(ValidateReading, DianaOutsideSector) {
    auto r = reading(SensorName::Diana);
    r.bearing_deg = 200.0;
    r.rss_dbm = -60.0;
    EXPECT_TRUE(has(validate_reading(r), "bearing outside ambiguous sector"));
}

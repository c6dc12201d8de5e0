#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "uranus/rfanalysis.hpp"
#include "uranus/synth.hpp"

using namespace uranus;
using namespace uranus::rf;

TEST(FitRcs, RecoversMavicProMean) {
    Rng rng(2024);
    std::vector<double> samples;
    for (int i = 0; i < 10'000; ++i) samples.push_back(rng.normal(-14.05, 2.0));
    const auto m = fit_rcs(samples, DroneType::MavicPro);
    EXPECT_NEAR(m.mean_dbsm, -14.05, 0.1);
    EXPECT_NEAR(m.sigma_dbsm, 2.0, 0.1);
    EXPECT_EQ(m.count, 10'000u);
    EXPECT_EQ(m.mode_dbsm(), m.mean_dbsm);
}

TEST(FitRcs, ConstantSamplesDegenerate) {
    const std::vector<double> s{-3.0, -3.0, -3.0};
    const auto m = fit_rcs(s);
    EXPECT_EQ(m.mean_dbsm, -3.0);
    EXPECT_EQ(m.sigma_dbsm, 0.0);
    EXPECT_TRUE(m.degenerate);
}

TEST(FitRcs, TwoSamples) {
    const std::vector<double> s{-10.0, -6.0};
    const auto m = fit_rcs(s);
    EXPECT_EQ(m.mean_dbsm, -8.0);
    EXPECT_EQ(m.sigma_dbsm, 2.0);
}

TEST(FitRcs, TooFewSamples) {
    const std::vector<double> s{1.0};
    EXPECT_THROW(fit_rcs(s), DataError);
}

TEST(FitRcs, ShiftEquivariant) {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> n(-8.0, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(100), shifted;
        for (auto& x : s) x = n(gen);
        const double c = trial - 25.0;
        for (double x : s) shifted.push_back(x + c);
        const auto a = fit_rcs(s), b = fit_rcs(shifted);
        EXPECT_NEAR(b.mean_dbsm, a.mean_dbsm + c, 1e-9);
        EXPECT_NEAR(b.sigma_dbsm, a.sigma_dbsm, 1e-9);
    }
}

TEST(FitRcs, PdfIntegratesToOne) {
    const std::vector<double> s{-12.0, -10.0, -8.0};
    const auto m = fit_rcs(s);
    double total = 0.0;
    for (double x = -40.0; x <= 20.0; x += 0.01) total += m.pdf(x) * 0.01;
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(FreqLikelihood, ParrotSingleChannel) {
    const std::vector<double> s(50, 2440.0);
    const auto f = freq_likelihood(s, DroneType::ParrotDisco);
    ASSERT_EQ(f.pmf.size(), 1u);
    EXPECT_EQ(f.pmf.at(2440.0), 1.0);
    EXPECT_EQ(f.mode_probability, 1.0);
    EXPECT_EQ(to_json(f)["pmf"]["2440"], 1.0);
}

TEST(FreqLikelihood, TieGoesToLowestChannel) {
    const std::vector<double> s{2450.0, 2430.0, 2450.0, 2430.0};
    const auto f = freq_likelihood(s);
    EXPECT_EQ(f.pmf.at(2430.0), 0.5);
    EXPECT_EQ(f.pmf.at(2450.0), 0.5);
    EXPECT_EQ(f.mode_mhz, 2430.0);
}

TEST(FreqLikelihood, SingleSample) {
    const std::vector<double> s{2406.5};
    const auto f = freq_likelihood(s);
    EXPECT_EQ(f.pmf.at(2406.5), 1.0);
}

TEST(FreqLikelihood, SumsToOne) {
    std::mt19937_64 gen(8);
    std::uniform_int_distribution<int> ch(0, 8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s;
        for (int i = 0; i < 1 + trial * 7; ++i) s.push_back(2400.0 + 10.0 * ch(gen));
        const auto f = freq_likelihood(s);
        double total = 0.0, best = 0.0;
        for (const auto& [c, p] : f.pmf) {
            total += p;
            best = std::max(best, p);
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
        EXPECT_EQ(f.mode_probability, best);
    }
}

TEST(FreqLikelihood, ParrotOnSynthData) {
    const auto truth = synth::generate_truth(synth::make_pattern("S3"), 1000, 0);
    const auto streams = synth::simulate_sensors(truth, synth::all_sensor_specs(), synth::NoiseModel::defaults(42));
    std::vector<double> freqs;
    for (const auto& r : streams[index_of(SensorName::Venus)]) freqs.push_back(*r.freq_mhz);
    const auto f = freq_likelihood(freqs, DroneType::ParrotDisco);
    EXPECT_EQ(f.pmf, (std::map<double, double>{{2440.0, 1.0}}));
}

TEST(DistanceSeries, HoverAboveSensor) {
    const auto spec = sensor_spec(SensorName::Arcus);
    std::vector<DroneLogRecord> track;
    for (int i = 0; i < 5; ++i) {
        DroneLogRecord r;
        r.t = Timestamp{i * 1000};
        r.position = {spec.position.lat_deg, spec.position.lon_deg, spec.position.alt_m.value_or(0.0) + 40.0};
        track.push_back(r);
    }
    const auto s = distance_series(track, spec);
    ASSERT_EQ(s.distance_m.size(), 5u);
    for (const auto& p : s.distance_m) EXPECT_NEAR(p.value, 40.0, 1e-9);
}

TEST(DistanceSeries, AtSensorIsZero) {
    auto spec = sensor_spec(SensorName::Alvira);
    spec.position.alt_m = 0.0;
    DroneLogRecord r;
    r.position = {spec.position.lat_deg, spec.position.lon_deg, 0.0};
    const std::vector<DroneLogRecord> track{r};
    EXPECT_EQ(distance_series(track, spec).distance_m[0].value, 0.0);
}

TEST(DistanceSeries, S11CeilingAndProperties) {
    const auto truth = synth::generate_truth(synth::make_pattern("S1.1"), 1000, 0);
    for (auto name : {SensorName::Alvira, SensorName::Arcus}) {
        const auto spec = sensor_spec(name);
        const auto s = distance_series(truth[0], spec);
        ASSERT_EQ(s.distance_m.size(), truth[0].size());
        double ceiling = 0.0;
        for (std::size_t i = 0; i < s.altitude_m.size(); ++i) {
            ceiling = std::max(ceiling, s.altitude_m[i].value);
            EXPECT_GE(s.distance_m[i].value, std::max(0.0, s.altitude_m[i].value - spec.position.alt_m.value_or(0.0)) - 1e-9);
            if (i > 0) EXPECT_LE(s.distance_m[i - 1].t, s.distance_m[i].t);
        }
        EXPECT_NEAR(ceiling, 150.0, 1e-9);
    }
}

TEST(DistanceSeries, CsvExport) {
    DroneLogRecord r;
    r.t = Timestamp{5};
    r.position = sensor_spec(SensorName::Arcus).position;
    r.position.alt_m = sensor_spec(SensorName::Arcus).position.alt_m.value_or(0.0);
    const std::vector<DroneLogRecord> track{r};
    std::ostringstream out;
    write_series_csv(out, distance_series(track, sensor_spec(SensorName::Arcus)));
    EXPECT_EQ(out.str().substr(0, 37), "timestamp,sensor,distance_m,altitude_");
    EXPECT_NE(out.str().find("\n5,"), std::string::npos);
}

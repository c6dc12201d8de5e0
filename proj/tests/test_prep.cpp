#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "uranus/prep.hpp"
#include "uranus/synth.hpp"

using namespace uranus;
using namespace uranus::prep;

namespace {

FusedFrame frame_of(std::vector<std::string> columns, std::vector<std::vector<std::optional<double>>> cells) {
    FusedFrame f;
    f.columns = std::move(columns);
    for (std::size_t i = 0; i < cells.size(); ++i) f.timestamps.push_back(Timestamp{static_cast<std::int64_t>(i) * 1000});
    f.cells = std::move(cells);
    f.provenance.resize(f.cells.size());
    return f;
}

// Textbook one-way ANOVA written out per group, used as an oracle.
double oracle_f(const std::vector<std::vector<double>>& groups) {
    double n = 0, sum = 0;
    for (const auto& g : groups)
        for (double x : g) {
            sum += x;
            ++n;
        }
    const double grand = sum / n;
    double ssb = 0, ssw = 0;
    for (const auto& g : groups) {
        double m = 0;
        for (double x : g) m += x;
        m /= static_cast<double>(g.size());
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) ssw += (x - m) * (x - m);
    }
    const double k = static_cast<double>(groups.size());
    return (ssb / (k - 1)) / (ssw / (n - k));
}

// Correlation via raw sums, algebraically distinct from the centred form.
double raw_sum_correlation(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

std::vector<Point> blobs(std::vector<int>& labels, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::vector<Point> centres{{0, 0}, {10, 0}, {0, 10}};
    std::vector<Point> pts;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 100; ++i) {
            pts.push_back({centres[c][0] + noise(gen), centres[c][1] + noise(gen)});
            labels.push_back(c);
        }
    return pts;
}

double purity(const std::vector<int>& truth, const std::vector<int>& assigned, int k) {
    std::size_t correct = 0;
    for (int c = 0; c < k; ++c) {
        std::vector<std::size_t> votes(3, 0);
        for (std::size_t i = 0; i < truth.size(); ++i)
            if (assigned[i] == c) ++votes[static_cast<std::size_t>(truth[i])];
        correct += *std::max_element(votes.begin(), votes.end());
    }
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Missing values

TEST(MissingReport, OneAbsentCellOfTen) {
    std::vector<std::vector<std::optional<double>>> cells;
    for (int i = 0; i < 10; ++i) cells.push_back({double(i), i == 3 ? std::nullopt : std::optional(double(i))});
    const auto rep = missing_report(frame_of({"a", "c"}, cells));
    EXPECT_DOUBLE_EQ(rep.missing_percent[1], 10.0);
    EXPECT_EQ(rep.missing_count[0], 0u);
    EXPECT_TRUE(rep.mask[3][1]);
    EXPECT_EQ(rep.row_histogram[0], 9u);
    EXPECT_EQ(rep.row_histogram[1], 1u);
}

TEST(MissingReport, DenseFrame) {
    std::vector<std::vector<std::optional<double>>> cells;
    for (int i = 0; i < 20; ++i) cells.push_back({double(i), double(i * i), -double(i)});
    const auto rep = missing_report(frame_of({"a", "b", "c"}, cells));
    ASSERT_EQ(rep.mask.size(), 20u);
    for (const auto& row : rep.mask) {
        ASSERT_EQ(row.size(), 3u);
        for (bool b : row) EXPECT_FALSE(b);
    }
    for (auto t : rep.tags) EXPECT_EQ(t, MissingTag::McarCandidate);
    for (double p : rep.missing_percent) EXPECT_EQ(p, 0.0);
}

TEST(MissingReport, ConditionalAbsenceIsMarCandidate) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<std::optional<double>>> cells;
    std::vector<double> c1, indicator;
    for (int i = 0; i < 500; ++i) {
        const double v = u(gen);
        cells.push_back({v, v > 0.9 ? std::nullopt : std::optional(u(gen))});
        c1.push_back(v);
        indicator.push_back(v > 0.9 ? 1.0 : 0.0);
    }
    ASSERT_GT(raw_sum_correlation(indicator, c1), 0.5);
    const auto rep = missing_report(frame_of({"c1", "c2"}, cells));
    EXPECT_EQ(rep.tags[1], MissingTag::MarCandidate);
    EXPECT_EQ(rep.tags[0], MissingTag::McarCandidate);
    for (double p : rep.missing_percent) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 100.0);
    }
}

TEST(MissingReport, EmptyFrameRejected) { EXPECT_THROW(missing_report(frame_of({"a"}, {})), DataError); }

TEST(MissingReport, JsonSummary) {
    const auto rep = missing_report(frame_of({"a"}, {{1.0}, {std::nullopt}}));
    const auto j = to_json(rep);
    EXPECT_EQ(j["rows"], 2);
    EXPECT_EQ(j["columns"][0]["missing"], 1);
    EXPECT_EQ(j["columns"][0]["tag"], "MCAR-candidate");
}

// ---------------------------------------------------------------------------
// IQR

TEST(Iqr, OneToNineAndHundred) {
    const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
    const auto r = iqr_filter(v);
    EXPECT_DOUBLE_EQ(r.fences.q1, 3.25);
    EXPECT_DOUBLE_EQ(r.fences.q3, 7.75);
    EXPECT_DOUBLE_EQ(r.fences.lower, -3.5);
    EXPECT_DOUBLE_EQ(r.fences.upper, 14.5);
    ASSERT_EQ(r.outliers.size(), 1u);
    EXPECT_EQ(v[r.outliers[0]], 100.0);
}

TEST(Iqr, ConstantColumn) {
    const std::vector<double> v{5, 5, 5, 5};
    const auto r = iqr_filter(v);
    EXPECT_TRUE(r.outliers.empty());
    EXPECT_EQ(r.fences.iqr, 0.0);
}

TEST(Iqr, SymmetricColumn) {
    const std::vector<double> v{-2, -1, 1, 2};
    EXPECT_TRUE(iqr_filter(v).outliers.empty());
}

TEST(Iqr, TooFewValues) {
    const std::vector<double> v{1, 2, 3};
    EXPECT_THROW(iqr_filter(v), DataError);
}

TEST(Iqr, RetainedIsSubsetWithinFences) {
    std::mt19937_64 gen(8);
    std::cauchy_distribution<double> heavy(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(200);
        for (auto& x : v) x = heavy(gen);
        const auto r = iqr_filter(v);
        EXPECT_LE(r.fences.q1, r.fences.q3);
        EXPECT_EQ(r.retained.size() + r.outliers.size(), v.size());
        for (double x : r.retained) {
            EXPECT_NE(std::find(v.begin(), v.end(), x), v.end());
            EXPECT_TRUE(r.fences.contains(x));
        }
        for (auto i : r.outliers) EXPECT_FALSE(r.fences.contains(v[i]));
    }
}

// ---------------------------------------------------------------------------
// One-hot

TEST(OneHot, FirstAppearanceOrder) {
    const auto f = frame_of({"x", "cat"}, {{1.0, 7.0}, {2.0, 3.0}, {3.0, 7.0}});
    const auto r = one_hot(f, "cat");
    ASSERT_EQ(r.frame.columns.size(), 3u);
    EXPECT_EQ(r.frame.columns[1], one_hot_column_name("cat", 7.0));
    EXPECT_EQ(r.frame.columns[2], one_hot_column_name("cat", 3.0));
    const std::vector<std::vector<double>> expect{{1, 0}, {0, 1}, {1, 0}};
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(*r.frame.cells[i][1], expect[i][0]);
        EXPECT_EQ(*r.frame.cells[i][2], expect[i][1]);
    }
}

TEST(OneHot, SingleCategory) {
    const auto r = one_hot(frame_of({"cat"}, {{4.0}, {4.0}}), "cat");
    ASSERT_EQ(r.frame.columns.size(), 1u);
    for (const auto& row : r.frame.cells) EXPECT_EQ(*row[0], 1.0);
}

TEST(OneHot, UnseenCategoryIsZeroRow) {
    const auto r = apply_one_hot(frame_of({"cat"}, {{9.0}, {1.0}}), "cat", {1.0, 2.0});
    EXPECT_EQ(r.unseen, 1u);
    EXPECT_EQ(*r.frame.cells[0][0], 0.0);
    EXPECT_EQ(*r.frame.cells[0][1], 0.0);
    EXPECT_EQ(*r.frame.cells[1][0], 1.0);
}

TEST(OneHot, MissingColumn) { EXPECT_THROW(one_hot(frame_of({"a"}, {{1.0}}), "b"), DataError); }

TEST(OneHot, RowSumsAndInverse) {
    std::mt19937_64 gen(12);
    std::uniform_int_distribution<int> pick(0, 5);
    std::vector<std::vector<std::optional<double>>> cells;
    for (int i = 0; i < 300; ++i) {
        const int c = pick(gen);
        cells.push_back({c == 5 ? std::nullopt : std::optional(2400.0 + 10.0 * c)});
    }
    const auto f = frame_of({"freq"}, cells);
    const auto r = one_hot(f, "freq");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        double sum = 0;
        for (const auto& v : r.frame.cells[i]) sum += *v;
        EXPECT_EQ(sum, cells[i][0] ? 1.0 : 0.0);
    }
    EXPECT_EQ(decode_one_hot(r.frame, "freq", r.categories), f.column_values(0));
}

// ---------------------------------------------------------------------------
// k-means and silhouette

TEST(KMeans, SeparatedPairs) {
    const std::vector<Point> pts{{0}, {0}, {10}, {10}};
    const auto r = kmeans(pts, 2, 1);
    EXPECT_EQ(r.assignments[0], r.assignments[1]);
    EXPECT_EQ(r.assignments[2], r.assignments[3]);
    EXPECT_NE(r.assignments[0], r.assignments[2]);
}

TEST(KMeans, SingleClusterCentroidIsMean) {
    const std::vector<Point> pts{{1, 2}, {3, 4}, {5, 9}};
    const auto r = kmeans(pts, 1, 1);
    EXPECT_DOUBLE_EQ(r.centroids[0][0], 3.0);
    EXPECT_DOUBLE_EQ(r.centroids[0][1], 5.0);
}

TEST(KMeans, KExceedsPoints) {
    EXPECT_THROW(kmeans({{1.0}}, 2, 0), DataError);
    EXPECT_THROW(kmeans({{1.0}}, 0, 0), ConfigError);
}

TEST(KMeans, BlobsArePure) {
    std::vector<int> labels;
    const auto pts = blobs(labels, 99);
    const auto r = kmeans(pts, 3, 42);
    EXPECT_GE(purity(labels, r.assignments, 3), 0.99);
    // Centres 10 sigma apart in 2-D: expected S_c is about 1 - sqrt(pi)/10.
    EXPECT_NEAR(silhouette(pts, r.assignments).mean, 1.0 - std::sqrt(std::acos(-1.0)) / 10.0, 0.03);
}

TEST(KMeans, BitwiseDeterministic) {
    std::vector<int> labels;
    const auto pts = blobs(labels, 5);
    const auto a = kmeans(pts, 3, 17);
    const auto b = kmeans(pts, 3, 17);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.centroids, b.centroids);
}

TEST(Silhouette, HandOracle) {
    const std::vector<Point> pts{{0}, {1}, {9}, {10}};
    const auto r = silhouette(pts, {0, 0, 1, 1});
    const std::vector<double> a{1, 1, 1, 1};
    const std::vector<double> b{9.5, 8.5, 8.5, 9.5};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.a[i], a[i], 1e-12);
        EXPECT_NEAR(r.b[i], b[i], 1e-12);
        EXPECT_NEAR(r.s[i], (b[i] - a[i]) / b[i], 1e-12);
    }
    EXPECT_NEAR(r.mean, 0.8886, 1e-4);
}

TEST(Silhouette, TwoSingletons) { EXPECT_EQ(silhouette({{0}, {5}}, {0, 1}).mean, 0.0); }

TEST(Silhouette, CoincidentClusters) {
    const auto r = silhouette({{3}, {3}, {3}, {3}}, {0, 0, 1, 1});
    for (double s : r.s) EXPECT_EQ(s, 0.0);
}

TEST(Silhouette, SingleClusterUndefined) {
    try {
        silhouette({{0}, {1}}, {0, 0});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("silhouette undefined"), std::string::npos);
    }
}

TEST(Silhouette, BoundedAndScaleInvariant) {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> n(0.0, 3.0);
    std::uniform_int_distribution<int> c(0, 3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Point> pts;
        std::vector<int> asg;
        for (int i = 0; i < 40; ++i) {
            pts.push_back({n(gen), n(gen), n(gen)});
            asg.push_back(i < 4 ? i : c(gen));
        }
        const auto r = silhouette(pts, asg);
        for (double s : r.s) {
            EXPECT_GE(s, -1.0);
            EXPECT_LE(s, 1.0);
        }
        auto scaled = pts;
        for (auto& p : scaled)
            for (auto& x : p) x *= 7.25;
        EXPECT_NEAR(silhouette(scaled, asg).mean, r.mean, 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Drone cluster selection

TEST(DroneCluster, S11WithTruthPicksDrone) {
    const auto truth = synth::generate_truth(synth::make_pattern("S1.1"), 1000, 0);
    const auto streams = synth::simulate_sensors(truth, {sensor_spec(SensorName::Alvira)}, synth::NoiseModel::defaults(42));
    const auto& alvira = streams[index_of(SensorName::Alvira)];
    std::vector<Point> pts;
    for (const auto& r : alvira) pts.push_back({*r.rcs_dbsm});
    const auto km = kmeans(pts, 2, 7);
    const int chosen = select_drone_cluster(alvira, km.assignments, truth[0]);

    const auto frame = synth::site_frame();
    const auto clutter = frame.to_geo(synth::kClutterEastNorth[0], synth::kClutterEastNorth[1], std::nullopt);
    std::size_t members = 0, clutter_members = 0;
    for (std::size_t i = 0; i < alvira.size(); ++i) {
        if (km.assignments[i] != chosen) continue;
        ++members;
        clutter_members += haversine_m(*alvira[i].position, clutter) < 30.0;
    }
    ASSERT_GT(members, 100u);
    EXPECT_LT(static_cast<double>(clutter_members) / static_cast<double>(members), 0.01);
}

TEST(DroneCluster, StaticClustersInTestModeFail) {
    std::vector<SensorReading> readings;
    for (int i = 0; i < 10; ++i) {
        SensorReading r;
        r.t = Timestamp{i * 1000};
        r.sensor = SensorName::Alvira;
        r.position = GeoPosition{51.52 + (i % 2) * 0.01, 5.86, std::nullopt};
        readings.push_back(r);
    }
    std::vector<int> asg;
    for (int i = 0; i < 10; ++i) asg.push_back(i % 2);
    EXPECT_THROW(select_drone_cluster(readings, asg, std::nullopt), DataError);
}

TEST(DroneCluster, SingleMovingCluster) {
    const LocalFrame f{{51.52, 5.86, 0.0}};
    std::vector<SensorReading> readings;
    for (int i = 0; i < 10; ++i) {
        SensorReading r;
        r.t = Timestamp{i * 1000};
        r.sensor = SensorName::Alvira;
        r.position = f.to_geo(10.0 * i, 0.0, std::nullopt);
        readings.push_back(r);
    }
    EXPECT_EQ(select_drone_cluster(readings, std::vector<int>(10, 0), std::nullopt), 0);
}

// ---------------------------------------------------------------------------
// ANOVA

TEST(Anova, TwoGroupsOracle) {
    const std::vector<std::optional<double>> x{1, 2, 3, 4, 5, 6};
    const std::vector<int> g{0, 0, 0, 1, 1, 1};
    const auto s = anova_f_categorical(x, g);
    EXPECT_NEAR(oracle_f({{1, 2, 3}, {4, 5, 6}}), 13.5, 1e-12);
    EXPECT_NEAR(s.f, 13.5, 1e-9);
    EXPECT_EQ(s.df_between, 1.0);
    EXPECT_EQ(s.df_within, 4.0);
}

TEST(Anova, IdenticalGroupsScoreZero) {
    const std::vector<std::optional<double>> x{1, 2, 3, 1, 2, 3};
    const std::vector<int> g{0, 0, 0, 1, 1, 1};
    EXPECT_EQ(anova_f_categorical(x, g).f, 0.0);
}

TEST(Anova, CopyOfTargetIsInfinite) {
    std::vector<std::optional<double>> x;
    std::vector<double> y;
    for (int i = 0; i < 10; ++i) {
        x.push_back(0.5 * i);
        y.push_back(0.5 * i);
    }
    const auto s = anova_f_continuous(x, y, "f", "t");
    EXPECT_TRUE(std::isinf(s.f));
    EXPECT_EQ(to_json(s)["f"], "inf");
}

TEST(Anova, DegenerateGroups) {
    const std::vector<std::optional<double>> x{1, 2};
    const std::vector<int> g{0, 0};
    EXPECT_THROW(anova_f_categorical(x, g), DataError);
}

TEST(Anova, AbsentValuesSkipped) {
    const std::vector<std::optional<double>> x{1, 2, 3, std::nullopt, 4, 5, 6};
    const std::vector<int> g{0, 0, 0, 1, 1, 1, 1};
    EXPECT_NEAR(anova_f_categorical(x, g).f, 13.5, 1e-9);
}

TEST(Anova, PermutationAndShiftInvariance) {
    std::mt19937_64 gen(10);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> grp(0, 3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::optional<double>> x;
        std::vector<int> g;
        std::vector<std::vector<double>> groups(4);
        for (int i = 0; i < 80; ++i) {
            const int k = i < 4 ? i : grp(gen);
            const double v = n(gen) + 0.3 * k;
            x.push_back(v);
            g.push_back(k);
            groups[static_cast<std::size_t>(k)].push_back(v);
        }
        const double f = anova_f_categorical(x, g).f;
        EXPECT_NEAR(f, oracle_f(groups), 1e-9 * std::max(1.0, f));

        std::vector<std::size_t> order(x.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), gen);
        std::vector<std::optional<double>> px, sx;
        std::vector<int> pg;
        for (auto i : order) {
            px.push_back(x[i]);
            pg.push_back(g[i]);
        }
        for (const auto& v : x) sx.push_back(*v + 1000.0);
        EXPECT_NEAR(anova_f_categorical(px, pg).f, f, 1e-9 * std::max(1.0, f));
        EXPECT_NEAR(anova_f_categorical(sx, g).f, f, 1e-9 * std::max(1.0, f));
    }
}

TEST(SelectFeatures, TopKByF) {
    std::vector<AnovaScore> s{{"a", "t", 13.5}, {"b", "t", 0.0}, {"c", "t", 2.0}};
    EXPECT_EQ(select_features(s, {2}), (std::vector<std::string>{"a", "c"}));
}

TEST(SelectFeatures, TiesByName) {
    std::vector<AnovaScore> s{{"z", "t", 1.0}, {"m", "t", 1.0}, {"a", "t", 1.0}};
    EXPECT_EQ(select_features(s, {2}), (std::vector<std::string>{"a", "m"}));
}

TEST(SelectFeatures, KClampedToCount) {
    std::vector<AnovaScore> s{{"a", "t", 1.0}, {"b", "t", std::numeric_limits<double>::infinity()}};
    EXPECT_EQ(select_features(s, {10}), (std::vector<std::string>{"b", "a"}));
    EXPECT_THROW(select_features({}), DataError);
}

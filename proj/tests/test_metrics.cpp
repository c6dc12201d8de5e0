#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "uranus/metrics.hpp"

using namespace uranus;
using namespace uranus::metrics;

namespace {

// AUC as the fraction of (positive, negative) pairs ranked correctly, ties half.
double concordance_auc(const std::vector<double>& s, const std::vector<int>& l) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[i] != 1 || l[j] != 0) continue;
            pairs += 1;
            good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    return good / pairs;
}

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n, double scale) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

}  // namespace

TEST(Regression, HandOracle) {
    const RegressionSample s({1, 2, 3}, {2, 2, 2});
    EXPECT_NEAR(mae(s), 2.0 / 3.0, 1e-9);
    EXPECT_NEAR(mse(s), 2.0 / 3.0, 1e-9);
    EXPECT_NEAR(r2(s), 0.0, 1e-9);
}

TEST(Regression, PerfectFit) {
    const RegressionSample s({1, 5, 9}, {1, 5, 9});
    EXPECT_EQ(mae(s), 0.0);
    EXPECT_EQ(mse(s), 0.0);
    EXPECT_EQ(r2(s), 1.0);
}

TEST(Regression, ConstantObservationsUndefined) {
    try {
        r2(RegressionSample({4, 4, 4}, {1, 2, 3}));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("undefined R"), std::string::npos);
    }
    EXPECT_FALSE(regression_metrics(RegressionSample({4, 4, 4}, {1, 2, 3})).r2);
}

TEST(Regression, NearlyConstantLargeValuesUndefined) {
    EXPECT_THROW(r2(RegressionSample({5.87, 5.87 + 1e-15, 5.87}, {5.0, 5.0, 5.0})), DataError);
}

TEST(Regression, InvalidSamples) {
    EXPECT_THROW(RegressionSample({1, 2}, {1}), DataError);
    EXPECT_THROW(RegressionSample({}, {}), DataError);
}

TEST(Regression, Properties) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 200; ++trial) {
        const auto y = random_vector(gen, 50, 3.0);
        auto yh = random_vector(gen, 50, 1.0);
        for (std::size_t i = 0; i < yh.size(); ++i) yh[i] += 0.8 * y[i];
        const RegressionSample s(y, yh);
        EXPECT_LE(mae(s), std::sqrt(mse(s)) + 1e-12);
        EXPECT_LE(r2(s), 1.0);
        std::vector<double> ay, ayh;
        for (double v : y) ay.push_back(3.5 * v - 20.0);
        for (double v : yh) ayh.push_back(3.5 * v - 20.0);
        EXPECT_NEAR(r2(RegressionSample(ay, ayh)), r2(s), 1e-9);
    }
}

TEST(Classification, HandOracle) {
    const auto s = classification_scores(BinaryCounts{3, 2, 1, 0});
    EXPECT_NEAR(s.accuracy, 5.0 / 6.0, 1e-9);
    EXPECT_NEAR(s.precision, 0.75, 1e-9);
    EXPECT_NEAR(s.recall, 1.0, 1e-9);
    EXPECT_NEAR(s.f1, 2.0 * 0.75 / 1.75, 1e-9);
    EXPECT_NEAR(s.f1, 0.8571, 1e-4);
    EXPECT_EQ(s.flags, kNoFlags);
}

TEST(Classification, EqualPrecisionRecall) {
    const auto s = classification_scores(BinaryCounts{4, 10, 2, 2});
    EXPECT_DOUBLE_EQ(s.precision, s.recall);
    EXPECT_NEAR(s.f1, s.precision, 1e-15);
}

TEST(Classification, NoPositivePredictionsFlagged) {
    const auto s = classification_scores(BinaryCounts{0, 5, 0, 2});
    EXPECT_EQ(s.precision, 0.0);
    EXPECT_TRUE(s.flags & kNoPositivePredictions);
    EXPECT_TRUE(s.flags & kZeroPrecisionRecall);
}

TEST(Classification, ConfusionMatrixOneVsRest) {
    ConfusionMatrix cm(3);
    const std::vector<std::pair<int, int>> pairs{{0, 0}, {0, 1}, {1, 1}, {2, 2}, {2, 0}, {1, 1}};
    for (auto [a, p] : pairs) cm.add(a, p);
    EXPECT_EQ(cm.total(), pairs.size());
    EXPECT_NEAR(cm.accuracy(), 4.0 / 6.0, 1e-15);
    const auto b = cm.one_vs_rest(0);
    EXPECT_EQ(b.tp, 1u);
    EXPECT_EQ(b.fn, 1u);
    EXPECT_EQ(b.fp, 1u);
    EXPECT_EQ(b.tn, 3u);
    EXPECT_THROW(cm.add(3, 0), DataError);
    EXPECT_THROW(classification_scores(ConfusionMatrix(2), 0), DataError);
}

TEST(Classification, ScoresBoundedAndF1Between) {
    std::mt19937_64 gen(2);
    std::uniform_int_distribution<int> c(0, 20);
    for (int trial = 0; trial < 500; ++trial) {
        const BinaryCounts b{static_cast<std::uint64_t>(c(gen)), static_cast<std::uint64_t>(c(gen)),
                             static_cast<std::uint64_t>(c(gen)), static_cast<std::uint64_t>(c(gen))};
        const auto s = classification_scores(b);
        for (double v : {s.accuracy, s.precision, s.recall, s.f1}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        if (!(s.flags & kZeroPrecisionRecall)) {
            EXPECT_GE(s.f1, std::min(s.precision, s.recall) - 1e-15);
            EXPECT_LE(s.f1, std::max(s.precision, s.recall) + 1e-15);
        }
    }
}

TEST(Roc, PerfectRanking) {
    const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
    const std::vector<int> l{1, 1, 0, 0};
    const auto c = roc(s, l);
    EXPECT_DOUBLE_EQ(c.auc, 1.0);
    EXPECT_EQ(c.operating_point.tpr, 1.0);
    EXPECT_EQ(c.operating_point.fpr, 0.0);
}

TEST(Roc, ThreeOfFourPairs) {
    const std::vector<double> s{0.9, 0.4, 0.6, 0.1};
    const std::vector<int> l{1, 1, 0, 0};
    EXPECT_NEAR(concordance_auc(s, l), 0.75, 1e-15);
    EXPECT_NEAR(roc(s, l).auc, 0.75, 1e-9);
}

TEST(Roc, AllEqualScores) {
    const std::vector<double> s{0.5, 0.5, 0.5, 0.5};
    const std::vector<int> l{1, 0, 1, 0};
    EXPECT_DOUBLE_EQ(roc(s, l).auc, 0.5);
}

TEST(Roc, SingleClassRejected) {
    const std::vector<double> s{0.5, 0.6};
    const std::vector<int> l{1, 1};
    EXPECT_THROW(roc(s, l), DataError);
}

TEST(Roc, MatchesConcordanceAndIsMonotone) {
    std::mt19937_64 gen(3);
    std::bernoulli_distribution coin(0.4);
    std::uniform_int_distribution<int> coarse(0, 9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s;
        std::vector<int> l;
        for (int i = 0; i < 60; ++i) {
            const int lab = coin(gen) ? 1 : 0;
            l.push_back(lab);
            s.push_back(static_cast<double>(coarse(gen) + 2 * lab));
        }
        l[0] = 1;
        l[1] = 0;
        const auto c = roc(s, l);
        EXPECT_NEAR(c.auc, concordance_auc(s, l), 1e-12);
        EXPECT_EQ(c.points.front().fpr, 0.0);
        EXPECT_EQ(c.points.front().tpr, 0.0);
        EXPECT_EQ(c.points.back().fpr, 1.0);
        EXPECT_EQ(c.points.back().tpr, 1.0);
        for (std::size_t i = 1; i < c.points.size(); ++i) {
            EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
            EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
        }
        std::vector<double> t;
        for (double v : s) t.push_back(std::exp(0.3 * v) - 7.0);
        EXPECT_NEAR(roc(t, l).auc, c.auc, 1e-12);
    }
}

TEST(Report, PerfectClassifier) {
    const std::vector<std::string> names{"a", "b", "c"};
    const std::vector<std::size_t> actual{0, 1, 2, 0, 1, 2};
    std::vector<std::vector<double>> scores;
    for (auto a : actual) {
        std::vector<double> row(3, 0.0);
        row[a] = 1.0;
        scores.push_back(row);
    }
    const auto rep = classification_report(names, actual, actual, scores);
    EXPECT_EQ(rep.accuracy, 1.0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(rep.confusion[i][j], i == j ? 2u : 0u);
    for (const auto& cr : rep.per_class) {
        EXPECT_EQ(cr.scores.accuracy, 1.0);
        EXPECT_EQ(*cr.auc, 1.0);
    }
}

TEST(Report, AbsentClassHasNoAuc) {
    const std::vector<std::size_t> actual{0, 0, 1};
    const std::vector<std::vector<double>> scores{{1, 0, 0}, {0.5, 0.5, 0}, {0, 1, 0}};
    const auto rep = classification_report({"a", "b", "c"}, actual, actual, scores);
    EXPECT_FALSE(rep.per_class[2].auc);
    EXPECT_TRUE(rep.per_class[0].auc);
}

TEST(Report, JsonRoundTrip) {
    EvaluationReport r;
    r.rows = 4;
    r.regression.push_back({"latitude", regression_metrics(RegressionSample({1, 2, 3, 4}, {1.1, 2.2, 2.9, 4.0}))});
    r.regression.push_back({"speed", regression_metrics(RegressionSample({3, 3, 3, 3}, {1, 2, 3, 4}))});
    const std::vector<std::size_t> actual{0, 1, 1, 0}, predicted{0, 1, 0, 0};
    r.classification = classification_report({"x", "y"}, actual, predicted, {{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}, {0.7, 0.3}});
    const auto j = to_json(r);
    EXPECT_TRUE(j["regression"][1]["r2"].is_null());
    EXPECT_EQ(j["classification"]["per_class"][0]["roc"][0]["threshold"], "inf");
    const auto back = report_from_json(json::parse(j.dump()));
    EXPECT_EQ(to_json(back), j);
}

TEST(Report, RocCsv) {
    const std::vector<double> s{0.9, 0.1};
    const std::vector<int> l{1, 0};
    std::ostringstream out;
    write_roc_csv(out, roc(s, l));
    EXPECT_EQ(out.str(), "fpr,tpr,threshold\n0,0,inf\n0,1,0.9\n1,1,0.1\n");
}

#pragma once

// Regression and classification metrics: MAE / MSE / R², one-vs-rest
// accuracy / precision / recall / F1, confusion matrices and ROC curves.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uranus/core.hpp"
#include "uranus/csv.hpp"

namespace uranus::metrics {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Regression

struct RegressionSample {
    std::vector<double> y;
    std::vector<double> y_hat;

    RegressionSample(std::vector<double> observed, std::vector<double> predicted)
        : y(std::move(observed)), y_hat(std::move(predicted)) {
        if (y.size() != y_hat.size()) throw DataError("regression sample: length mismatch");
        if (y.empty()) throw DataError("regression sample: no observations");
    }

    [[nodiscard]] std::size_t n() const { return y.size(); }
    [[nodiscard]] double y_bar() const {
        double s = 0.0;
        for (double v : y) s += v;
        return s / static_cast<double>(y.size());
    }
};

inline double mae(const RegressionSample& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) acc += std::abs(s.y[i] - s.y_hat[i]);
    return acc / static_cast<double>(s.n());
}

inline double mse(const RegressionSample& s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) {
        const double d = s.y[i] - s.y_hat[i];
        acc += d * d;
    }
    return acc / static_cast<double>(s.n());
}

/// 1 - SS_res / SS_tot. Throws for observations that are constant up to
/// rounding (spread below 1e-9 relative to their magnitude).
inline double r2(const RegressionSample& s) {
    const double mean = s.y_bar();
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) {
        ss_res += (s.y[i] - s.y_hat[i]) * (s.y[i] - s.y_hat[i]);
        ss_tot += (s.y[i] - mean) * (s.y[i] - mean);
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(mean));
    if (ss_tot <= static_cast<double>(s.n()) * tol * tol) throw DataError("undefined R² (constant observations)");
    return 1.0 - ss_res / ss_tot;
}

struct RegressionMetrics {
    std::size_t n = 0;
    double mae = 0.0;
    double mse = 0.0;
    std::optional<double> r2;  // absent when observations are constant
};

inline RegressionMetrics regression_metrics(const RegressionSample& s) {
    RegressionMetrics m{s.n(), mae(s), mse(s), std::nullopt};
    try {
        m.r2 = r2(s);
    } catch (const DataError&) {
    }
    return m;
}

// ---------------------------------------------------------------------------
// Classification

struct BinaryCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    [[nodiscard]] std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// counts[actual][predicted].
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes) : counts_(classes, std::vector<std::uint64_t>(classes, 0)) {}

    void add(std::size_t actual, std::size_t predicted) {
        if (actual >= classes() || predicted >= classes()) throw DataError("confusion matrix: class out of range");
        ++counts_[actual][predicted];
    }

    [[nodiscard]] std::size_t classes() const { return counts_.size(); }
    [[nodiscard]] std::uint64_t at(std::size_t actual, std::size_t predicted) const {
        return counts_[actual][predicted];
    }
    [[nodiscard]] const std::vector<std::vector<std::uint64_t>>& counts() const { return counts_; }

    [[nodiscard]] std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& r : counts_)
            for (auto c : r) t += c;
        return t;
    }

    /// Multi-class accuracy: trace over total.
    [[nodiscard]] double accuracy() const {
        const auto t = total();
        if (t == 0) return 0.0;
        std::uint64_t diag = 0;
        for (std::size_t i = 0; i < classes(); ++i) diag += counts_[i][i];
        return static_cast<double>(diag) / static_cast<double>(t);
    }

    /// One-vs-rest counts for class `c`.
    [[nodiscard]] BinaryCounts one_vs_rest(std::size_t c) const {
        BinaryCounts b;
        for (std::size_t a = 0; a < classes(); ++a) {
            for (std::size_t p = 0; p < classes(); ++p) {
                const auto v = counts_[a][p];
                if (a == c && p == c) b.tp += v;
                else if (a == c) b.fn += v;
                else if (p == c) b.fp += v;
                else b.tn += v;
            }
        }
        return b;
    }

private:
    std::vector<std::vector<std::uint64_t>> counts_;
};

enum ScoreFlag : unsigned {
    kNoFlags = 0,
    kNoPositivePredictions = 1u << 0,  // TP + FP = 0, precision reported as 0
    kNoActualPositives = 1u << 1,      // TP + FN = 0, recall reported as 0
    kZeroPrecisionRecall = 1u << 2,    // F1 reported as 0
    kEmpty = 1u << 3,
};

struct ClassScores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    unsigned flags = kNoFlags;
};

inline ClassScores classification_scores(const BinaryCounts& c) {
    ClassScores s;
    const auto total = c.total();
    if (total == 0) {
        s.flags |= kEmpty;
        return s;
    }
    s.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    if (c.tp + c.fp == 0) s.flags |= kNoPositivePredictions;
    else s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn == 0) s.flags |= kNoActualPositives;
    else s.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (s.precision + s.recall == 0.0) s.flags |= kZeroPrecisionRecall;
    else s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

inline ClassScores classification_scores(const ConfusionMatrix& cm, std::size_t c) {
    if (cm.total() == 0) throw DataError("classification_scores: empty confusion matrix");
    return classification_scores(cm.one_vs_rest(c));
}

// ---------------------------------------------------------------------------
// ROC

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;  // +inf for the (0, 0) origin
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
    RocPoint operating_point;  // maximises Youden's J = TPR - FPR
};

/// Threshold sweep over the distinct scores (positive when score >=
/// threshold), trapezoidal AUC.
/// Labels are 1 for the positive class and 0 otherwise.
inline RocCurve roc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DataError("roc: length mismatch");
    std::size_t pos = 0;
    for (int l : labels) pos += l != 0 ? 1 : 0;
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw DataError("roc: labels contain a single class");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double thr = scores[order[k]];
        while (k < order.size() && scores[order[k]] == thr) {
            if (labels[order[k]] != 0) ++tp;
            else ++fp;
            ++k;
        }
        curve.points.push_back(
            {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos), thr});
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    curve.operating_point = curve.points.front();
    double best_j = -1.0;
    for (const auto& p : curve.points) {
        const double j = p.tpr - p.fpr;
        if (j > best_j) {
            best_j = j;
            curve.operating_point = p;
        }
    }
    return curve;
}

inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
    csv::Writer w(out);
    w.row({"fpr", "tpr", "threshold"});
    for (const auto& p : curve.points)
        w.row({csv::format_double(p.fpr), csv::format_double(p.tpr),
               std::isinf(p.threshold) ? std::string("inf") : csv::format_double(p.threshold)});
}

// ---------------------------------------------------------------------------
// Reports

struct ClassReport {
    std::string name;
    ClassScores scores;
    std::optional<double> auc;  // absent when the class never / always occurs
    std::optional<RocPoint> operating_point;
    std::vector<RocPoint> roc;
};

struct ClassificationReport {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::uint64_t>> confusion;  // [actual][predicted]
    double accuracy = 0.0;
    std::vector<ClassReport> per_class;
    ClassScores macro;
};

struct EvaluationReport {
    std::vector<std::pair<std::string, RegressionMetrics>> regression;  // in target order
    std::optional<ClassificationReport> classification;
    std::size_t rows = 0;
};

/// Per-class one-vs-rest report from predictions and per-class scores.
inline ClassificationReport classification_report(const std::vector<std::string>& class_names,
                                                  std::span<const std::size_t> actual,
                                                  std::span<const std::size_t> predicted,
                                                  const std::vector<std::vector<double>>& class_scores) {
    if (actual.size() != predicted.size() || actual.size() != class_scores.size())
        throw DataError("classification report: length mismatch");
    const std::size_t k = class_names.size();
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < actual.size(); ++i) cm.add(actual[i], predicted[i]);

    ClassificationReport rep;
    rep.class_names = class_names;
    rep.confusion = cm.counts();
    rep.accuracy = cm.accuracy();
    for (std::size_t c = 0; c < k; ++c) {
        ClassReport cr;
        cr.name = class_names[c];
        cr.scores = cm.total() ? classification_scores(cm, c) : ClassScores{};
        std::vector<double> s;
        std::vector<int> l;
        for (std::size_t i = 0; i < actual.size(); ++i) {
            s.push_back(class_scores[i].at(c));
            l.push_back(actual[i] == c ? 1 : 0);
        }
        const auto pos = static_cast<std::size_t>(std::count(l.begin(), l.end(), 1));
        if (pos > 0 && pos < l.size()) {
            auto curve = roc(s, l);
            cr.auc = curve.auc;
            cr.operating_point = curve.operating_point;
            cr.roc = std::move(curve.points);
        }
        rep.per_class.push_back(std::move(cr));
    }
    if (k > 0) {
        for (const auto& cr : rep.per_class) {
            rep.macro.accuracy += cr.scores.accuracy;
            rep.macro.precision += cr.scores.precision;
            rep.macro.recall += cr.scores.recall;
            rep.macro.f1 += cr.scores.f1;
        }
        const double kk = static_cast<double>(k);
        rep.macro.accuracy /= kk;
        rep.macro.precision /= kk;
        rep.macro.recall /= kk;
        rep.macro.f1 /= kk;
    }
    return rep;
}

// JSON. Infinite ROC thresholds are written as the string "inf".

inline json number_or_inf(double v) { return std::isinf(v) ? json(v > 0 ? "inf" : "-inf") : json(v); }
inline double number_or_inf(const json& j) {
    if (j.is_string()) return j.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                                              : std::numeric_limits<double>::infinity();
    return j.get<double>();
}

inline json to_json(const RocPoint& p) { return {{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", number_or_inf(p.threshold)}}; }
inline RocPoint roc_point_from_json(const json& j) {
    return {j.at("fpr").get<double>(), j.at("tpr").get<double>(), number_or_inf(j.at("threshold"))};
}

inline json to_json(const ClassScores& s) {
    return {{"accuracy", s.accuracy}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"flags", s.flags}};
}
inline ClassScores scores_from_json(const json& j) {
    return {j.at("accuracy").get<double>(), j.at("precision").get<double>(), j.at("recall").get<double>(),
            j.at("f1").get<double>(), j.at("flags").get<unsigned>()};
}

inline json to_json(const EvaluationReport& r) {
    json out;
    out["rows"] = r.rows;
    json reg = json::array();
    for (const auto& [name, m] : r.regression) {
        reg.push_back({{"target", name},
                       {"n", m.n},
                       {"mae", m.mae},
                       {"mse", m.mse},
                       {"r2", m.r2 ? json(*m.r2) : json(nullptr)}});
    }
    out["regression"] = reg;
    if (r.classification) {
        const auto& c = *r.classification;
        json classes = json::array();
        for (const auto& cr : c.per_class) {
            json jc = {{"class", cr.name}, {"scores", to_json(cr.scores)}};
            jc["auc"] = cr.auc ? json(*cr.auc) : json(nullptr);
            jc["operating_point"] = cr.operating_point ? to_json(*cr.operating_point) : json(nullptr);
            json pts = json::array();
            for (const auto& p : cr.roc) pts.push_back(to_json(p));
            jc["roc"] = pts;
            classes.push_back(jc);
        }
        out["classification"] = {{"class_names", c.class_names},
                                  {"confusion", c.confusion},
                                  {"accuracy", c.accuracy},
                                  {"per_class", classes},
                                  {"macro", to_json(c.macro)}};
    } else {
        out["classification"] = nullptr;
    }
    return out;
}

inline EvaluationReport report_from_json(const json& j) {
    EvaluationReport r;
    r.rows = j.at("rows").get<std::size_t>();
    for (const auto& e : j.at("regression")) {
        RegressionMetrics m;
        m.n = e.at("n").get<std::size_t>();
        m.mae = e.at("mae").get<double>();
        m.mse = e.at("mse").get<double>();
        if (!e.at("r2").is_null()) m.r2 = e.at("r2").get<double>();
        r.regression.emplace_back(e.at("target").get<std::string>(), m);
    }
    const auto& jc = j.at("classification");
    if (!jc.is_null()) {
        ClassificationReport c;
        c.class_names = jc.at("class_names").get<std::vector<std::string>>();
        c.confusion = jc.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
        c.accuracy = jc.at("accuracy").get<double>();
        c.macro = scores_from_json(jc.at("macro"));
        for (const auto& e : jc.at("per_class")) {
            ClassReport cr;
            cr.name = e.at("class").get<std::string>();
            cr.scores = scores_from_json(e.at("scores"));
            if (!e.at("auc").is_null()) cr.auc = e.at("auc").get<double>();
            if (!e.at("operating_point").is_null()) cr.operating_point = roc_point_from_json(e.at("operating_point"));
            for (const auto& p : e.at("roc")) cr.roc.push_back(roc_point_from_json(p));
            c.per_class.push_back(std::move(cr));
        }
        r.classification = std::move(c);
    }
    return r;
}

}  // namespace uranus::metrics

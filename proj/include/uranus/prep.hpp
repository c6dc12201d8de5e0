#pragma once

// Preprocessing: missing-value analysis, IQR outlier fences, one-hot
// encoding, k-means with silhouette scoring, drone-cluster selection and
// one-way ANOVA feature ranking.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "uranus/core.hpp"
#include "uranus/csv.hpp"
#include "uranus/ingest.hpp"
#include "uranus/random.hpp"

namespace uranus::prep {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Missing values

enum class MissingTag { McarCandidate, MarCandidate, MnarUnknown };

inline std::string_view to_string(MissingTag t) {
    switch (t) {
        case MissingTag::McarCandidate: return "MCAR-candidate";
        case MissingTag::MarCandidate: return "MAR-candidate";
        case MissingTag::MnarUnknown: return "MNAR-unknown";
    }
    return "?";
}

struct MissingReport {
    std::vector<std::string> columns;
    std::vector<std::size_t> missing_count;
    std::vector<double> missing_percent;
    std::vector<std::vector<bool>> mask;  // row x column, true = absent
    /// histogram[m] = number of rows with exactly m absent cells.
    std::vector<std::size_t> row_histogram;
    /// Pearson correlation between the missingness indicators of two
    /// columns; 0 where either indicator is constant.
    std::vector<std::vector<double>> indicator_correlation;
    std::vector<MissingTag> tags;
};

/// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) return std::nullopt;
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

inline constexpr double kMarCorrelationThreshold = 0.5;

/// Counts, masks and Rubin-style candidate tags. A column is tagged
/// MAR-candidate when its missingness indicator correlates (|r| > 0.5) with
/// the observed values of some other column; MNAR is never inferred.
inline MissingReport missing_report(const FusedFrame& frame) {
    if (frame.empty() || frame.columns.empty()) throw DataError("missing_report: empty frame");
    const std::size_t n = frame.row_count();
    const std::size_t m = frame.columns.size();

    MissingReport rep;
    rep.columns = frame.columns;
    rep.missing_count.assign(m, 0);
    rep.mask.assign(n, std::vector<bool>(m, false));
    rep.row_histogram.assign(m + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t row_missing = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (!frame.cells[i][j]) {
                rep.mask[i][j] = true;
                ++rep.missing_count[j];
                ++row_missing;
            }
        }
        ++rep.row_histogram[row_missing];
    }
    for (std::size_t j = 0; j < m; ++j)
        rep.missing_percent.push_back(100.0 * static_cast<double>(rep.missing_count[j]) / static_cast<double>(n));

    std::vector<std::vector<double>> indicator(m, std::vector<double>(n));
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) indicator[j][i] = rep.mask[i][j] ? 1.0 : 0.0;

    rep.indicator_correlation.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t a = 0; a < m; ++a) {
        rep.indicator_correlation[a][a] = rep.missing_count[a] > 0 && rep.missing_count[a] < n ? 1.0 : 0.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            const double r = pearson(indicator[a], indicator[b]).value_or(0.0);
            rep.indicator_correlation[a][b] = rep.indicator_correlation[b][a] = r;
        }
    }

    rep.tags.assign(m, MissingTag::McarCandidate);
    for (std::size_t j = 0; j < m; ++j) {
        if (rep.missing_count[j] == 0) continue;
        for (std::size_t other = 0; other < m && rep.tags[j] != MissingTag::MarCandidate; ++other) {
            if (other == j) continue;
            std::vector<double> ind, val;
            for (std::size_t i = 0; i < n; ++i) {
                if (!frame.cells[i][other]) continue;
                ind.push_back(indicator[j][i]);
                val.push_back(*frame.cells[i][other]);
            }
            auto r = pearson(ind, val);
            if (r && std::abs(*r) > kMarCorrelationThreshold) rep.tags[j] = MissingTag::MarCandidate;
        }
    }
    return rep;
}

/// Summary JSON; the full mask is exported separately as CSV.
inline json to_json(const MissingReport& rep) {
    json cols = json::array();
    for (std::size_t j = 0; j < rep.columns.size(); ++j) {
        cols.push_back({{"name", rep.columns[j]},
                        {"missing", rep.missing_count[j]},
                        {"percent", rep.missing_percent[j]},
                        {"tag", std::string(to_string(rep.tags[j]))}});
    }
    return {{"rows", rep.mask.size()},
            {"columns", cols},
            {"row_histogram", rep.row_histogram},
            {"indicator_correlation", rep.indicator_correlation}};
}

inline void write_mask_csv(std::ostream& out, const MissingReport& rep) {
    csv::Writer w(out);
    w.row(rep.columns);
    for (const auto& row : rep.mask) {
        std::vector<std::string> cells;
        for (bool b : row) cells.emplace_back(b ? "1" : "0");
        w.row(cells);
    }
}

// ---------------------------------------------------------------------------
// IQR outliers

struct IqrFences {
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    [[nodiscard]] bool contains(double v) const { return v >= lower && v <= upper; }
};

/// Quantile by linear interpolation between order statistics of a sorted
/// sample (position q * (n - 1)).
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline IqrFences iqr_fences(std::span<const double> values) {
    std::vector<double> finite;
    for (double v : values)
        if (std::isfinite(v)) finite.push_back(v);
    if (finite.size() < 4) throw DataError("insufficient data for IQR (need at least 4 values)");
    std::sort(finite.begin(), finite.end());
    IqrFences f;
    f.q1 = quantile_sorted(finite, 0.25);
    f.q3 = quantile_sorted(finite, 0.75);
    f.iqr = f.q3 - f.q1;
    f.lower = f.q1 - 1.5 * f.iqr;
    f.upper = f.q3 + 1.5 * f.iqr;
    return f;
}

struct IqrResult {
    IqrFences fences;
    std::vector<double> retained;
    std::vector<std::size_t> outliers;
};

inline IqrResult iqr_filter(std::span<const double> values) {
    IqrResult res;
    res.fences = iqr_fences(values);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (res.fences.contains(values[i])) res.retained.push_back(values[i]);
        else res.outliers.push_back(i);
    }
    return res;
}

// ---------------------------------------------------------------------------
// One-hot encoding

inline std::string one_hot_column_name(const std::string& column, double category) {
    return column + "=" + csv::format_double(category);
}

struct OneHotResult {
    FusedFrame frame;
    std::vector<double> categories;  // first-appearance order
    std::vector<std::size_t> absent_rows;
    std::size_t unseen = 0;  // rows whose category was not in the vocabulary
};

/// Replaces `column` with one indicator column per category of `vocabulary`
/// (inserted at the original position). Absent or unseen values become
/// all-zero rows.
inline OneHotResult apply_one_hot(const FusedFrame& frame, const std::string& column,
                                  const std::vector<double>& vocabulary) {
    auto idx = frame.column_index(column);
    if (!idx) throw DataError("one_hot: column not found: " + column);
    const std::size_t j = *idx;

    OneHotResult res;
    res.categories = vocabulary;
    res.frame = frame;
    auto& f = res.frame;
    std::vector<std::string> names;
    for (double c : vocabulary) names.push_back(one_hot_column_name(column, c));
    f.columns.erase(f.columns.begin() + static_cast<std::ptrdiff_t>(j));
    f.columns.insert(f.columns.begin() + static_cast<std::ptrdiff_t>(j), names.begin(), names.end());

    for (std::size_t i = 0; i < f.cells.size(); ++i) {
        auto& row = f.cells[i];
        const auto value = row[j];
        std::vector<std::optional<double>> encoded(vocabulary.size(), 0.0);
        if (!value) {
            res.absent_rows.push_back(i);
        } else {
            auto it = std::find(vocabulary.begin(), vocabulary.end(), *value);
            if (it == vocabulary.end()) ++res.unseen;
            else encoded[static_cast<std::size_t>(it - vocabulary.begin())] = 1.0;
        }
        row.erase(row.begin() + static_cast<std::ptrdiff_t>(j));
        row.insert(row.begin() + static_cast<std::ptrdiff_t>(j), encoded.begin(), encoded.end());
    }
    return res;
}

/// Categories of a column in first-appearance order.
inline std::vector<double> category_vocabulary(const FusedFrame& frame, const std::string& column) {
    auto idx = frame.column_index(column);
    if (!idx) throw DataError("one_hot: column not found: " + column);
    std::vector<double> vocab;
    for (const auto& row : frame.cells) {
        const auto& v = row[*idx];
        if (v && std::find(vocab.begin(), vocab.end(), *v) == vocab.end()) vocab.push_back(*v);
    }
    return vocab;
}

inline OneHotResult one_hot(const FusedFrame& frame, const std::string& column) {
    return apply_one_hot(frame, column, category_vocabulary(frame, column));
}

/// Inverse of one_hot: the original column, absent where no indicator is set.
inline std::vector<std::optional<double>> decode_one_hot(const FusedFrame& encoded, const std::string& column,
                                                         const std::vector<double>& vocabulary) {
    std::vector<std::size_t> idx;
    for (double c : vocabulary) {
        auto j = encoded.column_index(one_hot_column_name(column, c));
        if (!j) throw DataError("decode_one_hot: missing indicator column");
        idx.push_back(*j);
    }
    std::vector<std::optional<double>> out;
    for (const auto& row : encoded.cells) {
        std::optional<double> v;
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (row[idx[k]] && *row[idx[k]] == 1.0) v = vocabulary[k];
        out.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// k-means and silhouette

using Point = std::vector<double>;

inline double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<Point> centroids;
    int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 300;

/// Nearest centroid; the lower index wins ties.
inline int nearest_centroid(const Point& p, const std::vector<Point>& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

/// Lloyd's algorithm with k-means++ seeding. Runs until the assignment
/// stops changing or 300 iterations.
inline KMeansResult kmeans(const std::vector<Point>& points, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("kmeans: k must be at least 1");
    if (points.size() < static_cast<std::size_t>(k)) throw DataError("kmeans: k exceeds number of points");
    const std::size_t n = points.size();
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw DataError("kmeans: inconsistent point dimensions");

    Rng rng(seed);
    KMeansResult res;
    res.centroids.push_back(points[rng.index(n)]);
    std::vector<double> d2(n);
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : res.centroids) best = std::min(best, squared_distance(points[i], c));
            d2[i] = best;
            total += best;
        }
        // All remaining points coincide with a centroid: pick uniformly.
        res.centroids.push_back(total > 0.0 ? points[rng.categorical(d2)] : points[rng.index(n)]);
    }

    res.assignments.assign(n, -1);
    for (int it = 0; it < kKMeansMaxIterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = nearest_centroid(points[i], res.centroids);
            if (c != res.assignments[i]) {
                res.assignments[i] = c;
                changed = true;
            }
        }
        res.iterations = it + 1;
        if (!changed) break;
        std::vector<Point> sums(static_cast<std::size_t>(k), Point(dim, 0.0));
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(res.assignments[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d)
                res.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
    }
    return res;
}

struct SilhouetteResult {
    std::vector<double> s;
    std::vector<double> a;
    std::vector<double> b;
    double mean = 0.0;
};

/// Per-point (b - a) / max(a, b) with Euclidean distances; points in a
/// singleton cluster score 0.
inline SilhouetteResult silhouette(const std::vector<Point>& points, const std::vector<int>& assignments) {
    if (points.size() != assignments.size()) throw DataError("silhouette: size mismatch");
    std::map<int, std::size_t> sizes;
    for (int c : assignments) ++sizes[c];
    if (sizes.size() < 2) throw DataError("silhouette undefined for a single cluster");

    const std::size_t n = points.size();
    SilhouetteResult res;
    res.s.assign(n, 0.0);
    res.a.assign(n, 0.0);
    res.b.assign(n, 0.0);
    std::map<int, double> sum_to;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& [c, _] : sizes) sum_to[c] = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum_to[assignments[j]] += std::sqrt(squared_distance(points[i], points[j]));
        }
        const int own = assignments[i];
        const std::size_t own_size = sizes[own];
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, size] : sizes)
            if (c != own) b = std::min(b, sum_to[c] / static_cast<double>(size));
        res.b[i] = b;
        if (own_size == 1) {
            res.a[i] = 0.0;
            res.s[i] = 0.0;
            continue;
        }
        const double a = sum_to[own] / static_cast<double>(own_size - 1);
        res.a[i] = a;
        const double denom = std::max(a, b);
        res.s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    double total = 0.0;
    for (double v : res.s) total += v;
    res.mean = total / static_cast<double>(n);
    return res;
}

// ---------------------------------------------------------------------------
// Drone cluster selection

struct ClusterSelection {
    std::int64_t tolerance_ms = 1000;
    double truth_radius_m = 100.0;
    /// Test-mode minimum mean displacement rate for a moving cluster.
    double min_moving_mps = 1.0;
};

/// Training mode (truth given): the cluster with most readings lying within
/// tolerance and radius of a truth position. Test mode: the cluster whose
/// members move fastest on average between consecutive readings.
inline int select_drone_cluster(const std::vector<SensorReading>& readings, const std::vector<int>& assignments,
                                const std::optional<std::vector<DroneLogRecord>>& truth,
                                const ClusterSelection& policy = {}) {
    if (readings.size() != assignments.size()) throw DataError("select_drone_cluster: size mismatch");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < assignments.size(); ++i) members[assignments[i]].push_back(i);

    std::optional<int> best;
    if (truth) {
        std::vector<DroneLogRecord> sorted = *truth;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
        std::map<int, std::size_t> hits;
        for (std::size_t i = 0; i < readings.size(); ++i) {
            const auto& r = readings[i];
            if (!r.position) continue;
            auto lo = std::lower_bound(sorted.begin(), sorted.end(), r.t.millis - policy.tolerance_ms,
                                       [](const DroneLogRecord& x, std::int64_t t) { return x.t.millis < t; });
            for (auto it = lo; it != sorted.end() && it->t.millis <= r.t.millis + policy.tolerance_ms; ++it) {
                if (haversine_m(*r.position, it->position) <= policy.truth_radius_m) {
                    ++hits[assignments[i]];
                    break;
                }
            }
        }
        std::size_t best_hits = 0;
        for (const auto& [c, h] : hits) {
            if (h > best_hits) {
                best_hits = h;
                best = c;
            }
        }
    } else {
        double best_rate = policy.min_moving_mps;
        for (const auto& [c, idx] : members) {
            std::vector<std::size_t> order = idx;
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t x, std::size_t y) { return readings[x].t < readings[y].t; });
            double total = 0.0;
            std::size_t steps = 0;
            for (std::size_t k = 1; k < order.size(); ++k) {
                const auto& p = readings[order[k - 1]];
                const auto& q = readings[order[k]];
                const double dt = static_cast<double>(q.t.millis - p.t.millis) / 1000.0;
                if (dt <= 0.0 || !p.position || !q.position) continue;
                total += haversine_m(*p.position, *q.position) / dt;
                ++steps;
            }
            if (steps == 0) continue;
            const double rate = total / static_cast<double>(steps);
            if (rate > best_rate) {
                best_rate = rate;
                best = c;
            }
        }
    }
    if (!best) throw DataError("no drone cluster");
    return *best;
}

// ---------------------------------------------------------------------------
// ANOVA feature scoring

struct AnovaScore {
    std::string feature;
    std::string target;
    double f = 0.0;  // +infinity when the feature determines the target
    double df_between = 0.0;
    double df_within = 0.0;
};

/// Classic one-way F over the groups defined by `groups`; rows with an
/// absent feature value are skipped.
inline AnovaScore anova_f_categorical(std::span<const std::optional<double>> feature, std::span<const int> groups,
                                      std::string feature_name = {}, std::string target_name = {}) {
    if (feature.size() != groups.size()) throw DataError("anova: length mismatch");
    std::map<int, std::vector<double>> by_group;
    for (std::size_t i = 0; i < feature.size(); ++i)
        if (feature[i]) by_group[groups[i]].push_back(*feature[i]);
    std::size_t n = 0;
    double grand = 0.0;
    for (const auto& [g, v] : by_group) {
        n += v.size();
        for (double x : v) grand += x;
    }
    const std::size_t g = by_group.size();
    if (g < 2 || n <= g) throw DataError("anova: degenerate group sizes");
    grand /= static_cast<double>(n);

    double ssb = 0.0, ssw = 0.0;
    for (const auto& [key, v] : by_group) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        ssb += static_cast<double>(v.size()) * (mean - grand) * (mean - grand);
        for (double x : v) ssw += (x - mean) * (x - mean);
    }
    AnovaScore s{std::move(feature_name), std::move(target_name), 0.0, static_cast<double>(g - 1),
                 static_cast<double>(n - g)};
    // Relative guard so rounding noise on identical groups does not count.
    const double scale = std::max(ssb + ssw, std::numeric_limits<double>::min());
    if (ssb <= 1e-12 * scale) s.f = 0.0;
    else if (ssw <= 1e-12 * scale) s.f = std::numeric_limits<double>::infinity();
    else s.f = (ssb / s.df_between) / (ssw / s.df_within);
    return s;
}

/// Univariate-regression F = r^2 (n - 2) / (1 - r^2) for a continuous target.
inline AnovaScore anova_f_continuous(std::span<const std::optional<double>> feature, std::span<const double> target,
                                     std::string feature_name = {}, std::string target_name = {}) {
    if (feature.size() != target.size()) throw DataError("anova: length mismatch");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < feature.size(); ++i) {
        if (!feature[i]) continue;
        x.push_back(*feature[i]);
        y.push_back(target[i]);
    }
    if (x.size() < 3) throw DataError("anova: degenerate group sizes (need 3 samples)");
    AnovaScore s{std::move(feature_name), std::move(target_name), 0.0, 1.0, static_cast<double>(x.size() - 2)};
    auto r = pearson(x, y);
    if (!r) return s;  // constant feature or target carries no signal
    const double r2 = std::min(1.0, (*r) * (*r));
    if (r2 >= 1.0 - 1e-15) s.f = std::numeric_limits<double>::infinity();
    else s.f = r2 * s.df_within / (1.0 - r2);
    return s;
}

struct SelectionPolicy {
    std::size_t top_k = 10;
};

/// Top-k features by F, ties broken by name.
inline std::vector<std::string> select_features(std::vector<AnovaScore> scores, const SelectionPolicy& policy = {}) {
    if (scores.empty()) throw DataError("select_features: no scores");
    std::stable_sort(scores.begin(), scores.end(), [](const AnovaScore& a, const AnovaScore& b) {
        if (a.f != b.f) return a.f > b.f;
        return a.feature < b.feature;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scores.size() && i < policy.top_k; ++i) out.push_back(scores[i].feature);
    return out;
}

inline json to_json(const AnovaScore& s) {
    json f = std::isinf(s.f) ? json("inf") : json(s.f);
    return {{"feature", s.feature}, {"target", s.target}, {"f", f}, {"df", {s.df_between, s.df_within}}};
}

}  // namespace uranus::prep

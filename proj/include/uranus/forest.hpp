#pragma once

// CART trees and bootstrap-aggregated Random Forests for regression and
// classification, k-fold cross-validation, and the URNS1 model container.
//
// Trees split on `value <= threshold`, with thresholds at midpoints between
// consecutive distinct feature values. Regression nodes minimise squared
// error, classification nodes minimise Gini impurity. Rows whose value for a
// candidate feature is absent do not take part in evaluating that feature;
// once a split is chosen they follow the child that received more rows.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uranus/core.hpp"
#include "uranus/metrics.hpp"
#include "uranus/random.hpp"

namespace uranus::forest {

enum class Task : std::uint8_t { Regression = 0, Classification = 1 };

/// Dense feature matrix with an explicit presence mask (column-major).
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t rows, std::size_t features)
        : rows_(rows), features_(features), values_(rows * features, 0.0), present_(rows * features, 0) {}

    static Dataset from_rows(const std::vector<std::vector<std::optional<double>>>& rows) {
        const std::size_t p = rows.empty() ? 0 : rows.front().size();
        Dataset d(rows.size(), p);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != p) throw DataError("dataset rows differ in length");
            for (std::size_t f = 0; f < p; ++f) d.set(r, f, rows[r][f]);
        }
        return d;
    }

    static Dataset from_dense(const std::vector<std::vector<double>>& rows) {
        const std::size_t p = rows.empty() ? 0 : rows.front().size();
        Dataset d(rows.size(), p);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t f = 0; f < p; ++f) d.set(r, f, rows[r].at(f));
        return d;
    }

    void set(std::size_t r, std::size_t f, std::optional<double> v) {
        const std::size_t i = f * rows_ + r;
        present_[i] = v && std::isfinite(*v) ? 1 : 0;
        values_[i] = present_[i] ? *v : 0.0;
    }

    [[nodiscard]] bool present(std::size_t r, std::size_t f) const { return present_[f * rows_ + r] != 0; }
    [[nodiscard]] double value(std::size_t r, std::size_t f) const { return values_[f * rows_ + r]; }
    [[nodiscard]] std::optional<double> at(std::size_t r, std::size_t f) const {
        return present(r, f) ? std::optional(value(r, f)) : std::nullopt;
    }
    [[nodiscard]] std::vector<std::optional<double>> row(std::size_t r) const {
        std::vector<std::optional<double>> out(features_);
        for (std::size_t f = 0; f < features_; ++f) out[f] = at(r, f);
        return out;
    }

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t features() const { return features_; }

    /// Subset of rows, in the given order.
    [[nodiscard]] Dataset select(std::span<const std::size_t> idx) const {
        Dataset d(idx.size(), features_);
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t f = 0; f < features_; ++f) d.set(k, f, at(idx[k], f));
        return d;
    }

private:
    std::size_t rows_ = 0;
    std::size_t features_ = 0;
    std::vector<double> values_;
    std::vector<std::uint8_t> present_;
};

/// Training targets: real values for regression, class indices otherwise.
struct Targets {
    Task task = Task::Regression;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t n_classes = 0;

    static Targets regression(std::vector<double> v) { return {Task::Regression, std::move(v), {}, 0}; }
    static Targets classification(std::vector<int> l, std::size_t classes) {
        return {Task::Classification, {}, std::move(l), classes};
    }

    [[nodiscard]] std::size_t size() const { return task == Task::Regression ? values.size() : labels.size(); }

    [[nodiscard]] Targets select(std::span<const std::size_t> idx) const {
        Targets t{task, {}, {}, n_classes};
        for (auto i : idx) {
            if (task == Task::Regression) t.values.push_back(values[i]);
            else t.labels.push_back(labels[i]);
        }
        return t;
    }
};

struct ForestParams {
    std::size_t n_trees = 100;
    std::size_t max_depth = 0;  // 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t features_per_split = 0;  // 0 = ceil(sqrt(p)) or ceil(p/3)
    bool bootstrap = true;
    std::size_t threads = 1;

    static ForestParams regression_defaults() {
        ForestParams p;
        p.min_leaf = 5;
        return p;
    }
    static ForestParams classification_defaults() { return {}; }
};

inline std::size_t default_features_per_split(Task task, std::size_t p) {
    if (p == 0) return 0;
    const double v = task == Task::Classification ? std::sqrt(static_cast<double>(p)) : static_cast<double>(p) / 3.0;
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(v - 1e-12)), 1, p);
}

// ---------------------------------------------------------------------------
// Trees

struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    bool missing_left = true;
    std::uint32_t samples = 0;
    double value = 0.0;                       // regression leaf mean
    std::vector<std::uint32_t> class_counts;  // classification leaf counts

    [[nodiscard]] bool is_leaf() const { return feature < 0; }
    friend bool operator==(const Node&, const Node&) = default;
};

struct Tree {
    std::vector<Node> nodes;  // root at index 0

    [[nodiscard]] const Node& leaf_for(std::span<const std::optional<double>> row) const {
        const Node* n = &nodes.front();
        while (!n->is_leaf()) {
            const auto& v = row[static_cast<std::size_t>(n->feature)];
            const bool go_left = v ? *v <= n->threshold : n->missing_left;
            n = &nodes[go_left ? n->left : n->right];
        }
        return *n;
    }

    [[nodiscard]] std::size_t depth() const {
        std::size_t best = 0;
        std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            if (!nodes[i].is_leaf()) {
                stack.emplace_back(nodes[i].left, d + 1);
                stack.emplace_back(nodes[i].right, d + 1);
            }
        }
        return best;
    }

    friend bool operator==(const Tree&, const Tree&) = default;
};

/// Majority class of a leaf; the lowest index wins ties.
inline std::size_t leaf_class(const Node& n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n.class_counts.size(); ++c)
        if (n.class_counts[c] > n.class_counts[best]) best = c;
    return best;
}

namespace detail {

struct SplitChoice {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double decrease = -std::numeric_limits<double>::infinity();
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const Targets& targets, const ForestParams& params, std::size_t mtry, Rng& rng)
        : data_(data), targets_(targets), params_(params), mtry_(mtry), rng_(rng) {}

    Tree build(std::vector<std::uint32_t> rows) {
        tree_.nodes.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    std::uint32_t grow(std::vector<std::uint32_t> rows, std::size_t depth) {
        const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        tree_.nodes[id].samples = static_cast<std::uint32_t>(rows.size());

        const bool depth_stop = params_.max_depth != 0 && depth >= params_.max_depth;
        const bool size_stop = rows.size() < 2 * std::max<std::size_t>(params_.min_leaf, 1);
        if (depth_stop || size_stop || is_pure(rows)) {
            make_leaf(id, rows);
            return id;
        }

        const SplitChoice best = find_split(rows);
        if (best.feature < 0) {
            make_leaf(id, rows);
            return id;
        }

        const auto f = static_cast<std::size_t>(best.feature);
        std::vector<std::uint32_t> left, right, missing;
        for (auto r : rows) {
            if (!data_.present(r, f)) missing.push_back(r);
            else if (data_.value(r, f) <= best.threshold) left.push_back(r);
            else right.push_back(r);
        }
        const bool missing_left = left.size() >= right.size();
        auto& sink = missing_left ? left : right;
        sink.insert(sink.end(), missing.begin(), missing.end());

        tree_.nodes[id].feature = best.feature;
        tree_.nodes[id].threshold = best.threshold;
        tree_.nodes[id].missing_left = missing_left;
        rows.clear();
        rows.shrink_to_fit();
        const std::uint32_t l = grow(std::move(left), depth + 1);
        const std::uint32_t r = grow(std::move(right), depth + 1);
        tree_.nodes[id].left = l;
        tree_.nodes[id].right = r;
        return id;
    }

    bool is_pure(const std::vector<std::uint32_t>& rows) const {
        if (targets_.task == Task::Regression) {
            const double first = targets_.values[rows.front()];
            return std::all_of(rows.begin(), rows.end(), [&](auto r) { return targets_.values[r] == first; });
        }
        const int first = targets_.labels[rows.front()];
        return std::all_of(rows.begin(), rows.end(), [&](auto r) { return targets_.labels[r] == first; });
    }

    void make_leaf(std::uint32_t id, const std::vector<std::uint32_t>& rows) {
        Node& n = tree_.nodes[id];
        n.feature = -1;
        if (targets_.task == Task::Regression) {
            double s = 0.0;
            for (auto r : rows) s += targets_.values[r];
            n.value = s / static_cast<double>(rows.size());
            // Keep the mean inside the observed range despite rounding.
            auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(), [&](auto a, auto b) {
                return targets_.values[a] < targets_.values[b];
            });
            n.value = std::clamp(n.value, targets_.values[*lo], targets_.values[*hi]);
        } else {
            n.class_counts.assign(targets_.n_classes, 0);
            for (auto r : rows) ++n.class_counts[static_cast<std::size_t>(targets_.labels[r])];
        }
    }

    std::vector<std::size_t> sample_features() {
        const std::size_t p = data_.features();
        std::vector<std::size_t> all(p);
        std::iota(all.begin(), all.end(), 0);
        const std::size_t m = std::min(mtry_, p);
        for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + rng_.index(p - i)]);
        all.resize(m);
        return all;
    }

    SplitChoice find_split(const std::vector<std::uint32_t>& rows) {
        SplitChoice best;
        const std::size_t min_leaf = std::max<std::size_t>(params_.min_leaf, 1);
        std::vector<std::pair<double, std::uint32_t>> sorted;
        sorted.reserve(rows.size());

        for (std::size_t f : sample_features()) {
            sorted.clear();
            for (auto r : rows)
                if (data_.present(r, f)) sorted.emplace_back(data_.value(r, f), r);
            const std::size_t m = sorted.size();
            if (m < 2 * min_leaf) continue;
            std::sort(sorted.begin(), sorted.end());
            if (sorted.front().first == sorted.back().first) continue;

            if (targets_.task == Task::Regression) scan_regression(sorted, f, min_leaf, best);
            else scan_classification(sorted, f, min_leaf, best);
        }
        return best;
    }

    static double midpoint(double a, double b) {
        double mid = a + (b - a) / 2.0;
        if (!(mid >= a && mid < b)) mid = a;
        return mid;
    }

    void consider(SplitChoice& best, std::size_t f, double threshold, double decrease) const {
        if (decrease > best.decrease + 1e-12 * std::abs(best.decrease) || best.feature < 0) {
            if (best.feature >= 0 && !(decrease > best.decrease)) return;
            best.feature = static_cast<std::int32_t>(f);
            best.threshold = threshold;
            best.decrease = decrease;
        }
    }

    void scan_regression(const std::vector<std::pair<double, std::uint32_t>>& sorted, std::size_t f,
                         std::size_t min_leaf, SplitChoice& best) const {
        const std::size_t m = sorted.size();
        // Centre on the node mean to avoid cancellation in the sums of squares.
        double mean = 0.0;
        for (const auto& [v, r] : sorted) mean += targets_.values[r];
        mean /= static_cast<double>(m);
        double total = 0.0, total_sq = 0.0;
        for (const auto& [v, r] : sorted) {
            const double y = targets_.values[r] - mean;
            total += y;
            total_sq += y * y;
        }
        const double parent_sse = total_sq - total * total / static_cast<double>(m);

        double left = 0.0, left_sq = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i) {
            const double y = targets_.values[sorted[i].second] - mean;
            left += y;
            left_sq += y * y;
            const std::size_t nl = i + 1, nr = m - nl;
            if (sorted[i].first == sorted[i + 1].first) continue;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double right = total - left, right_sq = total_sq - left_sq;
            const double sse_l = left_sq - left * left / static_cast<double>(nl);
            const double sse_r = right_sq - right * right / static_cast<double>(nr);
            consider(best, f, midpoint(sorted[i].first, sorted[i + 1].first), parent_sse - sse_l - sse_r);
        }
    }

    void scan_classification(const std::vector<std::pair<double, std::uint32_t>>& sorted, std::size_t f,
                             std::size_t min_leaf, SplitChoice& best) const {
        const std::size_t m = sorted.size();
        const std::size_t k = targets_.n_classes;
        std::vector<double> total(k, 0.0), left(k, 0.0);
        for (const auto& [v, r] : sorted) total[static_cast<std::size_t>(targets_.labels[r])] += 1.0;
        // n * gini = n - sum(c^2) / n
        auto weighted_gini = [k](const std::vector<double>& counts, double n) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += counts[c] * counts[c];
            return n - s / n;
        };
        const double parent = weighted_gini(total, static_cast<double>(m));
        std::vector<double> right(k);
        for (std::size_t i = 0; i + 1 < m; ++i) {
            left[static_cast<std::size_t>(targets_.labels[sorted[i].second])] += 1.0;
            const std::size_t nl = i + 1, nr = m - nl;
            if (sorted[i].first == sorted[i + 1].first) continue;
            if (nl < min_leaf || nr < min_leaf) continue;
            for (std::size_t c = 0; c < k; ++c) right[c] = total[c] - left[c];
            const double decrease = parent - weighted_gini(left, static_cast<double>(nl)) -
                                    weighted_gini(right, static_cast<double>(nr));
            consider(best, f, midpoint(sorted[i].first, sorted[i + 1].first), decrease);
        }
    }

    const Dataset& data_;
    const Targets& targets_;
    const ForestParams& params_;
    std::size_t mtry_;
    Rng& rng_;
    Tree tree_;
};

inline void check_inputs(const Dataset& data, const Targets& targets) {
    if (data.rows() == 0) throw DataError("cannot fit on empty input");
    if (targets.size() != data.rows()) throw DataError("targets and rows differ in length");
    if (targets.task == Task::Classification) {
        if (targets.n_classes == 0) throw DataError("classification needs at least one class");
        for (int l : targets.labels)
            if (l < 0 || static_cast<std::size_t>(l) >= targets.n_classes) throw DataError("label out of range");
    } else {
        for (double v : targets.values)
            if (!std::isfinite(v)) throw DataError("non-finite regression target");
    }
}

}  // namespace detail

/// Single CART tree over all rows.
inline Tree fit_tree(const Dataset& data, const Targets& targets, const ForestParams& params, std::uint64_t seed) {
    detail::check_inputs(data, targets);
    const std::size_t mtry =
        params.features_per_split ? params.features_per_split : default_features_per_split(targets.task, data.features());
    Rng rng(seed);
    std::vector<std::uint32_t> rows(data.rows());
    std::iota(rows.begin(), rows.end(), 0u);
    detail::TreeBuilder builder(data, targets, params, mtry, rng);
    return builder.build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Forests

inline constexpr std::uint32_t kFormatVersion = 1;

struct ForestModel {
    Task task = Task::Regression;
    std::vector<Tree> trees;
    ForestParams params;
    std::size_t features_per_split = 0;  // resolved value
    std::vector<std::string> feature_names;
    std::string target_name;
    std::vector<std::string> class_names;
    std::uint64_t master_seed = 0;
    std::uint32_t format_version = kFormatVersion;

    [[nodiscard]] std::size_t n_trees() const { return trees.size(); }
    [[nodiscard]] std::size_t n_classes() const { return class_names.size(); }

    friend bool operator==(const ForestModel& a, const ForestModel& b) {
        return a.task == b.task && a.trees == b.trees && a.params.n_trees == b.params.n_trees &&
               a.params.max_depth == b.params.max_depth && a.params.min_leaf == b.params.min_leaf &&
               a.params.bootstrap == b.params.bootstrap && a.features_per_split == b.features_per_split &&
               a.feature_names == b.feature_names && a.target_name == b.target_name &&
               a.class_names == b.class_names && a.master_seed == b.master_seed &&
               a.format_version == b.format_version;
    }
};

inline std::uint64_t tree_seed(std::uint64_t master, std::size_t tree) { return derive_seed(master, tree); }

/// Bootstrap sample (with replacement, size n) for one tree.
inline std::vector<std::uint32_t> bootstrap_rows(Rng& rng, std::size_t n) {
    std::vector<std::uint32_t> rows(n);
    for (auto& r : rows) r = static_cast<std::uint32_t>(rng.index(n));
    std::sort(rows.begin(), rows.end());
    return rows;
}

/// Bagged ensemble. Each tree uses its own seed derived from the master
/// seed, so the result is identical for any thread count.
inline ForestModel fit_forest(const Dataset& data, const Targets& targets, const ForestParams& params,
                              std::uint64_t master_seed, std::vector<std::string> feature_names = {},
                              std::string target_name = {}, std::vector<std::string> class_names = {}) {
    detail::check_inputs(data, targets);
    if (params.n_trees == 0) throw ConfigError("n_trees must be at least 1");
    if (feature_names.empty())
        for (std::size_t f = 0; f < data.features(); ++f) feature_names.push_back("f" + std::to_string(f));
    if (feature_names.size() != data.features()) throw DataError("feature name count mismatch");
    if (targets.task == Task::Classification && class_names.empty())
        for (std::size_t c = 0; c < targets.n_classes; ++c) class_names.push_back(std::to_string(c));

    ForestModel model;
    model.task = targets.task;
    model.params = params;
    model.features_per_split =
        params.features_per_split ? std::min(params.features_per_split, data.features())
                                  : default_features_per_split(targets.task, data.features());
    model.feature_names = std::move(feature_names);
    model.target_name = std::move(target_name);
    model.class_names = targets.task == Task::Classification ? std::move(class_names) : std::vector<std::string>{};
    model.master_seed = master_seed;
    model.trees.resize(params.n_trees);

    auto train_one = [&](std::size_t t) {
        Rng rng(tree_seed(master_seed, t));
        std::vector<std::uint32_t> rows;
        if (params.bootstrap) {
            rows = bootstrap_rows(rng, data.rows());
        } else {
            rows.resize(data.rows());
            std::iota(rows.begin(), rows.end(), 0u);
        }
        detail::TreeBuilder builder(data, targets, params, model.features_per_split, rng);
        model.trees[t] = builder.build(std::move(rows));
    };

    const std::size_t threads = std::max<std::size_t>(1, std::min(params.threads, params.n_trees));
    if (threads == 1) {
        for (std::size_t t = 0; t < params.n_trees; ++t) train_one(t);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < params.n_trees; t += threads) train_one(t);
            });
        for (auto& th : pool) th.join();
    }
    return model;
}

struct Prediction {
    double value = 0.0;                // regression output
    std::size_t label = 0;             // classification majority class
    std::vector<double> vote_fraction;  // per class, sums to 1
};

inline Prediction predict(const ForestModel& model, std::span<const std::optional<double>> row) {
    if (row.size() != model.feature_names.size()) throw ModelError("feature mismatch");
    if (model.trees.empty()) throw ModelError("model has no trees");
    Prediction p;
    if (model.task == Task::Regression) {
        double s = 0.0;
        for (const auto& t : model.trees) s += t.leaf_for(row).value;
        p.value = s / static_cast<double>(model.trees.size());
        return p;
    }
    std::vector<std::size_t> votes(model.n_classes(), 0);
    for (const auto& t : model.trees) ++votes[leaf_class(t.leaf_for(row))];
    p.vote_fraction.resize(votes.size());
    for (std::size_t c = 0; c < votes.size(); ++c)
        p.vote_fraction[c] = static_cast<double>(votes[c]) / static_cast<double>(model.trees.size());
    p.label = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[p.label]) p.label = c;
    p.value = static_cast<double>(p.label);
    return p;
}

inline Prediction predict(const ForestModel& model, const Dataset& data, std::size_t row) {
    const auto r = data.row(row);
    return predict(model, r);
}

/// Out-of-bag accuracy (classification) or R² (regression) on the training
/// data, recomputing each tree's bootstrap sample from its seed.
inline double oob_score(const ForestModel& model, const Dataset& data, const Targets& targets) {
    if (!model.params.bootstrap) throw ConfigError("out-of-bag score needs bootstrap sampling");
    const std::size_t n = data.rows();
    std::vector<std::vector<std::uint8_t>> in_bag(model.trees.size(), std::vector<std::uint8_t>(n, 0));
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        Rng rng(tree_seed(model.master_seed, t));
        for (auto r : bootstrap_rows(rng, n)) in_bag[t][r] = 1;
    }
    std::size_t scored = 0, correct = 0;
    std::vector<double> y, yhat;
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = data.row(r);
        std::vector<std::size_t> votes(model.n_classes(), 0);
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t t = 0; t < model.trees.size(); ++t) {
            if (in_bag[t][r]) continue;
            const Node& leaf = model.trees[t].leaf_for(row);
            if (model.task == Task::Regression) sum += leaf.value;
            else ++votes[leaf_class(leaf)];
            ++used;
        }
        if (used == 0) continue;
        ++scored;
        if (model.task == Task::Regression) {
            y.push_back(targets.values[r]);
            yhat.push_back(sum / static_cast<double>(used));
        } else {
            std::size_t best = 0;
            for (std::size_t c = 1; c < votes.size(); ++c)
                if (votes[c] > votes[best]) best = c;
            if (static_cast<int>(best) == targets.labels[r]) ++correct;
        }
    }
    if (scored == 0) throw DataError("no out-of-bag rows");
    if (model.task == Task::Regression) return metrics::r2(metrics::RegressionSample(y, yhat));
    return static_cast<double>(correct) / static_cast<double>(scored);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldSpec {
    std::size_t k = 5;
    std::uint64_t seed = 0;
};

/// Shuffles row indices once and cuts them into k contiguous folds whose
/// sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, const FoldSpec& spec) {
    if (spec.k < 2) throw ConfigError("k-fold needs k >= 2");
    if (spec.k > n) throw DataError("k-fold: k exceeds number of rows");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(idx);
    std::vector<std::vector<std::size_t>> folds(spec.k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < spec.k; ++f) {
        const std::size_t size = n / spec.k + (f < n % spec.k ? 1 : 0);
        folds[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                        idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[f].begin(), folds[f].end());
        pos += size;
    }
    return folds;
}

struct FoldResult {
    std::vector<std::size_t> test_rows;
    std::optional<metrics::RegressionMetrics> regression;
    std::optional<double> accuracy;
};

struct CvResult {
    std::vector<FoldResult> folds;
    /// Out-of-fold prediction for every row (regression value or class).
    std::vector<Prediction> out_of_fold;
    double mean_mae = 0.0;
    double mean_mse = 0.0;
    std::optional<double> mean_r2;
    std::optional<double> mean_accuracy;
};

inline CvResult cross_validate(const Dataset& data, const Targets& targets, const ForestParams& params,
                               const FoldSpec& spec, std::uint64_t master_seed,
                               const std::vector<std::string>& class_names = {}) {
    detail::check_inputs(data, targets);
    const auto folds = make_folds(data.rows(), spec);
    CvResult res;
    res.out_of_fold.resize(data.rows());

    double r2_sum = 0.0, acc_sum = 0.0;
    std::size_t r2_count = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::size_t> train;
        for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
        std::sort(train.begin(), train.end());

        const auto model = fit_forest(data.select(train), targets.select(train), params,
                                      derive_seed(master_seed, 0xF01Du + f), {}, {}, class_names);
        FoldResult fr;
        fr.test_rows = folds[f];
        std::vector<double> y, yhat;
        std::size_t correct = 0;
        for (auto r : folds[f]) {
            auto p = predict(model, data, r);
            if (targets.task == Task::Regression) {
                y.push_back(targets.values[r]);
                yhat.push_back(p.value);
            } else if (static_cast<int>(p.label) == targets.labels[r]) {
                ++correct;
            }
            res.out_of_fold[r] = std::move(p);
        }
        if (targets.task == Task::Regression) {
            fr.regression = metrics::regression_metrics(metrics::RegressionSample(y, yhat));
            res.mean_mae += fr.regression->mae;
            res.mean_mse += fr.regression->mse;
            if (fr.regression->r2) {
                r2_sum += *fr.regression->r2;
                ++r2_count;
            }
        } else {
            fr.accuracy = static_cast<double>(correct) / static_cast<double>(folds[f].size());
            acc_sum += *fr.accuracy;
        }
        res.folds.push_back(std::move(fr));
    }
    const double k = static_cast<double>(folds.size());
    if (targets.task == Task::Regression) {
        res.mean_mae /= k;
        res.mean_mse /= k;
        if (r2_count) res.mean_r2 = r2_sum / static_cast<double>(r2_count);
    } else {
        res.mean_accuracy = acc_sum / k;
    }
    return res;
}

// ---------------------------------------------------------------------------
// URNS1 container (layout in docs/model-format.md)

inline constexpr std::array<char, 5> kMagic{'U', 'R', 'N', 'S', '1'};

namespace io {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    [[nodiscard]] const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ModelError("model file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace io

inline std::string serialize(const ForestModel& m) {
    io::Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(m.format_version);
    w.u8(static_cast<std::uint8_t>(m.task));
    w.u64(m.master_seed);
    w.u32(static_cast<std::uint32_t>(m.params.n_trees));
    w.u32(static_cast<std::uint32_t>(m.params.max_depth));
    w.u32(static_cast<std::uint32_t>(m.params.min_leaf));
    w.u32(static_cast<std::uint32_t>(m.features_per_split));
    w.u8(m.params.bootstrap ? 1 : 0);
    w.str(m.target_name);
    w.u32(static_cast<std::uint32_t>(m.feature_names.size()));
    for (const auto& f : m.feature_names) w.str(f);
    w.u32(static_cast<std::uint32_t>(m.class_names.size()));
    for (const auto& c : m.class_names) w.str(c);
    w.u32(static_cast<std::uint32_t>(m.trees.size()));
    for (const auto& t : m.trees) {
        w.u32(static_cast<std::uint32_t>(t.nodes.size()));
        for (const auto& n : t.nodes) {
            w.i32(n.feature);
            w.u32(n.samples);
            if (n.is_leaf()) {
                if (m.task == Task::Regression) {
                    w.f64(n.value);
                } else {
                    for (auto c : n.class_counts) w.u32(c);
                }
            } else {
                w.f64(n.threshold);
                w.u32(n.left);
                w.u32(n.right);
                w.u8(n.missing_left ? 1 : 0);
            }
        }
    }
    return w.buffer();
}

inline ForestModel deserialize(std::string_view bytes) {
    if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw ModelError("not a URANUS model");
    io::Reader r(bytes.substr(kMagic.size()));
    ForestModel m;
    m.format_version = r.u32();
    if (m.format_version != kFormatVersion)
        throw ModelError("model-version mismatch: file v" + std::to_string(m.format_version) + ", expected v" +
                         std::to_string(kFormatVersion));
    const auto task = r.u8();
    if (task > 1) throw ModelError("unknown task code");
    m.task = static_cast<Task>(task);
    m.master_seed = r.u64();
    m.params.n_trees = r.u32();
    m.params.max_depth = r.u32();
    m.params.min_leaf = r.u32();
    m.features_per_split = r.u32();
    m.params.features_per_split = m.features_per_split;
    m.params.bootstrap = r.u8() != 0;
    m.target_name = r.str();
    const auto nf = r.u32();
    for (std::uint32_t i = 0; i < nf; ++i) m.feature_names.push_back(r.str());
    const auto nc = r.u32();
    for (std::uint32_t i = 0; i < nc; ++i) m.class_names.push_back(r.str());
    const auto nt = r.u32();
    m.trees.resize(nt);
    for (auto& t : m.trees) {
        const auto nn = r.u32();
        if (nn == 0) throw ModelError("empty tree in model file");
        t.nodes.resize(nn);
        for (auto& n : t.nodes) {
            n.feature = r.i32();
            n.samples = r.u32();
            if (n.is_leaf()) {
                if (m.task == Task::Regression) {
                    n.value = r.f64();
                } else {
                    n.class_counts.resize(nc);
                    for (auto& c : n.class_counts) c = r.u32();
                }
            } else {
                if (static_cast<std::uint32_t>(n.feature) >= nf) throw ModelError("split feature out of range");
                n.threshold = r.f64();
                n.left = r.u32();
                n.right = r.u32();
                n.missing_left = r.u8() != 0;
                if (n.left >= nn || n.right >= nn) throw ModelError("corrupt tree links");
            }
        }
    }
    if (!r.done()) throw ModelError("trailing bytes after model");
    return m;
}

inline void save(const ForestModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write model " + path);
    const auto bytes = serialize(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelError("I/O failure writing model " + path);
}

inline ForestModel load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace uranus::forest

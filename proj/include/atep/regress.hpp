#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "atep/common.hpp"
#include "atep/features.hpp"
#include "atep/parallel.hpp"
#include "atep/rng.hpp"

namespace atep {

enum class MaxFeaturesRule { all, sqrt_rule, log2_rule };

inline const char* max_features_name(MaxFeaturesRule r) {
    switch (r) {
        case MaxFeaturesRule::all: return "all";
        case MaxFeaturesRule::sqrt_rule: return "sqrt";
        case MaxFeaturesRule::log2_rule: return "log2";
    }
    return "?";
}

inline MaxFeaturesRule max_features_from_name(const std::string& s) {
    if (s == "all" || s == "none") return MaxFeaturesRule::all;
    if (s == "sqrt") return MaxFeaturesRule::sqrt_rule;
    if (s == "log2") return MaxFeaturesRule::log2_rule;
    throw InvalidInput("unknown max_features rule '" + s + "'");
}

/// Random-forest hyperparameters and their tunable ranges.
struct Hyperparameters {
    int n_estimators = 100;          // [10, 1000]
    int min_samples_split = 2;       // {2, 5, 10}
    int min_samples_leaf = 1;        // {1, 2, 4}
    MaxFeaturesRule max_features = MaxFeaturesRule::all;
    int max_depth = 100;             // [10, 100]
    bool bootstrap = true;

    static Hyperparameters defaults() { return {}; }

    bool within_ranges() const {
        auto one_of = [](int v, std::initializer_list<int> set) {
            return std::find(set.begin(), set.end(), v) != set.end();
        };
        return n_estimators >= 10 && n_estimators <= 1000 && one_of(min_samples_split, {2, 5, 10}) &&
               one_of(min_samples_leaf, {1, 2, 4}) && max_depth >= 10 && max_depth <= 100;
    }

    int candidate_feature_count(int width) const {
        switch (max_features) {
            case MaxFeaturesRule::all: return width;
            case MaxFeaturesRule::sqrt_rule: return std::max(1, int(std::sqrt(double(width))));
            case MaxFeaturesRule::log2_rule: return std::max(1, int(std::log2(double(width))));
        }
        return width;
    }
};

/// Flattened regression tree; internal nodes carry (feature, threshold,
/// children), leaves carry the mean target of the samples that reached them.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double prediction = 0.0;
    int n_samples = 0;

    bool is_leaf() const { return left < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        int i = 0;
        while (!nodes[std::size_t(i)].is_leaf()) {
            const TreeNode& nd = nodes[std::size_t(i)];
            i = x[std::size_t(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[std::size_t(i)].prediction;
    }

    int depth() const {
        std::vector<std::pair<int, int>> stack{{0, 0}};
        int best = 0;
        while (!stack.empty()) {
            auto [i, d] = stack.back();
            stack.pop_back();
            best = std::max(best, d);
            const TreeNode& nd = nodes[std::size_t(i)];
            if (!nd.is_leaf()) {
                stack.push_back({nd.left, d + 1});
                stack.push_back({nd.right, d + 1});
            }
        }
        return best;
    }
};

struct DummyModel {
    double mean = 0.0;
};

struct LinearModel {
    std::vector<double> coefficients;
    double intercept = 0.0;
};

struct ModelMetadata {
    std::string testcase_id;
    std::string pooling_kind;
    double train_fraction = 0.0;
};

/// Trained ensemble plus everything needed to reproduce and reuse it: the
/// hyperparameters, the feature mask applied before training, the master
/// seed, and run metadata. Immutable after training.
struct ForestModel {
    std::vector<Tree> trees;
    Hyperparameters hp;
    FeatureMask mask;                        // maps full-width descriptors to model inputs
    std::vector<std::string> feature_names;  // full (pre-mask) names
    uint64_t rng_seed = 0;
    ModelMetadata meta;
    int input_width = 0;  // width after masking
};

// ---- fitting ----

inline DummyModel fit_dummy(const Dataset& train) {
    if (train.examples.empty()) throw InvalidInput("fit_dummy: empty dataset");
    double s = 0;
    for (const auto& e : train.examples) s += e.ate;
    return DummyModel{s / double(train.size())};
}

/// Ordinary least squares with intercept; rank-deficient designs fall back
/// to the minimum-norm solution via SVD.
inline LinearModel fit_linear(const Dataset& train) {
    if (train.size() < 2) throw InvalidInput("fit_linear: need at least 2 examples");
    const int n = train.size(), d = train.width();
    Eigen::MatrixXd X(n, d + 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (int j = 0; j < d; ++j) X(i, j + 1) = train.examples[std::size_t(i)].descriptor[std::size_t(j)];
        y(i) = train.examples[std::size_t(i)].ate;
    }
    Eigen::VectorXd beta = X.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
    LinearModel m;
    m.intercept = beta(0);
    m.coefficients.assign(beta.data() + 1, beta.data() + 1 + d);
    return m;
}

namespace detail {

/// CART growth working set. Per feature, sample indices are sorted by value
/// once up front; node splits stably partition every feature's segment, so
/// split search is a linear scan per node instead of a sort per node.
class TreeBuilder {
public:
    TreeBuilder(const std::vector<double>& X, const std::vector<double>& y, int width,
                const Hyperparameters& hp, Rng rng)
        : X_(X), y_(y), d_(width), hp_(hp), rng_(rng) {}

    Tree build(std::vector<int> sample_indices) {
        const int n = int(sample_indices.size());
        order_.assign(std::size_t(d_) * std::size_t(n), 0);
        for (int f = 0; f < d_; ++f) {
            int* seg = order_.data() + std::size_t(f) * std::size_t(n);
            std::copy(sample_indices.begin(), sample_indices.end(), seg);
            std::stable_sort(seg, seg + n, [&](int a, int b) { return x_at(a, f) < x_at(b, f); });
        }
        scratch_.resize(std::size_t(n));
        side_.assign(y_.size(), 0);
        n_total_ = n;
        Tree tree;
        grow(tree, 0, n, 0);
        order_.clear();
        order_.shrink_to_fit();
        return tree;
    }

private:
    double x_at(int row, int col) const { return X_[std::size_t(row) * d_ + std::size_t(col)]; }

    int* feature_segment(int f, int begin) { return order_.data() + std::size_t(f) * std::size_t(n_total_) + begin; }

    struct Split {
        bool valid = false;
        int feature = -1;
        double threshold = 0.0;
        double objective = std::numeric_limits<double>::infinity();
        int n_left = 0;
    };

    static bool near_equal(double a, double b) {
        if (!std::isfinite(a) || !std::isfinite(b)) return false;
        return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    }

    /// Best (feature, threshold) by summed child SSE over the candidate
    /// features; thresholds are midpoints of consecutive distinct values.
    /// Ties keep the earliest candidate, i.e. lowest feature index then
    /// lowest threshold (candidates are scanned in ascending order).
    Split find_split(int begin, int end, const std::vector<int>& features) {
        Split best;
        const int n = end - begin;
        for (int f : features) {
            const int* seg = feature_segment(f, begin);
            if (x_at(seg[0], f) == x_at(seg[n - 1], f)) continue;  // constant in this node

            double sum_total = 0, sq_total = 0;
            for (int i = 0; i < n; ++i) {
                double t = y_[std::size_t(seg[i])];
                sum_total += t;
                sq_total += t * t;
            }
            double sum_left = 0, sq_left = 0;
            for (int i = 0; i < n - 1; ++i) {
                double t = y_[std::size_t(seg[i])];
                sum_left += t;
                sq_left += t * t;
                double x_here = x_at(seg[i], f), x_next = x_at(seg[i + 1], f);
                if (x_here == x_next) continue;
                int nl = i + 1, nr = n - nl;
                if (nl < hp_.min_samples_leaf || nr < hp_.min_samples_leaf) continue;
                double sum_right = sum_total - sum_left, sq_right = sq_total - sq_left;
                double sse = (sq_left - sum_left * sum_left / nl) + (sq_right - sum_right * sum_right / nr);
                if (sse < best.objective && !near_equal(sse, best.objective)) {
                    double threshold = 0.5 * (x_here + x_next);
                    // adjacent doubles can round the midpoint up to the
                    // right value; fall back to the left value so x <= t
                    // still separates the sorted prefix
                    if (threshold >= x_next) threshold = x_here;
                    best.valid = true;
                    best.feature = f;
                    best.threshold = threshold;
                    best.objective = sse;
                    best.n_left = nl;
                }
            }
        }
        return best;
    }

    int grow(Tree& tree, int begin, int end, int depth) {
        const int n = end - begin;
        const int* rows = feature_segment(0, begin);
        double sum = 0;
        double ymin = y_[std::size_t(rows[0])], ymax = ymin;
        for (int i = 0; i < n; ++i) {
            double t = y_[std::size_t(rows[i])];
            sum += t;
            ymin = std::min(ymin, t);
            ymax = std::max(ymax, t);
        }

        int node_id = int(tree.nodes.size());
        tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, sum / n, n});

        const bool pure = ymin == ymax;
        if (pure || n < hp_.min_samples_split || depth >= hp_.max_depth) return node_id;

        std::vector<int> features;
        int k = hp_.candidate_feature_count(d_);
        if (k >= d_) {
            features.resize(std::size_t(d_));
            for (int j = 0; j < d_; ++j) features[std::size_t(j)] = j;
        } else {
            features = rng_.sample_without_replacement(d_, k);
            std::sort(features.begin(), features.end());
        }

        Split split = find_split(begin, end, features);
        if (!split.valid) return node_id;

        // mark rows by side (duplicated bootstrap rows share a value, hence
        // a side), then stably partition every feature's segment
        for (int i = 0; i < n; ++i) {
            int row = rows[i];
            side_[std::size_t(row)] = x_at(row, split.feature) <= split.threshold ? 0 : 1;
        }
        for (int f = 0; f < d_; ++f) {
            int* seg = feature_segment(f, begin);
            int out_left = 0, out_right = 0;
            for (int i = 0; i < n; ++i) {
                int row = seg[i];
                if (side_[std::size_t(row)] == 0) seg[out_left++] = row;
                else scratch_[std::size_t(out_right++)] = row;
            }
            std::copy(scratch_.begin(), scratch_.begin() + out_right, seg + out_left);
            if (f == 0 && (out_left == 0 || out_right == 0)) return node_id;  // failed to separate
        }

        int mid = begin + split.n_left;
        int left = grow(tree, begin, mid, depth + 1);
        int right = grow(tree, mid, end, depth + 1);
        tree.nodes[std::size_t(node_id)].feature = split.feature;
        tree.nodes[std::size_t(node_id)].threshold = split.threshold;
        tree.nodes[std::size_t(node_id)].left = left;
        tree.nodes[std::size_t(node_id)].right = right;
        return node_id;
    }

    const std::vector<double>& X_;
    const std::vector<double>& y_;
    int d_;
    Hyperparameters hp_;
    Rng rng_;
    std::vector<int> order_;    // d segments of the sample indices, sorted per feature
    std::vector<int> scratch_;  // right-side buffer for stable partitions
    std::vector<char> side_;    // per-row side marks, indexed by row id
    int n_total_ = 0;
};

inline void flatten_dataset(const Dataset& ds, std::vector<double>& X, std::vector<double>& y) {
    const int n = ds.size(), d = ds.width();
    X.resize(std::size_t(n) * std::size_t(d));
    y.resize(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        const auto& e = ds.examples[std::size_t(i)];
        if (int(e.descriptor.size()) != d) throw InvalidInput("dataset has inconsistent descriptor widths");
        std::copy(e.descriptor.begin(), e.descriptor.end(), X.begin() + std::size_t(i) * std::size_t(d));
        y[std::size_t(i)] = e.ate;
    }
}

}  // namespace detail

/// Grow one CART regression tree. Greedy variance-reduction splits; stops at
/// max_depth, min_samples_split, min_samples_leaf or pure targets. The rng
/// seed drives per-node candidate-feature sampling when max_features < all.
inline Tree fit_tree(const Dataset& train, const Hyperparameters& hp, uint64_t rng_seed) {
    if (train.size() < 1) throw InvalidInput("fit_tree: empty dataset");
    std::vector<double> X, y;
    detail::flatten_dataset(train, X, y);
    detail::TreeBuilder builder(X, y, train.width(), hp, Rng(rng_seed, "tree_features"));
    std::vector<int> idx(std::size_t(train.size()));
    for (int i = 0; i < train.size(); ++i) idx[std::size_t(i)] = i;
    return builder.build(std::move(idx));
}

/// Bagged forest: n_estimators trees, each trained on a bootstrap resample
/// (or the full set when bootstrap=false) with its own derived rng stream,
/// so results do not depend on thread schedule.
inline ForestModel fit_forest(const Dataset& train, const Hyperparameters& hp, uint64_t rng_seed,
                              int jobs = 1) {
    if (train.size() < 1) throw InvalidInput("fit_forest: empty dataset");
    std::vector<double> X, y;
    detail::flatten_dataset(train, X, y);
    const int n = train.size(), d = train.width();

    ForestModel model;
    model.hp = hp;
    model.rng_seed = rng_seed;
    model.input_width = d;
    model.feature_names = train.feature_names;
    model.mask.threshold = 1.0;
    model.mask.kept_indices.resize(std::size_t(d));
    for (int j = 0; j < d; ++j) model.mask.kept_indices[std::size_t(j)] = j;

    model.trees.resize(std::size_t(hp.n_estimators));
    parallel_for(std::size_t(hp.n_estimators), jobs, [&](std::size_t t) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        if (hp.bootstrap) {
            Rng boot(rng_seed, "bootstrap", t);
            for (int i = 0; i < n; ++i) idx[std::size_t(i)] = int(boot.uniform_int(0, n - 1));
        } else {
            for (int i = 0; i < n; ++i) idx[std::size_t(i)] = i;
        }
        detail::TreeBuilder builder(X, y, d, hp, Rng(derive_seed(rng_seed, "tree", t), "tree_features"));
        model.trees[t] = builder.build(std::move(idx));
    });
    return model;
}

// ---- prediction ----

inline double predict(const DummyModel& m, std::span<const double>) { return m.mean; }

inline double predict(const LinearModel& m, std::span<const double> x) {
    if (x.size() != m.coefficients.size()) throw InvalidInput("predict: descriptor width mismatch");
    double v = m.intercept;
    for (std::size_t j = 0; j < x.size(); ++j) v += m.coefficients[j] * x[j];
    return v;
}

inline double predict(const Tree& t, std::span<const double> x) { return t.predict(x); }

/// Forest prediction: arithmetic mean of tree outputs (a convex combination
/// of training-target leaf means, hence within the training target range).
inline double predict(const ForestModel& m, std::span<const double> x) {
    if (int(x.size()) != m.input_width) throw InvalidInput("predict: descriptor width mismatch, expected " +
                                                           std::to_string(m.input_width) + " got " +
                                                           std::to_string(x.size()));
    double s = 0;
    for (const auto& t : m.trees) s += t.predict(x);
    return s / double(m.trees.size());
}

using AnyModel = std::variant<DummyModel, LinearModel, Tree, ForestModel>;

inline double predict_any(const AnyModel& m, std::span<const double> x) {
    return std::visit([&](const auto& model) { return predict(model, x); }, m);
}

// ---- randomized hyperparameter search with cross validation ----

struct TuneCandidate {
    Hyperparameters hp;
    std::vector<double> fold_r2;
    double mean_r2 = -std::numeric_limits<double>::infinity();
};

struct TuneResult {
    Hyperparameters best;
    int best_index = -1;
    int k_folds = 0;
    std::vector<TuneCandidate> candidates;
};

namespace detail {

/// Contiguous sequence-respecting fold blocks, balanced by example count.
inline std::vector<std::vector<int>> fold_blocks(const Dataset& ds, int k_folds) {
    auto order = ds.sequence_order();
    if (int(order.size()) < k_folds)
        throw InvalidInput("cross validation: " + std::to_string(k_folds) + " folds need at least as many sequences, got " +
                           std::to_string(order.size()));
    std::vector<int> seq_of_example(std::size_t(ds.size()));
    std::vector<int> seq_count(order.size(), 0);
    for (int i = 0; i < ds.size(); ++i) {
        const auto& id = ds.examples[std::size_t(i)].sequence_id;
        int s = int(std::find(order.begin(), order.end(), id) - order.begin());
        seq_of_example[std::size_t(i)] = s;
        seq_count[std::size_t(s)]++;
    }
    // assign sequences to k contiguous blocks, keeping counts balanced and
    // every block non-empty
    std::vector<int> block_of_seq(order.size());
    int remaining_seqs = int(order.size());
    int remaining_examples = ds.size();
    int block = 0, in_block = 0;
    for (std::size_t s = 0; s < order.size(); ++s) {
        block_of_seq[s] = block;
        in_block += seq_count[s];
        remaining_seqs--;
        remaining_examples -= seq_count[s];
        int remaining_blocks = k_folds - block - 1;
        if (remaining_blocks > 0 &&
            (remaining_seqs == remaining_blocks ||
             in_block >= (remaining_examples + in_block) / (remaining_blocks + 1))) {
            ++block;
            in_block = 0;
        }
    }
    std::vector<std::vector<int>> folds(static_cast<std::size_t>(k_folds));
    for (int i = 0; i < ds.size(); ++i)
        folds[std::size_t(block_of_seq[std::size_t(seq_of_example[std::size_t(i)])])].push_back(i);
    for (const auto& f : folds)
        if (f.empty()) throw InvalidInput("cross validation: produced an empty fold");
    return folds;
}

inline Dataset subset(const Dataset& ds, const std::vector<int>& rows) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.testcase_id = ds.testcase_id;
    out.examples.reserve(rows.size());
    for (int i : rows) out.examples.push_back(ds.examples[std::size_t(i)]);
    return out;
}

inline Hyperparameters sample_hyperparameters(Rng& rng) {
    Hyperparameters hp;
    hp.n_estimators = int(rng.log_uniform_int(10, 1000));
    const int splits[] = {2, 5, 10};
    hp.min_samples_split = splits[rng.uniform_int(0, 2)];
    const int leaves[] = {1, 2, 4};
    hp.min_samples_leaf = leaves[rng.uniform_int(0, 2)];
    const MaxFeaturesRule rules[] = {MaxFeaturesRule::all, MaxFeaturesRule::sqrt_rule,
                                     MaxFeaturesRule::log2_rule};
    hp.max_features = rules[rng.uniform_int(0, 2)];
    hp.max_depth = int(rng.uniform_int(10, 100));
    hp.bootstrap = rng.bernoulli(0.5);
    return hp;
}

/// R-squared used inside cross validation; NaN when the fold's targets have
/// no variance (the fold is then ignored in the candidate mean).
inline double fold_r2(std::span<const double> y, std::span<const double> yhat) {
    double mean = 0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double sse = 0, sst = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst <= 0) return std::numeric_limits<double>::quiet_NaN();
    return 1.0 - sse / sst;
}

}  // namespace detail

/// Randomized search over the hyperparameter ranges with k-fold
/// sequence-respecting cross validation. Returns the candidate with the best
/// mean fold R^2; ties prefer fewer estimators, then shallower depth, then
/// the earlier candidate. Every (candidate, fold) fit uses a seed derived
/// from (rng_seed, indices), so the outcome is independent of thread order.
inline TuneResult tune(const Dataset& train, int n_candidates, int k_folds, uint64_t rng_seed,
                       int jobs = 1) {
    if (n_candidates < 1) throw InvalidInput("tune: n_candidates must be positive");
    if (k_folds < 2) throw InvalidInput("tune: need at least 2 folds");
    auto folds = detail::fold_blocks(train, k_folds);

    TuneResult result;
    result.k_folds = k_folds;
    result.candidates.resize(std::size_t(n_candidates));
    Rng sampler(rng_seed, "tune_sample");
    for (auto& c : result.candidates) c.hp = detail::sample_hyperparameters(sampler);

    std::vector<std::vector<int>> train_rows(static_cast<std::size_t>(k_folds));
    for (int f = 0; f < k_folds; ++f)
        for (int g = 0; g < k_folds; ++g)
            if (g != f) train_rows[std::size_t(f)].insert(train_rows[std::size_t(f)].end(),
                                                          folds[std::size_t(g)].begin(),
                                                          folds[std::size_t(g)].end());
    for (auto& rows : train_rows) std::sort(rows.begin(), rows.end());

    std::vector<double> scores(std::size_t(n_candidates) * std::size_t(k_folds));
    parallel_for(scores.size(), jobs, [&](std::size_t w) {
        int c = int(w) / k_folds;
        int f = int(w) % k_folds;
        Dataset fit_set = detail::subset(train, train_rows[std::size_t(f)]);
        Dataset val_set = detail::subset(train, folds[std::size_t(f)]);
        // common random numbers: the fit seed depends on the fold only, so
        // candidate scores differ through hyperparameters rather than
        // bootstrap luck
        ForestModel m = fit_forest(fit_set, result.candidates[std::size_t(c)].hp,
                                   derive_seed(rng_seed, "tune_fit", std::size_t(f)));
        std::vector<double> yhat(val_set.examples.size());
        for (std::size_t i = 0; i < val_set.examples.size(); ++i)
            yhat[i] = predict(m, val_set.examples[i].descriptor);
        scores[w] = detail::fold_r2(val_set.targets(), yhat);
    });

    for (int c = 0; c < n_candidates; ++c) {
        auto& cand = result.candidates[std::size_t(c)];
        cand.fold_r2.assign(scores.begin() + std::size_t(c) * std::size_t(k_folds),
                            scores.begin() + std::size_t(c + 1) * std::size_t(k_folds));
        double sum = 0;
        int valid = 0;
        for (double r : cand.fold_r2)
            if (!std::isnan(r)) {
                sum += r;
                ++valid;
            }
        cand.mean_r2 = valid ? sum / valid : -std::numeric_limits<double>::infinity();
    }

    for (int c = 0; c < n_candidates; ++c) {
        if (result.best_index < 0) {
            result.best_index = c;
            continue;
        }
        const auto& cur = result.candidates[std::size_t(c)];
        const auto& best = result.candidates[std::size_t(result.best_index)];
        const double eps = 1e-12;
        if (cur.mean_r2 > best.mean_r2 + eps) {
            result.best_index = c;
        } else if (std::abs(cur.mean_r2 - best.mean_r2) <= eps) {
            if (cur.hp.n_estimators < best.hp.n_estimators ||
                (cur.hp.n_estimators == best.hp.n_estimators && cur.hp.max_depth < best.hp.max_depth))
                result.best_index = c;
        }
    }
    result.best = result.candidates[std::size_t(result.best_index)].hp;
    return result;
}

// ---- model persistence (versioned JSON) ----

inline nlohmann::ordered_json hyperparameters_to_json(const Hyperparameters& hp) {
    nlohmann::ordered_json j;
    j["n_estimators"] = hp.n_estimators;
    j["min_samples_split"] = hp.min_samples_split;
    j["min_samples_leaf"] = hp.min_samples_leaf;
    j["max_features"] = max_features_name(hp.max_features);
    j["max_depth"] = hp.max_depth;
    j["bootstrap"] = hp.bootstrap;
    return j;
}

inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j) {
    Hyperparameters hp;
    hp.n_estimators = j.at("n_estimators").get<int>();
    hp.min_samples_split = j.at("min_samples_split").get<int>();
    hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    hp.max_features = max_features_from_name(j.at("max_features").get<std::string>());
    hp.max_depth = j.at("max_depth").get<int>();
    hp.bootstrap = j.at("bootstrap").get<bool>();
    return hp;
}

inline nlohmann::ordered_json model_to_json(const ForestModel& m) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["kind"] = "random_forest";
    j["hyperparameters"] = hyperparameters_to_json(m.hp);
    j["feature_mask"] = mask_to_json(m.mask);
    j["feature_names"] = m.feature_names;
    j["input_width"] = m.input_width;
    j["rng_seed"] = m.rng_seed;
    j["metadata"] = {{"testcase_id", m.meta.testcase_id},
                     {"pooling_kind", m.meta.pooling_kind},
                     {"train_fraction", m.meta.train_fraction}};
    nlohmann::ordered_json trees = nlohmann::ordered_json::array();
    for (const auto& t : m.trees) {
        nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
        for (const auto& nd : t.nodes)
            nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.prediction, nd.n_samples});
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline ForestModel model_from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw ParseError("unsupported model format_version");
    if (j.at("kind").get<std::string>() != "random_forest")
        throw ParseError("unsupported model kind '" + j.at("kind").get<std::string>() + "'");
    ForestModel m;
    m.hp = hyperparameters_from_json(j.at("hyperparameters"));
    m.mask = mask_from_json(j.at("feature_mask"));
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.input_width = j.at("input_width").get<int>();
    m.rng_seed = j.at("rng_seed").get<uint64_t>();
    m.meta.testcase_id = j.at("metadata").at("testcase_id").get<std::string>();
    m.meta.pooling_kind = j.at("metadata").at("pooling_kind").get<std::string>();
    m.meta.train_fraction = j.at("metadata").at("train_fraction").get<double>();
    for (const auto& tj : j.at("trees")) {
        Tree t;
        for (const auto& nj : tj) {
            TreeNode nd;
            nd.feature = nj.at(0).get<int>();
            nd.threshold = nj.at(1).get<double>();
            nd.left = nj.at(2).get<int>();
            nd.right = nj.at(3).get<int>();
            nd.prediction = nj.at(4).get<double>();
            nd.n_samples = nj.at(5).get<int>();
            t.nodes.push_back(nd);
        }
        m.trees.push_back(std::move(t));
    }
    return m;
}

}  // namespace atep

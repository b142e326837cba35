#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atep/common.hpp"
#include "atep/csv.hpp"
#include "atep/io.hpp"

namespace atep {

struct SplitError : Error {
    using Error::Error;
};

/// One (descriptor, ATE) training pair with its provenance.
struct Example {
    std::vector<double> descriptor;
    double ate = 0.0;  // meters, >= 0
    std::string sequence_id;
    int cutoff_k = 0;
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<std::string> feature_names;  // shared by all examples
    std::string testcase_id;

    int width() const { return int(feature_names.size()); }
    int size() const { return int(examples.size()); }

    std::vector<double> targets() const {
        std::vector<double> y;
        y.reserve(examples.size());
        for (const auto& e : examples) y.push_back(e.ate);
        return y;
    }

    std::vector<double> feature_column(int j) const {
        std::vector<double> col;
        col.reserve(examples.size());
        for (const auto& e : examples) col.push_back(e.descriptor[std::size_t(j)]);
        return col;
    }

    /// Sequence ids in order of first appearance.
    std::vector<std::string> sequence_order() const {
        std::vector<std::string> order;
        for (const auto& e : examples)
            if (order.empty() || order.back() != e.sequence_id)
                if (std::find(order.begin(), order.end(), e.sequence_id) == order.end())
                    order.push_back(e.sequence_id);
        return order;
    }
};

/// Pearson product-moment correlation. Zero-variance input yields 0 with
/// degenerate set (collinearity is undefined against a constant).
inline double pearson(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr) {
    if (a.size() != b.size()) throw InvalidInput("pearson: length mismatch");
    if (a.size() < 2) throw InvalidInput("pearson: need at least 2 samples");
    if (degenerate) *degenerate = false;
    const double n = double(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0 || sbb <= 0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

/// Which features survive PMCC-based decorrelation. Exactly one keeper per
/// correlated group (its lowest index); zero-variance features are dropped
/// before grouping.
struct FeatureMask {
    std::vector<int> kept_indices;          // sorted
    std::vector<std::vector<int>> groups;   // each group's members incl. keeper
    std::vector<int> zero_variance;         // dropped before grouping
    double threshold = 0.95;
};

/// Greedy grouping over |PMCC|: scan features in index order; feature j
/// joins the group of the lowest-indexed keeper with |PMCC| > threshold,
/// else starts its own group. Deterministic and order-stable.
inline FeatureMask decorrelate(const Dataset& dataset, double threshold = 0.95) {
    if (dataset.size() < 2) throw InvalidInput("decorrelate: need at least 2 examples");
    if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidInput("decorrelate: threshold must be in (0,1]");
    FeatureMask mask;
    mask.threshold = threshold;

    const int d = dataset.width();
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(d));
    std::vector<bool> constant(std::size_t(d), false);
    for (int j = 0; j < d; ++j) {
        cols[std::size_t(j)] = dataset.feature_column(j);
        const auto& c = cols[std::size_t(j)];
        constant[std::size_t(j)] =
            std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); });
        if (constant[std::size_t(j)]) mask.zero_variance.push_back(j);
    }

    for (int j = 0; j < d; ++j) {
        if (constant[std::size_t(j)]) continue;
        bool joined = false;
        for (auto& group : mask.groups) {
            int keeper = group.front();
            bool degen = false;
            double r = pearson(cols[std::size_t(keeper)], cols[std::size_t(j)], &degen);
            if (!degen && std::abs(r) > threshold) {
                group.push_back(j);
                joined = true;
                break;
            }
        }
        if (!joined) mask.groups.push_back({j});
    }
    for (const auto& g : mask.groups) mask.kept_indices.push_back(g.front());
    std::sort(mask.kept_indices.begin(), mask.kept_indices.end());
    if (mask.kept_indices.empty()) throw InvalidInput("decorrelate: every feature is degenerate");
    return mask;
}

inline Dataset apply_mask(const Dataset& dataset, const FeatureMask& mask) {
    for (int idx : mask.kept_indices)
        if (idx < 0 || idx >= dataset.width())
            throw InvalidInput("apply_mask: index " + std::to_string(idx) + " out of range for width " +
                               std::to_string(dataset.width()));
    Dataset out;
    out.testcase_id = dataset.testcase_id;
    for (int idx : mask.kept_indices) out.feature_names.push_back(dataset.feature_names[std::size_t(idx)]);
    out.examples.reserve(dataset.examples.size());
    for (const auto& e : dataset.examples) {
        Example m;
        m.ate = e.ate;
        m.sequence_id = e.sequence_id;
        m.cutoff_k = e.cutoff_k;
        m.descriptor.reserve(mask.kept_indices.size());
        for (int idx : mask.kept_indices) m.descriptor.push_back(e.descriptor[std::size_t(idx)]);
        out.examples.push_back(std::move(m));
    }
    return out;
}

/// Split whole sequences, in listed order, into train until the cumulative
/// example count reaches train_fraction of the total; the rest is test. No
/// sequence straddles the split and example order is preserved.
inline std::pair<Dataset, Dataset> sequential_split(const Dataset& dataset, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidInput("sequential_split: train_fraction must be in (0,1)");
    auto order = dataset.sequence_order();
    if (order.size() < 2)
        throw SplitError("sequential_split: need at least 2 sequences, got " + std::to_string(order.size()));

    std::vector<std::size_t> counts(order.size(), 0);
    for (const auto& e : dataset.examples)
        for (std::size_t s = 0; s < order.size(); ++s)
            if (order[s] == e.sequence_id) {
                counts[s]++;
                break;
            }

    const double target = train_fraction * double(dataset.size());
    std::size_t cum = 0, n_train_seqs = 0;
    for (std::size_t s = 0; s < order.size(); ++s) {
        cum += counts[s];
        n_train_seqs = s + 1;
        if (double(cum) >= target) break;
    }
    if (n_train_seqs >= order.size())
        throw SplitError("sequential_split: fraction " + format_double(train_fraction) +
                         " leaves no test sequences");

    Dataset train, test;
    train.testcase_id = test.testcase_id = dataset.testcase_id;
    train.feature_names = test.feature_names = dataset.feature_names;
    for (const auto& e : dataset.examples) {
        bool is_train = false;
        for (std::size_t s = 0; s < n_train_seqs; ++s)
            if (order[s] == e.sequence_id) {
                is_train = true;
                break;
            }
        (is_train ? train : test).examples.push_back(e);
    }
    if (train.examples.empty() || test.examples.empty())
        throw SplitError("sequential_split: one side of the split is empty");
    return {std::move(train), std::move(test)};
}

// ---- persistence ----

inline std::string dataset_to_csv(const Dataset& dataset) {
    std::vector<std::string> header = {"sequence_id", "cutoff_k", "ate"};
    header.insert(header.end(), dataset.feature_names.begin(), dataset.feature_names.end());
    std::string out = join_csv(header) + "\n";
    for (const auto& e : dataset.examples) {
        out += e.sequence_id + ',' + std::to_string(e.cutoff_k) + ',' + format_double(e.ate);
        for (double v : e.descriptor) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline Dataset dataset_from_csv(const std::string& path, const std::string& testcase_id = "") {
    CsvTable t = read_csv(path);
    if (t.header.size() < 4 || t.header[0] != "sequence_id" || t.header[1] != "cutoff_k" || t.header[2] != "ate")
        throw ParseError(path + ": expected header sequence_id,cutoff_k,ate,<features...>");
    Dataset ds;
    ds.testcase_id = testcase_id;
    ds.feature_names.assign(t.header.begin() + 3, t.header.end());
    for (const auto& r : t.rows) {
        if (r.size() != t.header.size()) throw ParseError(path + ": ragged dataset row");
        Example e;
        e.sequence_id = r[0];
        e.cutoff_k = int(parse_long(r[1], path));
        e.ate = parse_double(r[2], path);
        e.descriptor.reserve(r.size() - 3);
        for (std::size_t i = 3; i < r.size(); ++i) e.descriptor.push_back(parse_double(r[i], path));
        ds.examples.push_back(std::move(e));
    }
    return ds;
}

inline nlohmann::ordered_json mask_to_json(const FeatureMask& mask) {
    nlohmann::ordered_json j;
    j["threshold"] = mask.threshold;
    j["groups"] = mask.groups;
    j["kept_indices"] = mask.kept_indices;
    j["zero_variance"] = mask.zero_variance;
    return j;
}

inline FeatureMask mask_from_json(const nlohmann::json& j) {
    FeatureMask mask;
    mask.threshold = j.at("threshold").get<double>();
    mask.groups = j.at("groups").get<std::vector<std::vector<int>>>();
    mask.kept_indices = j.at("kept_indices").get<std::vector<int>>();
    if (j.contains("zero_variance")) mask.zero_variance = j.at("zero_variance").get<std::vector<int>>();
    return mask;
}

}  // namespace atep

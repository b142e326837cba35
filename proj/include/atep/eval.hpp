#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "atep/common.hpp"
#include "atep/features.hpp"
#include "atep/pooling.hpp"
#include "atep/regress.hpp"
#include "atep/trajectory.hpp"

namespace atep {

struct UndefinedMetric : Error {
    using Error::Error;
};

/// Coefficient of determination: 1 - SSE/SST.
inline double r2(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw InvalidInput("r2: length mismatch");
    if (y.size() < 2) throw InvalidInput("r2: need at least 2 samples");
    double mean = 0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double sse = 0, sst = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
        sst += (y[i] - mean) * (y[i] - mean);
    }
    if (sst <= 0) throw UndefinedMetric("r2: zero total variance in targets");
    return 1.0 - sse / sst;
}

/// Mean absolute percentage error, as a fraction (display layers may scale
/// to percent).
inline double mape(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw InvalidInput("mape: length mismatch");
    if (y.empty()) throw InvalidInput("mape: empty input");
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) throw UndefinedMetric("mape: zero target at index " + std::to_string(i));
        s += std::abs((y[i] - yhat[i]) / y[i]);
    }
    return s / double(y.size());
}

inline double mae(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw InvalidInput("mae: length mismatch");
    if (y.empty()) throw InvalidInput("mae: empty input");
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
    return s / double(y.size());
}

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw InvalidInput("rmse: length mismatch");
    if (y.empty()) throw InvalidInput("rmse: empty input");
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return std::sqrt(s / double(y.size()));
}

/// Out-of-range rule for failed regression: R^2 or MAPE outside [0, 1]
/// (NaN counts as out of range).
inline bool regression_failed(double r2_value, double mape_value) {
    bool r2_ok = r2_value >= 0.0 && r2_value <= 1.0;
    bool mape_ok = mape_value >= 0.0 && mape_value <= 1.0;
    return !(r2_ok && mape_ok);
}

/// The four regression-quality metrics plus the failed flag and run
/// metadata. MAPE excludes zero-valued targets (undefined there) and counts
/// them in mape_excluded; R^2/MAE/RMSE include every pair.
struct EvalReport {
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double mape = std::numeric_limits<double>::quiet_NaN();
    double mae = 0.0;
    double rmse = 0.0;
    int n = 0;
    bool failed = false;
    int mape_excluded = 0;
    std::string testcase_id;
    std::string pooling_kind;
    std::string model_family;
    double train_fraction = 0.0;
    uint64_t partition_hash = 0;
    std::string note;
};

inline EvalReport make_report(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) throw InvalidInput("make_report: length mismatch");
    if (y.empty()) throw InvalidInput("make_report: empty input");
    EvalReport rep;
    rep.n = int(y.size());
    rep.mae = mae(y, yhat);
    rep.rmse = rmse(y, yhat);

    std::vector<double> yz, yhatz;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 0.0) {
            rep.mape_excluded++;
            continue;
        }
        yz.push_back(y[i]);
        yhatz.push_back(yhat[i]);
    }
    if (!yz.empty()) rep.mape = mape(yz, yhatz);
    else rep.note = "all targets zero, MAPE undefined";

    if (y.size() >= 2) {
        double mean = 0;
        for (double v : y) mean += v;
        mean /= double(y.size());
        double sse = 0, sst = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
            sst += (y[i] - mean) * (y[i] - mean);
        }
        if (sst > 0) rep.r2 = 1.0 - sse / sst;
        else if (sse == 0) rep.r2 = 1.0;  // constant targets predicted exactly
        // else: zero variance with nonzero error, R^2 undefined -> NaN
    }
    rep.failed = regression_failed(rep.r2, rep.mape);
    return rep;
}

template <typename Model>
inline std::vector<double> predict_all(const Model& model, const Dataset& test) {
    std::vector<double> yhat(test.examples.size());
    for (std::size_t i = 0; i < test.examples.size(); ++i)
        yhat[i] = predict(model, test.examples[i].descriptor);
    return yhat;
}

template <typename Model>
inline EvalReport evaluate(const Model& model, const Dataset& test) {
    if (test.examples.empty()) throw InvalidInput("evaluate: empty test set");
    std::vector<double> yhat = predict_all(model, test);
    EvalReport rep = make_report(test.targets(), yhat);
    rep.testcase_id = test.testcase_id;
    return rep;
}

/// Hash of a (sequence, side) partition; comparison rows produced from the
/// same split must carry the same value.
inline uint64_t partition_hash(const Dataset& train, const Dataset& test) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : train.examples) h = fnv1a64(e.sequence_id + "\x01", h);
    h = fnv1a64("\x02", h);
    for (const auto& e : test.examples) h = fnv1a64(e.sequence_id + "\x01", h);
    return h;
}

// ---- ATE-at-fraction baseline ----

/// Per-sequence row of the baseline comparison table.
struct BaselineRow {
    std::string sequence_id;
    int cutoff = 0;      // keyframe index used as the predictor
    double yhat = 0.0;   // ATE at the fraction cutoff
    double y = 0.0;      // full-trajectory ATE
};

struct BaselineReport {
    double fraction = 0.2;
    std::vector<BaselineRow> rows;
    EvalReport metrics;
};

/// Use the ATE observed at ceil(fraction*K) keyframes as the predictor for
/// the full-trajectory ATE of each sequence.
inline BaselineReport ate_at_fraction_baseline(
    const std::vector<std::pair<std::string, std::vector<SubTrajectoryExample>>>& per_sequence,
    double fraction = 0.2) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("baseline: fraction must be in (0,1]");
    if (per_sequence.empty()) throw InvalidInput("baseline: no sequences");
    BaselineReport rep;
    rep.fraction = fraction;
    std::vector<double> y, yhat;
    for (const auto& [seq_id, examples] : per_sequence) {
        if (examples.empty()) throw InvalidInput("baseline: sequence " + seq_id + " has no examples");
        int K = 0;
        for (const auto& e : examples) K = std::max(K, e.cutoff_k);
        int cutoff = int(std::ceil(fraction * double(K)));
        const SubTrajectoryExample* at_cut = nullptr;
        const SubTrajectoryExample* at_end = nullptr;
        for (const auto& e : examples) {
            if (e.cutoff_k == cutoff) at_cut = &e;
            if (e.cutoff_k == K) at_end = &e;
        }
        if (!at_cut || at_cut->skipped())
            throw InsufficientData("baseline: sequence " + seq_id + " lacks a usable prefix ATE at keyframe " +
                                   std::to_string(cutoff));
        if (!at_end || at_end->skipped())
            throw InsufficientData("baseline: sequence " + seq_id + " lacks a full-trajectory ATE");
        rep.rows.push_back({seq_id, cutoff, *at_cut->ate, *at_end->ate});
        yhat.push_back(*at_cut->ate);
        y.push_back(*at_end->ate);
    }
    rep.metrics = make_report(y, yhat);
    return rep;
}

// ---- training pipeline shared by the comparison drivers ----

struct TrainOptions {
    double train_fraction = 0.7;
    double pmcc_threshold = 0.95;
    int n_candidates = 60;
    int k_folds = 3;
    uint64_t seed = 1;
    int jobs = 1;
    bool tune_hyperparameters = true;
};

struct TrainOutcome {
    ForestModel model;
    FeatureMask mask;
    EvalReport report;
    std::optional<TuneResult> tuning;
    Dataset train;
    Dataset test;
    std::vector<double> yhat_test;
};

/// Sequential split, decorrelate on the training side only, optional
/// randomized search, final forest fit, held-out evaluation.
inline TrainOutcome train_forest_pipeline(const Dataset& dataset, const TrainOptions& opts) {
    TrainOutcome out;
    auto [train, test] = sequential_split(dataset, opts.train_fraction);
    out.mask = decorrelate(train, opts.pmcc_threshold);
    Dataset mtrain = apply_mask(train, out.mask);
    Dataset mtest = apply_mask(test, out.mask);

    Hyperparameters hp = Hyperparameters::defaults();
    if (opts.tune_hyperparameters) {
        out.tuning = tune(mtrain, opts.n_candidates, opts.k_folds, derive_seed(opts.seed, "tune"), opts.jobs);
        hp = out.tuning->best;
    }
    out.model = fit_forest(mtrain, hp, derive_seed(opts.seed, "final_fit"), opts.jobs);
    out.model.mask = out.mask;
    out.model.feature_names = dataset.feature_names;
    out.model.meta.testcase_id = dataset.testcase_id;
    out.model.meta.train_fraction = opts.train_fraction;

    out.yhat_test = predict_all(out.model, mtest);
    out.report = make_report(mtest.targets(), out.yhat_test);
    out.report.testcase_id = dataset.testcase_id;
    out.report.model_family = "random_forest";
    out.report.train_fraction = opts.train_fraction;
    out.report.partition_hash = partition_hash(train, test);
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
}

// ---- model-family comparison (dummy, linear, tree, forest) ----

inline const std::vector<std::string>& model_families() {
    static const std::vector<std::string> fams = {"dummy", "linear", "decision_tree", "random_forest"};
    return fams;
}

/// One report per family on the identical split, every model at its default
/// hyperparameters.
inline std::vector<EvalReport> compare_models(const Dataset& dataset, const TrainOptions& opts) {
    auto [train, test] = sequential_split(dataset, opts.train_fraction);
    FeatureMask mask = decorrelate(train, opts.pmcc_threshold);
    Dataset mtrain = apply_mask(train, mask);
    Dataset mtest = apply_mask(test, mask);
    uint64_t phash = partition_hash(train, test);

    std::vector<EvalReport> reports;
    for (const std::string& family : model_families()) {
        EvalReport rep;
        if (family == "dummy") {
            rep = evaluate(fit_dummy(mtrain), mtest);
        } else if (family == "linear") {
            rep = evaluate(fit_linear(mtrain), mtest);
        } else if (family == "decision_tree") {
            Hyperparameters hp = Hyperparameters::defaults();
            hp.bootstrap = false;
            rep = evaluate(fit_tree(mtrain, hp, derive_seed(opts.seed, "compare_tree")), mtest);
        } else {
            rep = evaluate(fit_forest(mtrain, Hyperparameters::defaults(),
                                      derive_seed(opts.seed, "compare_forest"), opts.jobs),
                           mtest);
        }
        rep.testcase_id = dataset.testcase_id;
        rep.model_family = family;
        rep.train_fraction = opts.train_fraction;
        rep.partition_hash = phash;
        reports.push_back(std::move(rep));
    }
    return reports;
}

// ---- pooling-function comparison ----

/// One tuned-forest report per pooling kind. All rows must come from
/// datasets with identical example order, so the split partition (and its
/// hash) is the same for every row.
inline std::vector<EvalReport> compare_poolings(
    const std::vector<std::pair<PoolKind, Dataset>>& per_kind, const TrainOptions& opts) {
    std::vector<EvalReport> reports(per_kind.size());
    for (std::size_t i = 0; i < per_kind.size(); ++i) {
        const auto& [kind, dataset] = per_kind[i];
        EvalReport rep;
        try {
            TrainOutcome outcome = train_forest_pipeline(dataset, opts);
            rep = outcome.report;
        } catch (const Error& e) {
            rep.failed = true;
            rep.note = e.what();
            rep.testcase_id = dataset.testcase_id;
            rep.train_fraction = opts.train_fraction;
        }
        rep.pooling_kind = pool_kind_name(kind);
        rep.model_family = "random_forest";
        reports[i] = std::move(rep);
    }
    return reports;
}

// ---- limited-training-data sweep ----

struct SweepRow {
    double train_fraction = 0.0;
    EvalReport report;
};

struct SweepReport {
    std::vector<SweepRow> rows;  // fractions strictly increasing
};

inline std::vector<double> default_sweep_fractions() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
}

/// One tuned-model report per training fraction with an identical tuning
/// budget. Fractions the dataset cannot support are marked failed rather
/// than aborting the sweep.
inline SweepReport sweep_train_fraction(const Dataset& dataset, const std::vector<double>& fractions,
                                        const TrainOptions& base_opts) {
    for (std::size_t i = 1; i < fractions.size(); ++i)
        if (!(fractions[i] > fractions[i - 1]))
            throw InvalidInput("sweep: fractions must be strictly increasing");
    SweepReport sweep;
    for (double f : fractions) {
        TrainOptions opts = base_opts;
        opts.train_fraction = f;
        SweepRow row;
        row.train_fraction = f;
        try {
            row.report = train_forest_pipeline(dataset, opts).report;
        } catch (const Error& e) {
            row.report.failed = true;
            row.report.note = e.what();
            row.report.testcase_id = dataset.testcase_id;
            row.report.train_fraction = f;
        }
        sweep.rows.push_back(std::move(row));
    }
    return sweep;
}

// ---- report serialization ----

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    auto put = [&](const char* key, double v) {
        if (std::isnan(v)) j[key] = nullptr;
        else j[key] = v;
    };
    put("r2", r.r2);
    put("mape", r.mape);
    j["mae"] = r.mae;
    j["rmse"] = r.rmse;
    j["n"] = r.n;
    j["failed"] = r.failed;
    j["mape_excluded"] = r.mape_excluded;
    j["testcase_id"] = r.testcase_id;
    j["pooling_kind"] = r.pooling_kind;
    j["model_family"] = r.model_family;
    j["train_fraction"] = r.train_fraction;
    j["partition_hash"] = digest_hex(r.partition_hash);
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    auto get = [&](const char* key) {
        return j.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(key).get<double>();
    };
    r.r2 = get("r2");
    r.mape = get("mape");
    r.mae = j.at("mae").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.n = j.at("n").get<int>();
    r.failed = j.at("failed").get<bool>();
    r.mape_excluded = j.at("mape_excluded").get<int>();
    r.testcase_id = j.at("testcase_id").get<std::string>();
    r.pooling_kind = j.at("pooling_kind").get<std::string>();
    r.model_family = j.at("model_family").get<std::string>();
    r.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("note")) r.note = j.at("note").get<std::string>();
    return r;
}

}  // namespace atep

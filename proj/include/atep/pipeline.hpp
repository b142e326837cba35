#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atep/characterization.hpp"
#include "atep/common.hpp"
#include "atep/csv.hpp"
#include "atep/eval.hpp"
#include "atep/features.hpp"
#include "atep/io.hpp"
#include "atep/pooling.hpp"
#include "atep/regress.hpp"
#include "atep/trajectory.hpp"

namespace atep {

struct ConfigError : Error {
    using Error::Error;
};

struct SequenceSpec {
    std::string id;
    std::string estimate_trajectory_path;
    std::string ground_truth_path;
    std::string frames_index_path;
    std::optional<std::string> imu_path;
};

struct TestcaseSpec {
    std::string id;  // mode-dataset label, e.g. "S-KITTI"
    AlignMode alignment_mode = AlignMode::SE3;
    double max_time_offset = 0.02;
    std::vector<SequenceSpec> sequences;
};

struct TuningConfig {
    int n_candidates = 60;
    int k_folds = 3;
};

/// Declarative pipeline configuration; one file drives every stage. Flags
/// may override individual fields.
struct PipelineConfig {
    std::vector<TestcaseSpec> testcases;
    PoolKind pooling_kind = PoolKind::mean;
    int histogram_bins = 10;
    double train_fraction = 0.7;
    double pmcc_threshold = 0.95;
    TuningConfig tuning;
    uint64_t master_seed = 1;
    std::string output_dir = "out";
};

inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    namespace fs = std::filesystem;
    PipelineConfig cfg;
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path.string() : (base_dir / path).string();
    };
    for (const auto& tj : j.at("testcases")) {
        TestcaseSpec tc;
        tc.id = tj.at("id").get<std::string>();
        if (tj.contains("alignment_mode")) tc.alignment_mode = align_mode_from_name(tj.at("alignment_mode"));
        if (tj.contains("max_time_offset")) tc.max_time_offset = tj.at("max_time_offset").get<double>();
        for (const auto& sj : tj.at("sequences")) {
            SequenceSpec s;
            s.id = sj.at("id").get<std::string>();
            s.estimate_trajectory_path = resolve(sj.at("estimate_trajectory_path").get<std::string>());
            s.ground_truth_path = resolve(sj.at("ground_truth_path").get<std::string>());
            s.frames_index_path = resolve(sj.at("frames_index_path").get<std::string>());
            if (sj.contains("imu_path") && !sj.at("imu_path").is_null())
                s.imu_path = resolve(sj.at("imu_path").get<std::string>());
            tc.sequences.push_back(std::move(s));
        }
        cfg.testcases.push_back(std::move(tc));
    }
    if (j.contains("pooling_kind")) cfg.pooling_kind = pool_kind_from_name(j.at("pooling_kind"));
    if (j.contains("histogram_bins")) cfg.histogram_bins = j.at("histogram_bins").get<int>();
    if (j.contains("train_fraction")) cfg.train_fraction = j.at("train_fraction").get<double>();
    if (j.contains("pmcc_threshold")) cfg.pmcc_threshold = j.at("pmcc_threshold").get<double>();
    if (j.contains("tuning")) {
        cfg.tuning.n_candidates = j.at("tuning").value("n_candidates", 60);
        cfg.tuning.k_folds = j.at("tuning").value("k_folds", 3);
    }
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = resolve(j.at("output_dir").get<std::string>());
    return cfg;
}

inline void validate_config(const PipelineConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.testcases.empty()) throw ConfigError("config: no testcases");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw ConfigError("config: train_fraction must be in (0,1)");
    if (!(cfg.pmcc_threshold > 0.0 && cfg.pmcc_threshold <= 1.0))
        throw ConfigError("config: pmcc_threshold must be in (0,1]");
    if (cfg.tuning.n_candidates < 1 || cfg.tuning.k_folds < 2)
        throw ConfigError("config: bad tuning budget");
    for (const auto& tc : cfg.testcases) {
        if (tc.sequences.empty()) throw ConfigError("config: testcase " + tc.id + " has no sequences");
        for (const auto& s : tc.sequences)
            for (const std::string* p : {&s.estimate_trajectory_path, &s.ground_truth_path, &s.frames_index_path})
                if (!fs::exists(*p))
                    throw ConfigError("config: missing input " + *p + " (testcase " + tc.id + ", sequence " +
                                      s.id + ")");
    }
}

inline PipelineConfig load_config(const std::string& path, bool validate = true) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    PipelineConfig cfg = config_from_json(j, std::filesystem::path(path).parent_path());
    if (validate) validate_config(cfg);
    return cfg;
}

// ---- output layout ----

struct OutputLayout {
    std::filesystem::path root;

    explicit OutputLayout(const std::string& out_dir) : root(out_dir) {}

    std::string labels_csv(const std::string& tc) const { return (root / "examples" / (tc + ".labels.csv")).string(); }
    std::string dataset_csv(const std::string& tc, const std::string& pool) const {
        return (root / "datasets" / (tc + "." + pool + ".csv")).string();
    }
    std::string matrix_cache(const std::string& tc, const std::string& seq, uint64_t key) const {
        return (root / "cache" / "characterization" / tc / (seq + "." + digest_hex(key) + ".csv")).string();
    }
    std::string model_json(const std::string& tc, const std::string& pool) const {
        return (root / "models" / (tc + "." + pool + ".model.json")).string();
    }
    std::string mask_json(const std::string& tc, const std::string& pool) const {
        return (root / "models" / (tc + "." + pool + ".mask.json")).string();
    }
    std::string eval_json(const std::string& tc, const std::string& pool) const {
        return (root / "reports" / (tc + "." + pool + ".eval.json")).string();
    }
    std::string eval_txt(const std::string& tc, const std::string& pool) const {
        return (root / "reports" / (tc + "." + pool + ".eval.txt")).string();
    }
    std::string predictions_csv(const std::string& tc, const std::string& pool) const {
        return (root / "reports" / (tc + "." + pool + ".predictions.csv")).string();
    }
    std::string baseline_json(const std::string& tc, const std::string& pool) const {
        return (root / "reports" / (tc + "." + pool + ".baseline.json")).string();
    }
    std::string baseline_txt(const std::string& tc, const std::string& pool) const {
        return (root / "reports" / (tc + "." + pool + ".baseline.txt")).string();
    }
    std::string sweep_json(const std::string& tc) const { return (root / "reports" / (tc + ".sweep.json")).string(); }
    std::string sweep_txt(const std::string& tc) const { return (root / "reports" / (tc + ".sweep.txt")).string(); }
    std::string poolings_json(const std::string& tc) const {
        return (root / "reports" / (tc + ".poolings.json")).string();
    }
    std::string poolings_txt(const std::string& tc) const {
        return (root / "reports" / (tc + ".poolings.txt")).string();
    }
    std::string models_json(const std::string& tc) const { return (root / "reports" / (tc + ".models.json")).string(); }
    std::string models_txt(const std::string& tc) const { return (root / "reports" / (tc + ".models.txt")).string(); }
    std::string manifest_json() const { return (root / "manifest.json").string(); }
};

// ---- run manifest ----

/// Append or update one stage entry in the run manifest. Digests are stable
/// for identical inputs and seeds; timings are informational only and live
/// nowhere else, so models and reports stay byte-identical across runs.
inline void update_manifest(const OutputLayout& out, uint64_t config_digest, const std::string& stage,
                            const std::map<std::string, uint64_t>& inputs,
                            const std::map<std::string, uint64_t>& outputs, double timing_ms) {
    nlohmann::ordered_json m;
    {
        std::ifstream in(out.manifest_json());
        if (in) {
            try {
                in >> m;
            } catch (const nlohmann::json::exception&) {
                m = nlohmann::ordered_json();
            }
        }
    }
    m["atep_version"] = kVersion;
    m["config_digest"] = digest_hex(config_digest);
    auto to_json = [](const std::map<std::string, uint64_t>& d) {
        nlohmann::ordered_json j;
        for (const auto& [k, v] : d) j[k] = digest_hex(v);
        return j;
    };
    m["stages"][stage] = {{"inputs", to_json(inputs)}, {"outputs", to_json(outputs)}, {"timing_ms", timing_ms}};
    atomic_write_file(out.manifest_json(), m.dump(2) + "\n");
}

inline uint64_t config_digest(const PipelineConfig& cfg) {
    std::string repr;
    for (const auto& tc : cfg.testcases) {
        repr += tc.id + "|" + align_mode_name(tc.alignment_mode) + "|" + format_double(tc.max_time_offset);
        for (const auto& s : tc.sequences)
            repr += "|" + s.id + "|" + s.estimate_trajectory_path + "|" + s.ground_truth_path + "|" +
                    s.frames_index_path + "|" + (s.imu_path ? *s.imu_path : "");
    }
    repr += std::string("|") + pool_kind_name(cfg.pooling_kind) + "|" + format_double(cfg.train_fraction) +
            "|" + format_double(cfg.pmcc_threshold) + "|" + std::to_string(cfg.tuning.n_candidates) + "|" +
            std::to_string(cfg.tuning.k_folds) + "|" + std::to_string(cfg.master_seed);
    return fnv1a64(repr);
}

namespace detail {
class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline void log_line(std::ostream* log, const std::string& line) {
    if (log) (*log) << line << "\n";
}
}  // namespace detail

// ---- labels (sub-trajectory examples with ATE) ----

struct SequenceLabels {
    std::string sequence_id;
    std::vector<SubTrajectoryExample> examples;
};

inline std::vector<SequenceLabels> compute_labels(const TestcaseSpec& tc, int jobs) {
    std::vector<SequenceLabels> out;
    for (const auto& seq : tc.sequences) {
        Trajectory est = load_trajectory(seq.estimate_trajectory_path, "estimate");
        Trajectory gt = load_trajectory(seq.ground_truth_path, "ground_truth");
        SequenceLabels labels;
        labels.sequence_id = seq.id;
        labels.examples =
            generate_subtrajectory_examples(est, gt, tc.alignment_mode, tc.max_time_offset, seq.id, jobs);
        out.push_back(std::move(labels));
    }
    return out;
}

inline std::string labels_to_csv(const std::vector<SequenceLabels>& labels) {
    std::string out = "sequence_id,cutoff_k,ate,skipped\n";
    for (const auto& sl : labels)
        for (const auto& e : sl.examples) {
            out += sl.sequence_id + "," + std::to_string(e.cutoff_k) + ",";
            if (e.ate) out += format_double(*e.ate);
            out += e.skipped() ? ",1\n" : ",0\n";
        }
    return out;
}

inline std::vector<SequenceLabels> labels_from_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    if (t.header != std::vector<std::string>{"sequence_id", "cutoff_k", "ate", "skipped"})
        throw ParseError(path + ": expected header sequence_id,cutoff_k,ate,skipped");
    std::vector<SequenceLabels> out;
    for (const auto& r : t.rows) {
        if (r.size() != 4) throw ParseError(path + ": ragged labels row");
        if (out.empty() || out.back().sequence_id != r[0]) out.push_back({r[0], {}});
        SubTrajectoryExample e;
        e.sequence_id = r[0];
        e.cutoff_k = int(parse_long(r[1], path));
        e.frame_range = {1, e.cutoff_k};
        if (r[3] == "0") e.ate = parse_double(r[2], path);
        out.back().examples.push_back(std::move(e));
    }
    return out;
}

// ---- characterization cache ----

inline uint64_t sequence_content_key(const SequenceSpec& seq, const std::vector<Metric>& metrics) {
    namespace fs = std::filesystem;
    uint64_t h = fnv1a64("characterization-v1");
    for (Metric m : metrics) h = fnv1a64(std::string(metric_name(m)) + ";", h);
    std::string index_bytes = read_file_bytes(seq.frames_index_path);
    h = fnv1a64(index_bytes, h);
    if (seq.imu_path) h = fnv1a64(read_file_bytes(*seq.imu_path), h);
    // image bytes, in index order
    fs::path base = fs::path(seq.frames_index_path).parent_path();
    std::istringstream in(index_bytes);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (first) {
            first = false;
            if (fields.size() == 2 && fields[0] == "timestamp") continue;
        }
        if (fields.size() == 2) h = fnv1a64(read_file_bytes((base / fields[1]).string()), h);
    }
    return h;
}

/// Fetch the sequence's characterization matrix through the on-disk cache,
/// keyed by the content digest of the raw inputs and the metric set.
inline CharacterizationMatrix cached_characterization(const OutputLayout& out, const std::string& tc_id,
                                                      const SequenceSpec& seq,
                                                      const std::vector<Metric>& metrics, int jobs,
                                                      bool* cache_hit = nullptr) {
    uint64_t key = sequence_content_key(seq, metrics);
    std::string path = out.matrix_cache(tc_id, seq.id, key);
    if (std::filesystem::exists(path)) {
        if (cache_hit) *cache_hit = true;
        return matrix_from_csv(path, seq.id);
    }
    if (cache_hit) *cache_hit = false;
    std::vector<Frame> frames = load_sequence_frames(seq.frames_index_path, seq.imu_path);
    CharacterizationMatrix mat = characterize_sequence(frames, metrics, seq.id, jobs);
    atomic_write_file(path, matrix_to_csv(mat));
    return mat;
}

// ---- dataset assembly ----

/// Build the pooled dataset for one testcase: example (seq, k) gets the
/// descriptor of the first k matrix columns and its prefix-ATE label.
/// Skipped prefixes are left out.
inline Dataset assemble_dataset(const OutputLayout& out, const TestcaseSpec& tc,
                                const std::vector<SequenceLabels>& labels, PoolKind kind,
                                int histogram_bins, int jobs) {
    Dataset ds;
    ds.testcase_id = tc.id;
    const auto metrics = default_metrics();
    for (const auto& seq : tc.sequences) {
        const SequenceLabels* sl = nullptr;
        for (const auto& l : labels)
            if (l.sequence_id == seq.id) {
                sl = &l;
                break;
            }
        if (!sl) throw InvalidInput("no labels for sequence " + seq.id + "; run generate-examples first");
        CharacterizationMatrix mat = cached_characterization(out, tc.id, seq, metrics, jobs);
        if (mat.frame_count() < int(sl->examples.size()))
            throw InvalidInput("sequence " + seq.id + ": " + std::to_string(mat.frame_count()) +
                               " frames but " + std::to_string(sl->examples.size()) + " keyframes");
        std::vector<const SubTrajectoryExample*> usable;
        for (const auto& e : sl->examples)
            if (!e.skipped()) usable.push_back(&e);
        std::vector<Example> rows(usable.size());
        parallel_for(usable.size(), jobs, [&](std::size_t i) {
            const auto& e = *usable[i];
            Descriptor d = pool(mat, {kind, histogram_bins}, e.cutoff_k);
            Example ex;
            ex.descriptor = std::move(d.values);
            ex.ate = *e.ate;
            ex.sequence_id = seq.id;
            ex.cutoff_k = e.cutoff_k;
            rows[i] = std::move(ex);
        });
        if (ds.feature_names.empty() && !usable.empty())
            ds.feature_names = pool(mat, {kind, histogram_bins}, usable.front()->cutoff_k).feature_names;
        for (auto& r : rows) ds.examples.push_back(std::move(r));
    }
    return ds;
}

// ---- stage commands ----

struct StageError {
    std::string testcase_id;
    std::string message;
};

struct GenerateExamplesResult {
    std::map<std::string, std::string> written;  // testcase -> labels csv path
    std::map<std::string, int> example_counts;
    std::map<std::string, int> skipped_counts;
    std::vector<StageError> errors;
};

inline GenerateExamplesResult cmd_generate_examples(const PipelineConfig& cfg, int jobs = 1,
                                                    std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    GenerateExamplesResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    for (const auto& tc : cfg.testcases) {
        try {
            auto labels = compute_labels(tc, jobs);
            std::string csv = labels_to_csv(labels);
            std::string path = out.labels_csv(tc.id);
            atomic_write_file(path, csv);
            int n = 0, skipped = 0;
            for (const auto& sl : labels)
                for (const auto& e : sl.examples) {
                    ++n;
                    if (e.skipped()) ++skipped;
                }
            result.written[tc.id] = path;
            result.example_counts[tc.id] = n;
            result.skipped_counts[tc.id] = skipped;
            outputs[path] = fnv1a64(csv);
            for (const auto& seq : tc.sequences) {
                inputs[seq.estimate_trajectory_path] = digest_file(seq.estimate_trajectory_path);
                inputs[seq.ground_truth_path] = digest_file(seq.ground_truth_path);
            }
            detail::log_line(log, "generate-examples " + tc.id + ": " + std::to_string(n) + " examples (" +
                                      std::to_string(skipped) + " skipped)");
        } catch (const Error& e) {
            result.errors.push_back({tc.id, e.what()});
            detail::log_line(log, "generate-examples " + tc.id + " FAILED: " + e.what());
        }
    }
    update_manifest(out, config_digest(cfg), "generate-examples", inputs, outputs, timer.ms());
    return result;
}

struct CharacterizeResult {
    int matrices = 0;
    int cache_hits = 0;
    std::vector<StageError> errors;
};

inline CharacterizeResult cmd_characterize(const PipelineConfig& cfg, int jobs = 1,
                                           std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    CharacterizeResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    const auto metrics = default_metrics();
    for (const auto& tc : cfg.testcases) {
        for (const auto& seq : tc.sequences) {
            try {
                bool hit = false;
                CharacterizationMatrix mat = cached_characterization(out, tc.id, seq, metrics, jobs, &hit);
                ++result.matrices;
                if (hit) ++result.cache_hits;
                uint64_t key = sequence_content_key(seq, metrics);
                inputs[seq.frames_index_path] = digest_file(seq.frames_index_path);
                outputs[out.matrix_cache(tc.id, seq.id, key)] = fnv1a64(matrix_to_csv(mat));
            } catch (const Error& e) {
                result.errors.push_back({tc.id + "/" + seq.id, e.what()});
                detail::log_line(log, "characterize " + tc.id + "/" + seq.id + " FAILED: " + e.what());
            }
        }
    }
    detail::log_line(log, "characterize: " + std::to_string(result.matrices) + " matrices (" +
                              std::to_string(result.cache_hits) + " cached)");
    update_manifest(out, config_digest(cfg), "characterize", inputs, outputs, timer.ms());
    return result;
}

namespace detail {

inline std::string format_metric(double v, int width = 9) {
    char buf[32];
    if (std::isnan(v)) std::snprintf(buf, sizeof(buf), "%*s", width, "n/a");
    else std::snprintf(buf, sizeof(buf), "%*.4f", width, v);
    return buf;
}

inline std::string report_table(const std::vector<EvalReport>& rows, const std::string& label_header,
                                const std::vector<std::string>& labels) {
    std::string txt = label_header;
    txt += "        R2      MAPE       MAE      RMSE      n  failed\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        char line[256];
        std::snprintf(line, sizeof(line), "%-16s%s %s %s %s %6d  %s\n", labels[i].c_str(),
                      format_metric(r.r2).c_str(), format_metric(r.mape).c_str(), format_metric(r.mae).c_str(),
                      format_metric(r.rmse).c_str(), r.n, r.failed ? "yes" : "no");
        txt += line;
    }
    return txt;
}

}  // namespace detail

struct TrainCmdResult {
    std::map<std::string, EvalReport> reports;    // per testcase
    std::map<std::string, std::string> model_paths;
    std::map<std::string, BaselineReport> baselines;
    std::vector<StageError> errors;
};

/// Train one tuned forest per testcase: assemble dataset, sequential split,
/// decorrelate on the training side, randomized search, final fit, held-out
/// evaluation, and persist model + mask + reports + per-example predictions.
/// Also emits the ATE-at-fraction baseline comparison over the test-side
/// sequences at the configured train fraction.
inline TrainCmdResult cmd_train(const PipelineConfig& cfg, int jobs = 1, std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    TrainCmdResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    const std::string pool_name = pool_kind_name(cfg.pooling_kind);
    for (const auto& tc : cfg.testcases) {
        try {
            std::string labels_path = out.labels_csv(tc.id);
            auto labels = labels_from_csv(labels_path);
            inputs[labels_path] = digest_file(labels_path);

            Dataset ds = assemble_dataset(out, tc, labels, cfg.pooling_kind, cfg.histogram_bins, jobs);
            std::string ds_csv = dataset_to_csv(ds);
            std::string ds_path = out.dataset_csv(tc.id, pool_name);
            atomic_write_file(ds_path, ds_csv);
            outputs[ds_path] = fnv1a64(ds_csv);

            TrainOptions opts;
            opts.train_fraction = cfg.train_fraction;
            opts.pmcc_threshold = cfg.pmcc_threshold;
            opts.n_candidates = cfg.tuning.n_candidates;
            opts.k_folds = cfg.tuning.k_folds;
            opts.seed = derive_seed(cfg.master_seed, "train", fnv1a64(tc.id));
            opts.jobs = jobs;
            TrainOutcome outcome = train_forest_pipeline(ds, opts);
            outcome.model.meta.pooling_kind = pool_name;
            outcome.report.pooling_kind = pool_name;

            std::string model_str = model_to_json(outcome.model).dump() + "\n";
            atomic_write_file(out.model_json(tc.id, pool_name), model_str);
            outputs[out.model_json(tc.id, pool_name)] = fnv1a64(model_str);
            std::string mask_str = mask_to_json(outcome.mask).dump(2) + "\n";
            atomic_write_file(out.mask_json(tc.id, pool_name), mask_str);
            outputs[out.mask_json(tc.id, pool_name)] = fnv1a64(mask_str);

            std::string report_str = report_to_json(outcome.report).dump(2) + "\n";
            atomic_write_file(out.eval_json(tc.id, pool_name), report_str);
            outputs[out.eval_json(tc.id, pool_name)] = fnv1a64(report_str);
            atomic_write_file(out.eval_txt(tc.id, pool_name),
                              detail::report_table({outcome.report}, "testcase\n", {tc.id}));

            // per-example prediction dump (test side)
            std::string pred_csv = "sequence_id,cutoff_k,y,yhat,abs_pct_error\n";
            for (std::size_t i = 0; i < outcome.test.examples.size(); ++i) {
                const auto& e = outcome.test.examples[i];
                double yhat = outcome.yhat_test[i];
                std::string ape = e.ate != 0.0 ? format_double(std::abs((e.ate - yhat) / e.ate)) : "";
                pred_csv += e.sequence_id + "," + std::to_string(e.cutoff_k) + "," + format_double(e.ate) +
                            "," + format_double(yhat) + "," + ape + "\n";
            }
            atomic_write_file(out.predictions_csv(tc.id, pool_name), pred_csv);
            outputs[out.predictions_csv(tc.id, pool_name)] = fnv1a64(pred_csv);

            // ATE-at-fraction baseline over the test-side sequences,
            // alongside the model's own test metrics (Table layout:
            // baseline R2/MAPE vs model R2/MAPE)
            try {
                std::vector<std::string> test_seqs = outcome.test.sequence_order();
                std::vector<std::pair<std::string, std::vector<SubTrajectoryExample>>> per_seq;
                for (const auto& sl : labels)
                    if (std::find(test_seqs.begin(), test_seqs.end(), sl.sequence_id) != test_seqs.end())
                        per_seq.emplace_back(sl.sequence_id, sl.examples);
                BaselineReport baseline = ate_at_fraction_baseline(per_seq, cfg.train_fraction);

                nlohmann::ordered_json bj;
                bj["fraction"] = baseline.fraction;
                bj["baseline"] = report_to_json(baseline.metrics);
                bj["random_forest"] = report_to_json(outcome.report);
                nlohmann::ordered_json rows = nlohmann::ordered_json::array();
                for (const auto& row : baseline.rows)
                    rows.push_back({{"sequence_id", row.sequence_id},
                                    {"cutoff", row.cutoff},
                                    {"ate_at_fraction", row.yhat},
                                    {"final_ate", row.y}});
                bj["rows"] = std::move(rows);
                std::string bj_str = bj.dump(2) + "\n";
                atomic_write_file(out.baseline_json(tc.id, pool_name), bj_str);
                outputs[out.baseline_json(tc.id, pool_name)] = fnv1a64(bj_str);

                char line[256];
                std::string txt = "                      Baseline            Random forest\n";
                txt += "Mode - Dataset        R2      MAPE        R2      MAPE\n";
                std::snprintf(line, sizeof(line), "%-16s%s %s  %s %s\n", tc.id.c_str(),
                              detail::format_metric(baseline.metrics.r2).c_str(),
                              detail::format_metric(baseline.metrics.mape).c_str(),
                              detail::format_metric(outcome.report.r2).c_str(),
                              detail::format_metric(outcome.report.mape).c_str());
                txt += line;
                std::snprintf(line, sizeof(line), "%-16s%s %s  %s %s\n", "Mean",
                              detail::format_metric(baseline.metrics.r2).c_str(),
                              detail::format_metric(baseline.metrics.mape).c_str(),
                              detail::format_metric(outcome.report.r2).c_str(),
                              detail::format_metric(outcome.report.mape).c_str());
                txt += line;
                atomic_write_file(out.baseline_txt(tc.id, pool_name), txt);
                result.baselines[tc.id] = std::move(baseline);
            } catch (const Error& e) {
                detail::log_line(log, "train " + tc.id + ": baseline unavailable: " + e.what());
            }

            result.reports[tc.id] = outcome.report;
            result.model_paths[tc.id] = out.model_json(tc.id, pool_name);
            detail::log_line(log, "train " + tc.id + ": R2=" + format_double(outcome.report.r2) +
                                      " MAPE=" + format_double(outcome.report.mape) +
                                      (outcome.report.failed ? " [failed regression]" : ""));
        } catch (const Error& e) {
            result.errors.push_back({tc.id, e.what()});
            detail::log_line(log, "train " + tc.id + " FAILED: " + e.what());
        }
    }
    update_manifest(out, config_digest(cfg), "train", inputs, outputs, timer.ms());
    return result;
}

/// Streaming prediction: one output row per input row, constant memory in
/// the row count. Input is a descriptor CSV (source_id,<features...>) at the
/// model's full pre-mask width.
inline int cmd_predict(const std::string& model_path, const std::string& input_csv,
                       const std::string& output_csv) {
    std::ifstream min(model_path);
    if (!min) throw IoError("cannot open model " + model_path);
    nlohmann::json mj;
    try {
        min >> mj;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model " + model_path + ": " + e.what());
    }
    ForestModel model = model_from_json(mj);

    std::ifstream in(input_csv);
    if (!in) throw IoError("cannot open " + input_csv);
    namespace fs = std::filesystem;
    fs::path target(output_csv);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + output_csv);

    std::string line;
    bool have_header = false;
    int expected_width = int(model.feature_names.size());
    int line_no = 0, rows = 0;
    out << "source_id,prediction\n";
    std::vector<double> full, masked;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            have_header = true;
            if (int(fields.size()) - 1 != expected_width)
                throw InvalidInput(input_csv + ": header has " + std::to_string(fields.size() - 1) +
                                   " features, model expects " + std::to_string(expected_width));
            continue;
        }
        if (int(fields.size()) - 1 != expected_width)
            throw InvalidInput(input_csv + ":" + std::to_string(line_no) + ": row has " +
                               std::to_string(fields.size() - 1) + " features, model expects " +
                               std::to_string(expected_width));
        full.clear();
        for (std::size_t i = 1; i < fields.size(); ++i)
            full.push_back(parse_double(fields[i], input_csv + ":" + std::to_string(line_no)));
        masked.clear();
        for (int idx : model.mask.kept_indices) masked.push_back(full[std::size_t(idx)]);
        out << fields[0] << ',' << format_double(predict(model, masked)) << '\n';
        ++rows;
    }
    if (!have_header) throw ParseError(input_csv + ": missing header");
    out.close();
    fs::rename(tmp, target);
    return rows;
}

struct SweepCmdResult {
    std::map<std::string, SweepReport> sweeps;
    std::vector<StageError> errors;
};

inline SweepCmdResult cmd_sweep(const PipelineConfig& cfg, int jobs = 1, std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    SweepCmdResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    for (const auto& tc : cfg.testcases) {
        try {
            std::string labels_path = out.labels_csv(tc.id);
            auto labels = labels_from_csv(labels_path);
            inputs[labels_path] = digest_file(labels_path);
            Dataset ds = assemble_dataset(out, tc, labels, cfg.pooling_kind, cfg.histogram_bins, jobs);

            TrainOptions opts;
            opts.pmcc_threshold = cfg.pmcc_threshold;
            opts.n_candidates = cfg.tuning.n_candidates;
            opts.k_folds = cfg.tuning.k_folds;
            opts.seed = derive_seed(cfg.master_seed, "sweep", fnv1a64(tc.id));
            opts.jobs = jobs;
            SweepReport sweep = sweep_train_fraction(ds, default_sweep_fractions(), opts);

            nlohmann::ordered_json sj;
            sj["testcase_id"] = tc.id;
            sj["pooling_kind"] = pool_kind_name(cfg.pooling_kind);
            sj["rows"] = nlohmann::ordered_json::array();
            std::vector<std::string> row_labels;
            std::vector<EvalReport> row_reports;
            for (const auto& row : sweep.rows) {
                nlohmann::ordered_json rj;
                rj["train_fraction"] = row.train_fraction;
                rj["report"] = report_to_json(row.report);
                sj["rows"].push_back(std::move(rj));
                row_labels.push_back(format_double(row.train_fraction));
                row_reports.push_back(row.report);
            }
            std::string sj_str = sj.dump(2) + "\n";
            atomic_write_file(out.sweep_json(tc.id), sj_str);
            outputs[out.sweep_json(tc.id)] = fnv1a64(sj_str);
            atomic_write_file(out.sweep_txt(tc.id),
                              "testcase: " + tc.id + "\n" +
                                  detail::report_table(row_reports, "train_fraction\n", row_labels));
            result.sweeps[tc.id] = std::move(sweep);
            detail::log_line(log, "sweep " + tc.id + ": " + std::to_string(row_reports.size()) + " rows");
        } catch (const Error& e) {
            result.errors.push_back({tc.id, e.what()});
            detail::log_line(log, "sweep " + tc.id + " FAILED: " + e.what());
        }
    }
    update_manifest(out, config_digest(cfg), "sweep", inputs, outputs, timer.ms());
    return result;
}

struct ComparePoolingsCmdResult {
    std::map<std::string, std::vector<EvalReport>> tables;  // per testcase, 12 rows
    std::vector<StageError> errors;
};

inline ComparePoolingsCmdResult cmd_compare_poolings(const PipelineConfig& cfg, int jobs = 1,
                                                     std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    ComparePoolingsCmdResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    for (const auto& tc : cfg.testcases) {
        try {
            std::string labels_path = out.labels_csv(tc.id);
            auto labels = labels_from_csv(labels_path);
            inputs[labels_path] = digest_file(labels_path);

            std::vector<std::pair<PoolKind, Dataset>> per_kind;
            for (PoolKind kind : pool_kinds())
                per_kind.emplace_back(kind,
                                      assemble_dataset(out, tc, labels, kind, cfg.histogram_bins, jobs));

            TrainOptions opts;
            opts.train_fraction = cfg.train_fraction;
            opts.pmcc_threshold = cfg.pmcc_threshold;
            opts.n_candidates = cfg.tuning.n_candidates;
            opts.k_folds = cfg.tuning.k_folds;
            opts.seed = derive_seed(cfg.master_seed, "compare_poolings", fnv1a64(tc.id));
            opts.jobs = jobs;
            auto reports = compare_poolings(per_kind, opts);

            nlohmann::ordered_json pj;
            pj["testcase_id"] = tc.id;
            pj["rows"] = nlohmann::ordered_json::array();
            std::vector<std::string> row_labels;
            for (const auto& r : reports) {
                pj["rows"].push_back(report_to_json(r));
                row_labels.push_back(r.pooling_kind);
            }
            std::string pj_str = pj.dump(2) + "\n";
            atomic_write_file(out.poolings_json(tc.id), pj_str);
            outputs[out.poolings_json(tc.id)] = fnv1a64(pj_str);
            atomic_write_file(out.poolings_txt(tc.id),
                              "testcase: " + tc.id + "\n" +
                                  detail::report_table(reports, "pooling\n", row_labels));
            result.tables[tc.id] = std::move(reports);
            detail::log_line(log, "compare-poolings " + tc.id + ": 12 rows");
        } catch (const Error& e) {
            result.errors.push_back({tc.id, e.what()});
            detail::log_line(log, "compare-poolings " + tc.id + " FAILED: " + e.what());
        }
    }

    // cross-testcase summary: mean and median per metric for each kind
    if (!result.tables.empty()) {
        nlohmann::ordered_json summary;
        summary["kinds"] = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < pool_kinds().size(); ++k) {
            std::vector<double> r2s, mapes;
            for (const auto& [tc_id, rows] : result.tables) {
                if (k < rows.size() && !rows[k].failed) {
                    r2s.push_back(rows[k].r2);
                    mapes.push_back(rows[k].mape);
                }
            }
            auto mean_of = [](std::vector<double> v) {
                if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
                double s = 0;
                for (double x : v) s += x;
                return s / double(v.size());
            };
            auto median_of = [](std::vector<double> v) {
                if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
                std::sort(v.begin(), v.end());
                std::size_t m = v.size() / 2;
                return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
            };
            nlohmann::ordered_json kj;
            kj["pooling_kind"] = pool_kind_name(pool_kinds()[k]);
            auto put = [&](const char* key, double v) {
                if (std::isnan(v)) kj[key] = nullptr;
                else kj[key] = v;
            };
            put("mean_r2", mean_of(r2s));
            put("median_r2", median_of(r2s));
            put("mean_mape", mean_of(mapes));
            put("median_mape", median_of(mapes));
            kj["testcases"] = int(r2s.size());
            summary["kinds"].push_back(std::move(kj));
        }
        std::string s_str = summary.dump(2) + "\n";
        std::string s_path = (out.root / "reports" / "poolings.summary.json").string();
        atomic_write_file(s_path, s_str);
        outputs[s_path] = fnv1a64(s_str);
    }
    update_manifest(out, config_digest(cfg), "compare-poolings", inputs, outputs, timer.ms());
    return result;
}

struct CompareModelsCmdResult {
    std::map<std::string, std::vector<EvalReport>> tables;  // per testcase, 4 rows
    std::map<std::string, int> failure_counts;              // per family across testcases
    std::vector<StageError> errors;
};

inline CompareModelsCmdResult cmd_compare_models(const PipelineConfig& cfg, int jobs = 1,
                                                 std::ostream* log = nullptr) {
    OutputLayout out(cfg.output_dir);
    CompareModelsCmdResult result;
    detail::StageTimer timer;
    std::map<std::string, uint64_t> inputs, outputs;
    for (const std::string& fam : model_families()) result.failure_counts[fam] = 0;
    for (const auto& tc : cfg.testcases) {
        try {
            std::string labels_path = out.labels_csv(tc.id);
            auto labels = labels_from_csv(labels_path);
            inputs[labels_path] = digest_file(labels_path);
            Dataset ds = assemble_dataset(out, tc, labels, cfg.pooling_kind, cfg.histogram_bins, jobs);

            TrainOptions opts;
            opts.train_fraction = cfg.train_fraction;
            opts.pmcc_threshold = cfg.pmcc_threshold;
            opts.seed = derive_seed(cfg.master_seed, "compare_models", fnv1a64(tc.id));
            opts.jobs = jobs;
            auto reports = compare_models(ds, opts);
            for (const auto& r : reports)
                if (r.failed) result.failure_counts[r.model_family]++;

            nlohmann::ordered_json mj;
            mj["testcase_id"] = tc.id;
            mj["pooling_kind"] = pool_kind_name(cfg.pooling_kind);
            mj["rows"] = nlohmann::ordered_json::array();
            std::vector<std::string> row_labels;
            for (const auto& r : reports) {
                mj["rows"].push_back(report_to_json(r));
                row_labels.push_back(r.model_family);
            }
            std::string mj_str = mj.dump(2) + "\n";
            atomic_write_file(out.models_json(tc.id), mj_str);
            outputs[out.models_json(tc.id)] = fnv1a64(mj_str);
            atomic_write_file(out.models_txt(tc.id),
                              "testcase: " + tc.id + "\n" +
                                  detail::report_table(reports, "model\n", row_labels));
            result.tables[tc.id] = std::move(reports);
            detail::log_line(log, "compare-models " + tc.id + ": 4 rows");
        } catch (const Error& e) {
            result.errors.push_back({tc.id, e.what()});
            detail::log_line(log, "compare-models " + tc.id + " FAILED: " + e.what());
        }
    }
    update_manifest(out, config_digest(cfg), "compare-models", inputs, outputs, timer.ms());
    return result;
}

}  // namespace atep

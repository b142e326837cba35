// atep: predict SLAM absolute trajectory error from characterized raw
// sensor sequences. Subcommands cover the whole pipeline: synth,
// generate-examples, characterize, train, predict, sweep, compare-poolings,
// compare-models.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "atep/pipeline.hpp"
#include "atep/synth.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string pool_override;
    double train_fraction_override = -1.0;
    long long seed_override = -1;
    int jobs = 1;
    std::string out_override;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "Pipeline config JSON");
    if (needs_config) opt->required();
    cmd->add_option("--pool", args.pool_override, "Override pooling kind");
    cmd->add_option("--train-fraction", args.train_fraction_override, "Override train fraction");
    cmd->add_option("--seed", args.seed_override, "Override master seed");
    cmd->add_option("--jobs", args.jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", args.out_override, "Override output directory");
}

atep::PipelineConfig resolve_config(const CommonArgs& args) {
    atep::PipelineConfig cfg = atep::load_config(args.config_path);
    if (!args.pool_override.empty()) cfg.pooling_kind = atep::pool_kind_from_name(args.pool_override);
    if (args.train_fraction_override > 0) cfg.train_fraction = args.train_fraction_override;
    if (args.seed_override >= 0) cfg.master_seed = uint64_t(args.seed_override);
    if (!args.out_override.empty()) {
        cfg.output_dir = args.out_override;
    } else if (const char* root = std::getenv("ATEP_OUTPUT_ROOT"); root && *root) {
        cfg.output_dir = root;
    }
    return cfg;
}

int finish(const std::vector<atep::StageError>& errors) {
    for (const auto& e : errors) std::cerr << "error [" << e.testcase_id << "]: " << e.message << "\n";
    return errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SLAM trajectory-error prediction pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", atep::kVersion);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic trajectory+frames corpus");
    atep::SynthOptions synth_opts;
    synth->add_option("--out", synth_opts.out_dir, "Corpus directory")->required();
    synth->add_option("--sequences", synth_opts.n_sequences, "Number of sequences");
    synth->add_option("--seed", synth_opts.seed, "Generator seed");
    synth->add_option("--profile", synth_opts.profile, "mixed | ramp");
    synth->add_option("--kf-min", synth_opts.kf_min, "Min keyframes per sequence");
    synth->add_option("--kf-max", synth_opts.kf_max, "Max keyframes per sequence");
    synth->add_option("--noise", synth_opts.noise, "Label noise fraction");
    synth->add_option("--train-fraction", synth_opts.train_fraction, "Config default: train fraction");
    synth->add_option("--pool", synth_opts.pooling_kind, "Config default: pooling kind");
    synth->add_option("--candidates", synth_opts.n_candidates, "Config default: tuning candidates");
    synth->add_option("--folds", synth_opts.k_folds, "Config default: cross-validation folds");

    CommonArgs gen_args, chr_args, train_args, sweep_args, cp_args, cm_args;
    auto* gen = app.add_subcommand("generate-examples", "Compute per-prefix ATE labels");
    add_common(gen, gen_args);
    auto* chr = app.add_subcommand("characterize", "Compute and cache characterization matrices");
    add_common(chr, chr_args);
    auto* train = app.add_subcommand("train", "Tune and train a forest per testcase, evaluate held-out");
    add_common(train, train_args);
    auto* sweep = app.add_subcommand("sweep", "Evaluate across train fractions 0.1..0.9");
    add_common(sweep, sweep_args);
    auto* cp = app.add_subcommand("compare-poolings", "Evaluate all 12 pooling functions");
    add_common(cp, cp_args);
    auto* cm = app.add_subcommand("compare-models", "Compare dummy/linear/tree/forest baselines");
    add_common(cm, cm_args);

    // predict
    auto* predict = app.add_subcommand("predict", "Predict ATE for descriptor CSV rows");
    std::string model_path, input_csv, output_csv;
    predict->add_option("--model", model_path, "Model JSON")->required();
    predict->add_option("--input", input_csv, "Descriptor CSV (source_id,<features...>)")->required();
    predict->add_option("--output", output_csv, "Predictions CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            atep::SynthResult res = atep::synth_corpus(synth_opts);
            std::cout << "wrote " << res.config_path << " (" << res.sequence_ids.size() << " sequences, "
                      << res.total_examples << " prefixes, testcase " << res.testcase_id << ")\n";
            return 0;
        }
        if (*gen) {
            auto cfg = resolve_config(gen_args);
            auto res = atep::cmd_generate_examples(cfg, gen_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*chr) {
            auto cfg = resolve_config(chr_args);
            auto res = atep::cmd_characterize(cfg, chr_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*train) {
            auto cfg = resolve_config(train_args);
            auto res = atep::cmd_train(cfg, train_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*sweep) {
            auto cfg = resolve_config(sweep_args);
            auto res = atep::cmd_sweep(cfg, sweep_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*cp) {
            auto cfg = resolve_config(cp_args);
            auto res = atep::cmd_compare_poolings(cfg, cp_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*cm) {
            auto cfg = resolve_config(cm_args);
            auto res = atep::cmd_compare_models(cfg, cm_args.jobs, &std::cout);
            return finish(res.errors);
        }
        if (*predict) {
            int rows = atep::cmd_predict(model_path, input_csv, output_csv);
            std::cout << "wrote " << output_csv << " (" << rows << " predictions)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

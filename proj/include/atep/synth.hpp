#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "atep/characterization.hpp"
#include "atep/common.hpp"
#include "atep/csv.hpp"
#include "atep/io.hpp"
#include "atep/pooling.hpp"
#include "atep/rng.hpp"
#include "atep/trajectory.hpp"

namespace atep {

/// Synthetic corpus generator. Produces trajectory + frame fixtures whose
/// true prefix ATE follows a smooth nonlinear function of the mean-pooled
/// characterization features, with a controllable multiplicative noise band.
/// "mixed" sequences drift slowly around per-sequence operating points;
/// "ramp" sequences brighten linearly so the error grows superlinearly along
/// the trajectory.
struct SynthOptions {
    std::string out_dir;
    int n_sequences = 20;
    uint64_t seed = 1;
    std::string profile = "mixed";  // mixed | ramp
    int kf_min = 90;
    int kf_max = 130;
    int image_width = 32;
    int image_height = 24;
    int imu_per_frame = 5;
    double noise = 0.05;
    // defaults copied into the emitted pipeline config
    double train_fraction = 0.7;
    std::string pooling_kind = "mean";
    double pmcc_threshold = 0.95;
    int n_candidates = 60;
    int k_folds = 3;
};

namespace detail {

struct SynthProfilePoint {
    double brightness = 128;
    double contrast = 16;
    double gyro_sigma = 0.5;
    double accel_sigma = 2.0;
};

/// Smooth ATE target as a function of the mean-pooled descriptor. Quadratic
/// main effect plus a Gaussian bump in brightness, and a small contrast x
/// motion interaction; the bump keeps a linear model from catching up.
inline double synth_target_mixed(const std::vector<double>& z) {
    double u = z[0] / 255.0;
    double v = z[1] / 40.0;
    double w = z[7] / 3.0;
    double bump = std::exp(-std::pow((u - 0.55) / 0.13, 2));
    return 0.12 + 0.50 * u * u + 0.18 * bump + 0.15 * u * v * w;
}

inline double synth_target_ramp(const std::vector<double>& z) {
    double u = z[0] / 255.0;
    return 0.03 + 0.8 * u * u;
}

}  // namespace detail

struct SynthResult {
    std::string config_path;
    std::string testcase_id;
    std::vector<std::string> sequence_ids;
    int total_examples = 0;
};

inline SynthResult synth_corpus(const SynthOptions& opts) {
    namespace fs = std::filesystem;
    if (opts.profile != "mixed" && opts.profile != "ramp")
        throw InvalidInput("synth: unknown profile '" + opts.profile + "'");
    if (opts.n_sequences < 2) throw InvalidInput("synth: need at least 2 sequences");
    if (opts.kf_min < 8 || opts.kf_max < opts.kf_min) throw InvalidInput("synth: bad keyframe range");
    const bool ramp = opts.profile == "ramp";

    fs::path root(opts.out_dir);
    fs::create_directories(root / "sequences");

    SynthResult result;
    result.testcase_id = ramp ? "SYN-RAMP" : "SYN-MIXED";

    // Stratified placement of per-sequence operating points, ordered by van
    // der Corput radicals (one base per driver) so that every prefix of the
    // sequence list is low-discrepancy: sequential splits at any fraction
    // see representative coverage on both sides.
    const int n = opts.n_sequences;
    auto radical = [](int i, int base) {
        double r = 0, f = 1.0 / base;
        while (i > 0) {
            r += f * (i % base);
            i /= base;
            f /= base;
        }
        return r;
    };
    auto stratify = [&](const char* tag, double lo, double hi, int base) {
        Rng r(opts.seed, tag);
        std::vector<double> radicals(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) radicals[std::size_t(s)] = radical(s, base);
        std::vector<double> vals(static_cast<std::size_t>(n));
        for (int s = 0; s < n; ++s) {
            int rank = 0;
            for (int t = 0; t < n; ++t)
                if (radicals[std::size_t(t)] < radicals[std::size_t(s)]) ++rank;
            vals[std::size_t(s)] = lo + (hi - lo) * ((double(rank) + r.uniform()) / n);
        }
        return vals;
    };
    std::vector<double> base_b = stratify("lhs_brightness", 65, 150, 2);
    std::vector<double> base_c = stratify("lhs_contrast", 6, 34, 3);
    std::vector<double> base_g = stratify("lhs_gyro", 0.1, 1.9, 5);
    std::vector<double> base_a = stratify("lhs_accel", 0.5, 4.0, 7);

    const auto metrics = default_metrics();
    const double dt = 0.1;
    const double t0 = 1.0;

    nlohmann::ordered_json seq_entries = nlohmann::ordered_json::array();

    for (int s = 0; s < n; ++s) {
        char seq_name[16];
        std::snprintf(seq_name, sizeof(seq_name), "seq%02d", s);
        std::string seq_id = seq_name;
        result.sequence_ids.push_back(seq_id);
        fs::path seq_dir = root / "sequences" / seq_id;
        fs::create_directories(seq_dir / "frames");

        Rng traj_rng(opts.seed, "traj", uint64_t(s));
        Rng img_rng(opts.seed, "images", uint64_t(s));
        Rng imu_rng(opts.seed, "imu", uint64_t(s));
        Rng drift_rng(opts.seed, "drift", uint64_t(s));
        Rng resid_rng(opts.seed, "residuals", uint64_t(s));

        // one keyframe count for the whole corpus: sequential splits then
        // land exactly on sequence boundaries at every tenth fraction, so a
        // sweep never strands a lone sequence on one side
        const int K = int(Rng(opts.seed, "kf_count").uniform_int(opts.kf_min, opts.kf_max));
        result.total_examples += K;

        // ground-truth helix with a smooth wobble; curvature from the first
        // pose on, so short prefixes are never collinear
        double radius = traj_rng.uniform(5, 20);
        double omega = traj_rng.uniform(0.25, 0.6);
        double vz = traj_rng.uniform(0.2, 1.5);
        double phase = traj_rng.uniform(0, 2 * std::numbers::pi);
        double wob_phase = traj_rng.uniform(0, 2 * std::numbers::pi);
        std::vector<double> timestamps(static_cast<std::size_t>(K));
        std::vector<Eigen::Vector3d> gt_pos(static_cast<std::size_t>(K));
        for (int j = 0; j < K; ++j) {
            double t = t0 + dt * j;
            timestamps[std::size_t(j)] = t;
            double a = omega * t + phase;
            gt_pos[std::size_t(j)] = {radius * std::cos(a) + 0.3 * std::sin(1.7 * a + wob_phase),
                                      radius * std::sin(a) + 0.3 * std::cos(2.3 * a + wob_phase),
                                      vz * t + 0.3 * std::sin(0.9 * a + wob_phase)};
        }

        // per-frame sensor operating points: a rising brightness trend makes
        // the prefix means of each sequence sweep a segment of the feature
        // axis, so sequences cover the space as overlapping paths rather
        // than isolated clusters
        double trend_b = drift_rng.uniform(40, 80);
        double cyc_b = drift_rng.uniform(0.5, 1.5), ph_b = drift_rng.uniform(0, 2 * std::numbers::pi);
        double cyc_c = drift_rng.uniform(0.5, 1.5), ph_c = drift_rng.uniform(0, 2 * std::numbers::pi);
        double cyc_g = drift_rng.uniform(0.5, 1.5), ph_g = drift_rng.uniform(0, 2 * std::numbers::pi);
        std::vector<detail::SynthProfilePoint> profile(static_cast<std::size_t>(K));
        for (int j = 0; j < K; ++j) {
            double ph = double(j) / double(K);
            double along = K > 1 ? double(j) / double(K - 1) : 0.0;
            detail::SynthProfilePoint p;
            if (ramp) {
                p.brightness = 70.0 + 120.0 * along;
                p.contrast = base_c[std::size_t(s)];
                p.gyro_sigma = base_g[std::size_t(s)];
            } else {
                p.brightness = std::clamp(
                    base_b[std::size_t(s)] + trend_b * along +
                        6.0 * std::sin(2 * std::numbers::pi * ph * cyc_b + ph_b),
                    45.0, 232.0);
                p.contrast = std::clamp(
                    base_c[std::size_t(s)] + 3.0 * std::sin(2 * std::numbers::pi * ph * cyc_c + ph_c), 4.0,
                    40.0);
                p.gyro_sigma = std::clamp(
                    base_g[std::size_t(s)] *
                        (1.0 + 0.10 * std::sin(2 * std::numbers::pi * ph * cyc_g + ph_g)),
                    0.05, 2.4);
            }
            p.accel_sigma = base_a[std::size_t(s)];
            profile[std::size_t(j)] = p;
        }

        // frames: clipped-normal pixel noise around (brightness, contrast)
        std::vector<Frame> frames(static_cast<std::size_t>(K));
        std::string index_csv = "timestamp,image_path\n";
        for (int j = 0; j < K; ++j) {
            Image img;
            img.width = opts.image_width;
            img.height = opts.image_height;
            img.pixels.resize(std::size_t(img.width) * img.height);
            const auto& p = profile[std::size_t(j)];
            for (auto& px : img.pixels) {
                double v = std::round(img_rng.normal(p.brightness, p.contrast));
                px = uint8_t(std::clamp(v, 0.0, 255.0));
            }
            char img_name[24];
            std::snprintf(img_name, sizeof(img_name), "f%04d.pgm", j);
            write_pgm((seq_dir / "frames" / img_name).string(), img);
            index_csv += format_double(timestamps[std::size_t(j)]) + ",frames/" + img_name + "\n";

            Frame f;
            f.timestamp = timestamps[std::size_t(j)];
            f.pixels = std::move(img);
            frames[std::size_t(j)] = std::move(f);
        }
        atomic_write_file((seq_dir / "index.csv").string(), index_csv);

        // IMU samples inside each frame window (t_{j-1}, t_j]
        std::string imu_csv = "timestamp,gx,gy,gz,ax,ay,az\n";
        for (int j = 0; j < K; ++j) {
            const auto& p = profile[std::size_t(j)];
            double wstart = timestamps[std::size_t(j)] - dt;
            for (int i = 0; i < opts.imu_per_frame; ++i) {
                ImuSample m;
                m.timestamp = wstart + dt * double(i + 1) / opts.imu_per_frame;
                m.gyro = {imu_rng.normal(0, p.gyro_sigma), imu_rng.normal(0, p.gyro_sigma),
                          imu_rng.normal(0, p.gyro_sigma)};
                m.accel = {imu_rng.normal(0, p.accel_sigma), imu_rng.normal(0, p.accel_sigma),
                           imu_rng.normal(0, p.accel_sigma)};
                frames[std::size_t(j)].imu_window.push_back(m);
                imu_csv += format_double(m.timestamp);
                for (double v : {m.gyro.x(), m.gyro.y(), m.gyro.z(), m.accel.x(), m.accel.y(), m.accel.z()})
                    imu_csv += "," + format_double(v);
                imu_csv += "\n";
            }
        }
        atomic_write_file((seq_dir / "imu.csv").string(), imu_csv);

        // target prefix ATE from the realized mean-pooled features, with a
        // smooth noise band. Integer sinusoid cycles keep the noise close to
        // zero-mean over each sequence, so no sequence carries a systematic
        // label offset.
        CharacterizationMatrix mat = characterize_sequence(frames, metrics, seq_id);
        double nc1 = double(drift_rng.uniform_int(1, 2)), nf1 = drift_rng.uniform(0, 2 * std::numbers::pi);
        double nc2 = double(drift_rng.uniform_int(3, 5)), nf2 = drift_rng.uniform(0, 2 * std::numbers::pi);
        std::vector<double> rho(static_cast<std::size_t>(K));
        for (int k = 1; k <= K; ++k) {
            Descriptor d = pool(mat, {PoolKind::mean, 10}, k);
            double target = ramp ? detail::synth_target_ramp(d.values) : detail::synth_target_mixed(d.values);
            double ph = double(k) / double(K);
            double eps = opts.noise *
                         (0.8 * std::sin(2 * std::numbers::pi * ph * nc1 + nf1) +
                          0.6 * std::sin(2 * std::numbers::pi * ph * nc2 + nf2)) /
                         1.4;
            rho[std::size_t(k - 1)] = std::max(target * (1.0 + eps), 1e-4);
        }

        // forward-calibrated residuals: pick each perturbation magnitude by
        // bisection so the aligned prefix ATE lands on rho_k exactly. When a
        // target drops faster than a prefix RMSE can (earlier residuals are
        // already in place), the magnitude clamps at zero and the realized
        // value re-converges on later prefixes.
        std::vector<Eigen::Vector3d> est_pos(static_cast<std::size_t>(K));
        std::vector<Eigen::Vector3d> dirs(static_cast<std::size_t>(K));
        for (int j = 0; j < K; ++j) {
            Eigen::Vector3d dir(resid_rng.normal(), resid_rng.normal(), resid_rng.normal());
            double nrm = dir.norm();
            dirs[std::size_t(j)] = nrm > 1e-12 ? Eigen::Vector3d(dir / nrm) : Eigen::Vector3d(1, 0, 0);
        }
        est_pos[0] = gt_pos[0] + (rho[2] / 3.0) * dirs[0];
        est_pos[1] = gt_pos[1] + (rho[2] * 2.0 / 3.0) * dirs[1];
        auto prefix_ate = [&](int k, double magnitude) {
            est_pos[std::size_t(k - 1)] = gt_pos[std::size_t(k - 1)] + magnitude * dirs[std::size_t(k - 1)];
            std::vector<Eigen::Vector3d> est(est_pos.begin(), est_pos.begin() + k);
            std::vector<Eigen::Vector3d> gt(gt_pos.begin(), gt_pos.begin() + k);
            AlignmentResult a = align(est, gt, AlignMode::SE3);
            double sse = 0;
            for (int i = 0; i < k; ++i) sse += (gt[std::size_t(i)] - a.apply(est[std::size_t(i)])).squaredNorm();
            return std::sqrt(sse / k);
        };
        for (int k = 3; k <= K; ++k) {
            double want = rho[std::size_t(k - 1)];
            // very short prefixes absorb most of a perturbation into the
            // alignment; capping the magnitude there trades a transient
            // undershoot for not poisoning the next prefixes
            double cap = k <= 12 ? 2.0 * want : 4.0 * want * std::sqrt(double(k));
            if (prefix_ate(k, 0.0) >= want) {
                prefix_ate(k, 0.0);  // leave the magnitude clamped at zero
                continue;
            }
            if (prefix_ate(k, cap) <= want) continue;  // undershoot at the cap
            double lo = 0.0, hi = cap;
            for (int it = 0; it < 40; ++it) {
                double mid = 0.5 * (lo + hi);
                if (prefix_ate(k, mid) < want) lo = mid;
                else hi = mid;
            }
            prefix_ate(k, hi);
        }

        std::string gt_txt = "# timestamp tx ty tz qx qy qz qw\n";
        std::string est_txt = "# timestamp tx ty tz qx qy qz qw\n";
        for (int j = 0; j < K; ++j) {
            double heading = std::atan2(gt_pos[std::size_t(j)].y(), gt_pos[std::size_t(j)].x());
            double half = 0.5 * heading;
            std::string q = format_double(0.0) + " " + format_double(0.0) + " " +
                            format_double(std::sin(half)) + " " + format_double(std::cos(half));
            const Eigen::Vector3d& g = gt_pos[std::size_t(j)];
            const Eigen::Vector3d& e = est_pos[std::size_t(j)];
            gt_txt += format_double(timestamps[std::size_t(j)]) + " " + format_double(g.x()) + " " +
                      format_double(g.y()) + " " + format_double(g.z()) + " " + q + "\n";
            est_txt += format_double(timestamps[std::size_t(j)]) + " " + format_double(e.x()) + " " +
                       format_double(e.y()) + " " + format_double(e.z()) + " " + q + "\n";
        }
        atomic_write_file((seq_dir / "ground_truth.txt").string(), gt_txt);
        atomic_write_file((seq_dir / "estimate.txt").string(), est_txt);

        nlohmann::ordered_json entry;
        entry["id"] = seq_id;
        entry["estimate_trajectory_path"] = "sequences/" + seq_id + "/estimate.txt";
        entry["ground_truth_path"] = "sequences/" + seq_id + "/ground_truth.txt";
        entry["frames_index_path"] = "sequences/" + seq_id + "/index.csv";
        entry["imu_path"] = "sequences/" + seq_id + "/imu.csv";
        seq_entries.push_back(std::move(entry));
    }

    nlohmann::ordered_json cfg;
    cfg["testcases"] = nlohmann::ordered_json::array();
    nlohmann::ordered_json tc;
    tc["id"] = result.testcase_id;
    tc["alignment_mode"] = "se3";
    tc["max_time_offset"] = 0.02;
    tc["sequences"] = std::move(seq_entries);
    cfg["testcases"].push_back(std::move(tc));
    cfg["pooling_kind"] = opts.pooling_kind;
    cfg["train_fraction"] = opts.train_fraction;
    cfg["pmcc_threshold"] = opts.pmcc_threshold;
    cfg["tuning"] = {{"n_candidates", opts.n_candidates}, {"k_folds", opts.k_folds}};
    cfg["master_seed"] = opts.seed;
    cfg["output_dir"] = "out";

    fs::path cfg_path = root / "config.json";
    atomic_write_file(cfg_path.string(), cfg.dump(2) + "\n");
    result.config_path = cfg_path.string();
    return result;
}

}  // namespace atep

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "atep/common.hpp"
#include "atep/parallel.hpp"

namespace atep {

struct AssociationError : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct DegenerateGeometry : Error {
    using Error::Error;
};

/// One timestamped pose. Quaternion is stored normalized, (w,x,y,z) internally.
struct Pose {
    double timestamp = 0.0;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

    Pose() = default;
    Pose(double t, const Eigen::Vector3d& trans, const Eigen::Quaterniond& rot)
        : timestamp(t), translation(trans), rotation(rot) {
        if (!std::isfinite(t)) throw InvalidInput("pose timestamp not finite");
        if (!translation.allFinite()) throw InvalidInput("pose translation not finite");
        double n = rotation.norm();
        if (!std::isfinite(n) || n < 1e-12) throw InvalidInput("pose quaternion cannot be normalized");
        rotation.normalize();
    }
};

struct Trajectory {
    std::vector<Pose> poses;
    std::string frame_id;  // "estimate" or "ground_truth"
};

/// Monotone timestamp matching between two trajectories.
struct Association {
    std::vector<std::pair<int, int>> pairs;  // (estimate index, ground-truth index)
    double max_time_offset = 0.0;
};

enum class AlignMode { SE3, Sim3 };

inline const char* align_mode_name(AlignMode m) { return m == AlignMode::SE3 ? "se3" : "sim3"; }

inline AlignMode align_mode_from_name(const std::string& s) {
    if (s == "se3" || s == "SE3") return AlignMode::SE3;
    if (s == "sim3" || s == "Sim3") return AlignMode::Sim3;
    throw InvalidInput("unknown alignment mode '" + s + "' (expected se3 or sim3)");
}

struct AlignmentResult {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double scale = 1.0;
    AlignMode mode = AlignMode::SE3;

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return scale * (rotation * p) + translation; }
};

/// One training example extracted from the prefix [1, cutoff_k] of a sequence.
/// Prefixes too short to align carry no ATE and are flagged skipped.
struct SubTrajectoryExample {
    std::string sequence_id;
    int cutoff_k = 0;
    std::optional<double> ate;           // meters; empty iff skipped
    std::pair<int, int> frame_range{1, 0};  // inclusive, 1-based

    bool skipped() const { return !ate.has_value(); }
};

namespace detail {
inline bool parse_tum_line(const std::string& line, double out[8]) {
    const char* p = line.c_str();
    char* end = nullptr;
    for (int i = 0; i < 8; ++i) {
        out[i] = std::strtod(p, &end);
        if (end == p) return false;
        p = end;
    }
    while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
    return *p == '\0';
}
}  // namespace detail

/// Load a TUM-format trajectory: one pose per line,
/// "timestamp tx ty tz qx qy qz qw", '#' comment lines skipped.
/// Poses are sorted by timestamp; quaternions normalized on construction.
inline Trajectory load_trajectory(const std::string& path, const std::string& frame_id = "estimate") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trajectory file " + path);
    Trajectory traj;
    traj.frame_id = frame_id;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        double v[8];
        if (!detail::parse_tum_line(line, v))
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected 8 fields 'timestamp tx ty tz qx qy qz qw'");
        if (!std::isfinite(v[0]) || v[0] < 0.0)
            throw ParseError(path + ":" + std::to_string(line_no) + ": bad timestamp");
        // file order is (qx qy qz qw); internal storage is (w,x,y,z)
        Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
        if (q.norm() < 1e-12)
            throw ParseError(path + ":" + std::to_string(line_no) + ": zero quaternion");
        traj.poses.emplace_back(v[0], Eigen::Vector3d(v[1], v[2], v[3]), q);
    }
    if (traj.poses.empty()) throw InvalidInput("empty trajectory: " + path);
    std::stable_sort(traj.poses.begin(), traj.poses.end(),
                     [](const Pose& a, const Pose& b) { return a.timestamp < b.timestamp; });
    for (std::size_t i = 1; i < traj.poses.size(); ++i)
        if (!(traj.poses[i - 1].timestamp < traj.poses[i].timestamp))
            throw ParseError(path + ": duplicate timestamp " + std::to_string(traj.poses[i].timestamp));
    return traj;
}

/// Greedy nearest-timestamp monotone matching. Each pose is used at most
/// once and matched indices strictly increase on both sides.
inline Association associate(const Trajectory& estimate, const Trajectory& ground_truth,
                             double max_time_offset = 0.02) {
    if (estimate.poses.empty() || ground_truth.poses.empty())
        throw InvalidInput("associate: empty trajectory");
    if (!(max_time_offset >= 0.0)) throw InvalidInput("associate: negative max_time_offset");
    Association assoc;
    assoc.max_time_offset = max_time_offset;
    int j0 = 0;
    const auto& gt = ground_truth.poses;
    for (int i = 0; i < int(estimate.poses.size()); ++i) {
        double t = estimate.poses[i].timestamp;
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = j0; j < int(gt.size()); ++j) {
            double d = std::abs(gt[j].timestamp - t);
            if (d < best_d) {
                best_d = d;
                best = j;
            } else if (gt[j].timestamp > t) {
                break;  // sorted: distances only grow from here
            }
        }
        if (best >= 0 && best_d <= max_time_offset) {
            assoc.pairs.emplace_back(i, best);
            j0 = best + 1;
        }
    }
    if (assoc.pairs.empty())
        throw AssociationError("no timestamp pairs within max_time_offset=" +
                               std::to_string(max_time_offset));
    return assoc;
}

/// Closed-form least-squares alignment (Umeyama): finds (R, t, s) minimizing
/// sum ||truth_i - (s*R*est_i + t)||^2 over the paired points. SE3 forces s=1.
inline AlignmentResult align(const std::vector<Eigen::Vector3d>& estimate_points,
                             const std::vector<Eigen::Vector3d>& truth_points, AlignMode mode) {
    if (estimate_points.size() != truth_points.size())
        throw InvalidInput("align: point count mismatch");
    const int n = int(estimate_points.size());
    if (n < 3) throw InsufficientData("align: need at least 3 point pairs, got " + std::to_string(n));

    Eigen::Vector3d mu_e = Eigen::Vector3d::Zero(), mu_t = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        mu_e += estimate_points[i];
        mu_t += truth_points[i];
    }
    mu_e /= n;
    mu_t /= n;

    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    double var_e = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d de = estimate_points[i] - mu_e;
        Eigen::Vector3d dt = truth_points[i] - mu_t;
        sigma += dt * de.transpose();
        var_e += de.squaredNorm();
    }
    sigma /= n;
    var_e /= n;
    if (var_e < 1e-18) throw DegenerateGeometry("align: estimate points all coincident");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Vector3d d = svd.singularValues();
    if (d(0) < 1e-15 || d(1) <= 1e-9 * d(0))
        throw DegenerateGeometry("align: rank-deficient point configuration");

    Eigen::Matrix3d s_fix = Eigen::Matrix3d::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s_fix(2, 2) = -1.0;

    AlignmentResult result;
    result.mode = mode;
    result.rotation = svd.matrixU() * s_fix * svd.matrixV().transpose();
    result.scale = (mode == AlignMode::Sim3) ? (d.dot(s_fix.diagonal()) / var_e) : 1.0;
    if (mode == AlignMode::Sim3 && !(result.scale > 0.0))
        throw DegenerateGeometry("align: non-positive similarity scale");
    result.translation = mu_t - result.scale * (result.rotation * mu_e);
    return result;
}

/// ATE: RMSE of translational residuals over associated pairs after global
/// least-squares alignment of the estimate onto the ground truth.
inline double compute_ate(const Trajectory& estimate, const Trajectory& ground_truth, AlignMode mode,
                          double max_time_offset = 0.02) {
    Association assoc = associate(estimate, ground_truth, max_time_offset);
    std::vector<Eigen::Vector3d> est_pts, gt_pts;
    est_pts.reserve(assoc.pairs.size());
    gt_pts.reserve(assoc.pairs.size());
    for (auto [ei, gi] : assoc.pairs) {
        est_pts.push_back(estimate.poses[std::size_t(ei)].translation);
        gt_pts.push_back(ground_truth.poses[std::size_t(gi)].translation);
    }
    AlignmentResult a = align(est_pts, gt_pts, mode);
    double sse = 0.0;
    for (std::size_t i = 0; i < est_pts.size(); ++i)
        sse += (gt_pts[i] - a.apply(est_pts[i])).squaredNorm();
    return std::sqrt(sse / double(est_pts.size()));
}

/// Extract one example per keyframe prefix [1, k], k = 1..K, labeling each
/// with the ATE of that prefix. Prefixes that cannot be aligned (fewer than 3
/// poses or matched pairs, degenerate geometry) are emitted skipped so the
/// example count is always exactly K.
inline std::vector<SubTrajectoryExample> generate_subtrajectory_examples(
    const Trajectory& estimate, const Trajectory& ground_truth, AlignMode mode,
    double max_time_offset = 0.02, const std::string& sequence_id = "", int jobs = 1) {
    if (estimate.poses.empty()) throw InvalidInput("generate_subtrajectory_examples: empty estimate");
    const int K = int(estimate.poses.size());
    std::vector<SubTrajectoryExample> out(static_cast<std::size_t>(K));
    parallel_for(std::size_t(K), jobs, [&](std::size_t idx) {
        int k = int(idx) + 1;
        SubTrajectoryExample ex;
        ex.sequence_id = sequence_id;
        ex.cutoff_k = k;
        ex.frame_range = {1, k};
        if (k >= 3) {
            Trajectory prefix;
            prefix.frame_id = estimate.frame_id;
            prefix.poses.assign(estimate.poses.begin(), estimate.poses.begin() + k);
            try {
                ex.ate = compute_ate(prefix, ground_truth, mode, max_time_offset);
            } catch (const AssociationError&) {
            } catch (const InsufficientData&) {
            } catch (const DegenerateGeometry&) {
            }
        }
        out[idx] = std::move(ex);
    });
    return out;
}

}  // namespace atep

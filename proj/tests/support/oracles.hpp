#pragma once

// Test-side reference implementations, written independently of the library
// code paths they check: naive statistics for pooling, a derivative-free
// numerical optimizer for trajectory alignment, exhaustive enumeration for
// tree splits and timestamp matchings.

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "atep/features.hpp"
#include "atep/rng.hpp"
#include "atep/trajectory.hpp"

namespace oracle {

// ---- naive pooling references ----

inline double naive_mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double naive_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

inline double naive_min(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }
inline double naive_max(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

inline double naive_central_moment(const std::vector<double>& v, int order) {
    double m = naive_mean(v);
    double s = 0;
    for (double x : v) s += std::pow(x - m, order);
    return s / double(v.size());
}

inline double naive_std(const std::vector<double>& v) {
    double m2 = naive_central_moment(v, 2);
    return m2 > 0 ? std::sqrt(m2) : 0.0;
}

inline double naive_skewness(const std::vector<double>& v) {
    double m2 = naive_central_moment(v, 2);
    if (m2 <= 0) return 0.0;
    return naive_central_moment(v, 3) / std::pow(m2, 1.5);
}

inline double naive_kurtosis(const std::vector<double>& v) {
    double m2 = naive_central_moment(v, 2);
    if (m2 <= 0) return 0.0;
    return naive_central_moment(v, 4) / (m2 * m2) - 3.0;
}

inline std::vector<double> naive_histogram(const std::vector<double>& v, int bins) {
    double lo = naive_min(v), hi = naive_max(v);
    std::vector<double> p(std::size_t(bins), 0.0);
    if (hi <= lo) {
        p[0] = 1.0;
        return p;
    }
    double width = (hi - lo) / bins;
    for (double x : v) {
        int b = int(std::floor((x - lo) / width));
        b = std::clamp(b, 0, bins - 1);
        p[std::size_t(b)] += 1.0 / double(v.size());
    }
    return p;
}

inline double naive_shannon_entropy(const std::vector<double>& v, int bins) {
    double h = 0;
    for (double q : naive_histogram(v, bins))
        if (q > 0) h -= q * std::log2(q);
    return h;
}

inline double naive_simpson(const std::vector<double>& v, int bins) {
    double lambda = 0;
    for (double q : naive_histogram(v, bins)) lambda += q * q;
    return lambda;
}

// ---- numerical alignment optimizer (Nelder-Mead over axis-angle + t + log s) ----

inline double alignment_cost(const std::vector<Eigen::Vector3d>& est, const std::vector<Eigen::Vector3d>& gt,
                             const Eigen::VectorXd& params, bool with_scale) {
    Eigen::Vector3d aa = params.segment<3>(0);
    Eigen::Vector3d t = params.segment<3>(3);
    double s = with_scale ? std::exp(params(6)) : 1.0;
    double angle = aa.norm();
    Eigen::Matrix3d R = angle < 1e-14
                            ? Eigen::Matrix3d::Identity()
                            : Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
    double cost = 0;
    for (std::size_t i = 0; i < est.size(); ++i) cost += (gt[i] - (s * (R * est[i]) + t)).squaredNorm();
    return cost;
}

/// Standard Nelder-Mead simplex; good enough to certify small alignment
/// instances against the closed-form result.
inline double nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x0,
                          double step, int max_iter, Eigen::VectorXd* argmin = nullptr) {
    const int n = int(x0.size());
    std::vector<Eigen::VectorXd> pts(std::size_t(n + 1), x0);
    for (int i = 0; i < n; ++i) pts[std::size_t(i + 1)](i) += step;
    std::vector<double> vals(std::size_t(n + 1));
    for (int i = 0; i <= n; ++i) vals[std::size_t(i)] = f(pts[std::size_t(i)]);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<int> order(std::size_t(n + 1));
        for (int i = 0; i <= n; ++i) order[std::size_t(i)] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[std::size_t(a)] < vals[std::size_t(b)]; });
        int best = order.front(), worst = order.back(), second_worst = order[std::size_t(n - 1)];
        if (std::abs(vals[std::size_t(worst)] - vals[std::size_t(best)]) <
            1e-15 * (1.0 + std::abs(vals[std::size_t(best)])))
            break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i <= n; ++i)
            if (i != worst) centroid += pts[std::size_t(i)];
        centroid /= double(n);

        Eigen::VectorXd refl = centroid + (centroid - pts[std::size_t(worst)]);
        double f_refl = f(refl);
        if (f_refl < vals[std::size_t(best)]) {
            Eigen::VectorXd exp_pt = centroid + 2.0 * (centroid - pts[std::size_t(worst)]);
            double f_exp = f(exp_pt);
            if (f_exp < f_refl) {
                pts[std::size_t(worst)] = exp_pt;
                vals[std::size_t(worst)] = f_exp;
            } else {
                pts[std::size_t(worst)] = refl;
                vals[std::size_t(worst)] = f_refl;
            }
        } else if (f_refl < vals[std::size_t(second_worst)]) {
            pts[std::size_t(worst)] = refl;
            vals[std::size_t(worst)] = f_refl;
        } else {
            Eigen::VectorXd contr = centroid + 0.5 * (pts[std::size_t(worst)] - centroid);
            double f_contr = f(contr);
            if (f_contr < vals[std::size_t(worst)]) {
                pts[std::size_t(worst)] = contr;
                vals[std::size_t(worst)] = f_contr;
            } else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    pts[std::size_t(i)] = pts[std::size_t(best)] + 0.5 * (pts[std::size_t(i)] - pts[std::size_t(best)]);
                    vals[std::size_t(i)] = f(pts[std::size_t(i)]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (vals[std::size_t(i)] < vals[std::size_t(best)]) best = i;
    if (argmin) *argmin = pts[std::size_t(best)];
    return vals[std::size_t(best)];
}

/// Numerically optimized alignment RMSE: multi-start Nelder-Mead over the
/// transform parameters, independent of the closed-form solver.
inline double numeric_alignment_rmse(const std::vector<Eigen::Vector3d>& est,
                                     const std::vector<Eigen::Vector3d>& gt, bool with_scale,
                                     uint64_t seed = 7) {
    const int dim = with_scale ? 7 : 6;
    auto f = [&](const Eigen::VectorXd& p) { return alignment_cost(est, gt, p, with_scale); };
    atep::Rng rng(seed, "nm_starts");
    double best = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dim);
        if (attempt > 0)
            for (int i = 0; i < dim; ++i) x0(i) = rng.uniform(-1.5, 1.5);
        best = std::min(best, nelder_mead(f, x0, 0.25, 4000));
    }
    return std::sqrt(best / double(est.size()));
}

// ---- exhaustive CART split enumeration ----

struct ExhaustiveSplit {
    bool valid = false;
    int feature = -1;
    double threshold = 0.0;
    double objective = std::numeric_limits<double>::infinity();
};

inline double naive_sse(const std::vector<double>& y) {
    double m = naive_mean(y);
    double s = 0;
    for (double v : y) s += (v - m) * (v - m);
    return s;
}

/// Enumerate every (feature, midpoint-threshold) candidate and minimize the
/// summed child SSE, with the documented tie rule: candidates scanned in
/// ascending (feature, threshold) order, a later candidate wins only when
/// strictly better beyond the relative epsilon.
inline ExhaustiveSplit exhaustive_best_split(const std::vector<std::vector<double>>& X,
                                             const std::vector<double>& y, int min_samples_leaf) {
    auto near_equal = [](double a, double b) {
        if (!std::isfinite(a) || !std::isfinite(b)) return false;
        return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    };
    ExhaustiveSplit best;
    const int n = int(y.size());
    const int d = n ? int(X[0].size()) : 0;
    for (int f = 0; f < d; ++f) {
        std::vector<double> values;
        for (int i = 0; i < n; ++i) values.push_back(X[std::size_t(i)][std::size_t(f)]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            double threshold = 0.5 * (values[v] + values[v + 1]);
            if (threshold >= values[v + 1]) threshold = values[v];
            std::vector<double> ly, ry;
            for (int i = 0; i < n; ++i)
                (X[std::size_t(i)][std::size_t(f)] <= threshold ? ly : ry).push_back(y[std::size_t(i)]);
            if (int(ly.size()) < min_samples_leaf || int(ry.size()) < min_samples_leaf) continue;
            double obj = naive_sse(ly) + naive_sse(ry);
            if (obj < best.objective && !near_equal(obj, best.objective)) {
                best.valid = true;
                best.feature = f;
                best.threshold = threshold;
                best.objective = obj;
            }
        }
    }
    return best;
}

// ---- monotone matching enumeration ----

/// All monotone matchings between two timestamp lists within the offset;
/// returns the matching with the most pairs, tie-broken by minimal total
/// absolute offset.
inline std::vector<std::pair<int, int>> best_monotone_matching(const std::vector<double>& a,
                                                               const std::vector<double>& b,
                                                               double max_offset) {
    std::vector<std::pair<int, int>> best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> current;
    std::function<void(int, int, double)> rec = [&](int i, int j, double cost) {
        if (current.size() > best.size() ||
            (current.size() == best.size() && cost < best_cost)) {
            best = current;
            best_cost = cost;
        }
        if (i >= int(a.size()) || j >= int(b.size())) return;
        rec(i + 1, j, cost);  // skip a[i]
        for (int jj = j; jj < int(b.size()); ++jj) {
            double d = std::abs(a[std::size_t(i)] - b[std::size_t(jj)]);
            if (d <= max_offset) {
                current.emplace_back(i, jj);
                rec(i + 1, jj + 1, cost + d);
                current.pop_back();
            }
        }
    };
    rec(0, 0, 0.0);
    return best;
}

// ---- random fixtures ----

inline atep::Trajectory random_trajectory(atep::Rng& rng, int n, double t0 = 0.0) {
    atep::Trajectory traj;
    traj.frame_id = "estimate";
    Eigen::Vector3d p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    for (int i = 0; i < n; ++i) {
        p += Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5));
        Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (q.norm() < 1e-9) q = Eigen::Quaterniond::Identity();
        traj.poses.emplace_back(t0 + 0.1 * i, p, q.normalized());
    }
    return traj;
}

struct RigidTransform {
    Eigen::Matrix3d R;
    Eigen::Vector3d t;
};

inline RigidTransform random_rigid(atep::Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    while (q.norm() < 1e-6) q = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return {q.toRotationMatrix(), Eigen::Vector3d(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10))};
}

inline atep::Trajectory apply_rigid(const atep::Trajectory& traj, const RigidTransform& g) {
    atep::Trajectory out;
    out.frame_id = traj.frame_id;
    for (const auto& pose : traj.poses)
        out.poses.emplace_back(pose.timestamp, Eigen::Vector3d(g.R * pose.translation + g.t),
                               Eigen::Quaterniond(g.R) * pose.rotation);
    return out;
}

/// Dataset helper for regression tests.
inline atep::Dataset make_dataset(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                                  const std::vector<std::string>& sequence_ids = {}) {
    atep::Dataset ds;
    ds.testcase_id = "test";
    const int d = X.empty() ? 0 : int(X[0].size());
    for (int j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < X.size(); ++i) {
        atep::Example e;
        e.descriptor = X[i];
        e.ate = y[i];
        e.sequence_id = sequence_ids.empty() ? "s" + std::to_string(i / 4) : sequence_ids[i];
        e.cutoff_k = int(i) + 1;
        ds.examples.push_back(std::move(e));
    }
    return ds;
}

}  // namespace oracle

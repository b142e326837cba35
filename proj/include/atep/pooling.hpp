#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "atep/characterization.hpp"
#include "atep/common.hpp"

namespace atep {

// 1-D global pooling: reduce each row of a characterization matrix to one
// scalar. Eleven single functions (five moments/order statistics, two shape
// moments, four diversity indices over a row histogram) plus the
// concatenation of all eleven.
enum class PoolKind {
    mean,
    median,
    min,
    max,
    std_dev,
    skewness,
    kurtosis,
    shannon_entropy,
    simpson,
    gini_simpson,
    inverse_simpson,
    concat_all,
};

inline const std::vector<PoolKind>& pool_kinds() {
    static const std::vector<PoolKind> kinds = {
        PoolKind::mean,           PoolKind::median,       PoolKind::min,
        PoolKind::max,            PoolKind::std_dev,      PoolKind::skewness,
        PoolKind::kurtosis,       PoolKind::shannon_entropy, PoolKind::simpson,
        PoolKind::gini_simpson,   PoolKind::inverse_simpson, PoolKind::concat_all};
    return kinds;
}

/// The eleven single-valued kinds, in the order concat_all applies them.
inline std::vector<PoolKind> single_pool_kinds() {
    auto kinds = pool_kinds();
    kinds.pop_back();
    return kinds;
}

inline const char* pool_kind_name(PoolKind k) {
    switch (k) {
        case PoolKind::mean: return "mean";
        case PoolKind::median: return "median";
        case PoolKind::min: return "min";
        case PoolKind::max: return "max";
        case PoolKind::std_dev: return "std";
        case PoolKind::skewness: return "skewness";
        case PoolKind::kurtosis: return "kurtosis";
        case PoolKind::shannon_entropy: return "shannon_entropy";
        case PoolKind::simpson: return "simpson";
        case PoolKind::gini_simpson: return "gini_simpson";
        case PoolKind::inverse_simpson: return "inverse_simpson";
        case PoolKind::concat_all: return "concat_all";
    }
    return "?";
}

inline PoolKind pool_kind_from_name(const std::string& name) {
    for (PoolKind k : pool_kinds())
        if (name == pool_kind_name(k)) return k;
    throw InvalidInput("unknown pooling kind '" + name + "'");
}

struct PoolingFunction {
    PoolKind kind = PoolKind::mean;
    int histogram_bins = 10;  // diversity kinds only
};

namespace detail {

/// Equal-width histogram over [min, max] as bin probabilities. A constant
/// row concentrates in one bin by convention.
inline std::vector<double> row_histogram(std::span<const double> row, int bins) {
    std::vector<double> p(std::size_t(bins), 0.0);
    auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi <= lo) {
        p[0] = 1.0;
        return p;
    }
    for (double v : row) {
        int b = int((v - lo) / (hi - lo) * bins);
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        p[std::size_t(b)] += 1.0;
    }
    for (double& q : p) q /= double(row.size());
    return p;
}

}  // namespace detail

/// Reduce one row to a scalar with a single (non-concat) pooling kind.
/// Zero-variance rows define skewness/kurtosis as 0, entropy 0, simpson 1.
inline double pool_row(std::span<const double> row, PoolKind kind, int histogram_bins = 10) {
    if (row.empty()) throw InvalidInput("pool_row: empty row");
    if (kind == PoolKind::concat_all) throw InvalidInput("pool_row: concat_all is not a scalar kind");
    const double n = double(row.size());
    switch (kind) {
        case PoolKind::mean: {
            double s = 0;
            for (double v : row) s += v;
            return s / n;
        }
        case PoolKind::median: {
            std::vector<double> sorted(row.begin(), row.end());
            std::sort(sorted.begin(), sorted.end());
            std::size_t m = sorted.size() / 2;
            return sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
        }
        case PoolKind::min: return *std::min_element(row.begin(), row.end());
        case PoolKind::max: return *std::max_element(row.begin(), row.end());
        case PoolKind::std_dev:
        case PoolKind::skewness:
        case PoolKind::kurtosis: {
            double mean = 0;
            for (double v : row) mean += v;
            mean /= n;
            double m2 = 0, m3 = 0, m4 = 0;
            for (double v : row) {
                double d = v - mean;
                m2 += d * d;
                m3 += d * d * d;
                m4 += d * d * d * d;
            }
            m2 /= n;
            m3 /= n;
            m4 /= n;
            if (kind == PoolKind::std_dev) return m2 > 0 ? std::sqrt(m2) : 0.0;
            if (m2 <= 0) return 0.0;  // zero-variance convention
            if (kind == PoolKind::skewness) return m3 / std::pow(m2, 1.5);
            return m4 / (m2 * m2) - 3.0;  // excess kurtosis
        }
        case PoolKind::shannon_entropy: {
            auto p = detail::row_histogram(row, histogram_bins);
            double h = 0;
            for (double q : p)
                if (q > 0) h -= q * std::log2(q);
            return h;
        }
        case PoolKind::simpson:
        case PoolKind::gini_simpson:
        case PoolKind::inverse_simpson: {
            auto p = detail::row_histogram(row, histogram_bins);
            double lambda = 0;
            for (double q : p) lambda += q * q;
            if (kind == PoolKind::simpson) return lambda;
            if (kind == PoolKind::gini_simpson) return 1.0 - lambda;
            return 1.0 / lambda;
        }
        case PoolKind::concat_all: break;
    }
    throw InvalidInput("pool_row: unhandled kind");
}

/// Pooled 1-D descriptor of a characterization matrix: length m for single
/// kinds, 11*m for concat_all, with parallel "<metric>:<pool>" labels.
struct Descriptor {
    std::vector<double> values;
    std::vector<std::string> feature_names;
    std::string source_id;
};

/// Pool the first n_cols columns (default: all). Element i of a single-kind
/// descriptor is f applied to row i; concat_all concatenates the 11 single
/// pools in pool_kinds() order.
inline Descriptor pool(const CharacterizationMatrix& matrix, PoolingFunction f, int n_cols = -1) {
    if (n_cols < 0) n_cols = matrix.frame_count();
    if (n_cols < 1 || n_cols > matrix.frame_count())
        throw InvalidInput("pool: bad column count " + std::to_string(n_cols));
    if (matrix.metric_count() == 0) throw InvalidInput("pool: empty matrix");
    if (f.histogram_bins < 1) throw InvalidInput("pool: histogram_bins must be positive");

    std::vector<PoolKind> kinds =
        f.kind == PoolKind::concat_all ? single_pool_kinds() : std::vector<PoolKind>{f.kind};

    Descriptor d;
    d.source_id = matrix.sequence_id;
    d.values.reserve(kinds.size() * std::size_t(matrix.metric_count()));
    std::vector<double> row(static_cast<std::size_t>(n_cols));
    for (PoolKind k : kinds) {
        for (int i = 0; i < matrix.metric_count(); ++i) {
            for (int j = 0; j < n_cols; ++j) row[std::size_t(j)] = matrix.values(i, j);
            d.values.push_back(pool_row(row, k, f.histogram_bins));
            d.feature_names.push_back(matrix.metric_names[std::size_t(i)] + ":" + pool_kind_name(k));
        }
    }
    return d;
}

}  // namespace atep

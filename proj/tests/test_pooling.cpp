#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "atep/pooling.hpp"
#include "atep/rng.hpp"
#include "support/oracles.hpp"

using namespace atep;
using Catch::Matchers::WithinAbs;

namespace {
CharacterizationMatrix make_matrix(const std::vector<std::vector<double>>& rows) {
    CharacterizationMatrix m;
    m.sequence_id = "mat";
    m.values.resize(long(rows.size()), long(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.metric_names.push_back("m" + std::to_string(i));
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.values(long(i), long(j)) = rows[i][j];
    }
    return m;
}
}  // namespace

TEST_CASE("pool_kinds is the fixed 12-kind order") {
    const auto& kinds = pool_kinds();
    REQUIRE(kinds.size() == 12);
    REQUIRE(kinds.front() == PoolKind::mean);
    REQUIRE(kinds.back() == PoolKind::concat_all);
    REQUIRE(single_pool_kinds().size() == 11);
}

TEST_CASE("mean of [1,2,3] is 2") {
    std::vector<double> row{1, 2, 3};
    REQUIRE_THAT(pool_row(row, PoolKind::mean), WithinAbs(2.0, 1e-15));
}

TEST_CASE("constant row: std and entropy are zero, simpson family at its pole") {
    std::vector<double> row{5, 5, 5, 5};
    REQUIRE(pool_row(row, PoolKind::std_dev) == 0.0);
    REQUIRE(pool_row(row, PoolKind::shannon_entropy) == 0.0);
    REQUIRE(pool_row(row, PoolKind::simpson) == 1.0);
    REQUIRE(pool_row(row, PoolKind::gini_simpson) == 0.0);
    REQUIRE(pool_row(row, PoolKind::inverse_simpson) == 1.0);
    REQUIRE(pool_row(row, PoolKind::skewness) == 0.0);
    REQUIRE(pool_row(row, PoolKind::kurtosis) == 0.0);
}

TEST_CASE("uniformly filled histogram hits the diversity formulas exactly") {
    // 10 values spread so each of the 10 equal-width bins holds exactly one
    std::vector<double> row;
    for (int k = 0; k < 10; ++k) row.push_back(0.5 + k);
    REQUIRE_THAT(pool_row(row, PoolKind::shannon_entropy, 10), WithinAbs(std::log2(10.0), 1e-12));
    REQUIRE_THAT(pool_row(row, PoolKind::simpson, 10), WithinAbs(0.1, 1e-12));
    REQUIRE_THAT(pool_row(row, PoolKind::gini_simpson, 10), WithinAbs(0.9, 1e-12));
    REQUIRE_THAT(pool_row(row, PoolKind::inverse_simpson, 10), WithinAbs(10.0, 1e-12));
}

TEST_CASE("single-column matrix: location pools agree, std is zero") {
    std::vector<double> row{3.7};
    for (PoolKind k : {PoolKind::mean, PoolKind::median, PoolKind::min, PoolKind::max})
        REQUIRE_THAT(pool_row(row, k), WithinAbs(3.7, 1e-15));
    REQUIRE(pool_row(row, PoolKind::std_dev) == 0.0);
}

TEST_CASE("single pools match naive references on random rows") {
    Rng rng(101, "pool_rows");
    for (int trial = 0; trial < 200; ++trial) {
        int n = int(rng.uniform_int(1, 40));
        std::vector<double> row(static_cast<std::size_t>(n));
        for (auto& v : row) v = rng.uniform(-50, 50);
        REQUIRE_THAT(pool_row(row, PoolKind::mean), WithinAbs(oracle::naive_mean(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::median), WithinAbs(oracle::naive_median(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::min), WithinAbs(oracle::naive_min(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::max), WithinAbs(oracle::naive_max(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::std_dev), WithinAbs(oracle::naive_std(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::skewness), WithinAbs(oracle::naive_skewness(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::kurtosis), WithinAbs(oracle::naive_kurtosis(row), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::shannon_entropy), WithinAbs(oracle::naive_shannon_entropy(row, 10), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::simpson), WithinAbs(oracle::naive_simpson(row, 10), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::gini_simpson), WithinAbs(1.0 - oracle::naive_simpson(row, 10), 1e-9));
        REQUIRE_THAT(pool_row(row, PoolKind::inverse_simpson), WithinAbs(1.0 / oracle::naive_simpson(row, 10), 1e-9));
    }
}

TEST_CASE("pooling is invariant to column permutation for every kind") {
    Rng rng(202, "perm");
    for (int trial = 0; trial < 30; ++trial) {
        int n = int(rng.uniform_int(2, 25));
        std::vector<double> row(static_cast<std::size_t>(n));
        for (auto& v : row) v = rng.uniform(-10, 10);
        std::vector<double> shuffled = row;
        for (int i = n - 1; i > 0; --i)
            std::swap(shuffled[std::size_t(i)], shuffled[std::size_t(rng.uniform_int(0, i))]);
        for (PoolKind k : single_pool_kinds())
            REQUIRE_THAT(pool_row(row, k), WithinAbs(pool_row(shuffled, k), 1e-12));
    }
}

TEST_CASE("order statistics bracket the location pools") {
    Rng rng(303, "bracket");
    for (int trial = 0; trial < 50; ++trial) {
        int n = int(rng.uniform_int(1, 30));
        std::vector<double> row(static_cast<std::size_t>(n));
        for (auto& v : row) v = rng.uniform(-100, 100);
        double mn = pool_row(row, PoolKind::min), mx = pool_row(row, PoolKind::max);
        REQUIRE(mn <= pool_row(row, PoolKind::mean));
        REQUIRE(pool_row(row, PoolKind::mean) <= mx);
        REQUIRE(mn <= pool_row(row, PoolKind::median));
        REQUIRE(pool_row(row, PoolKind::median) <= mx);
    }
}

TEST_CASE("diversity pools stay inside their theoretical ranges") {
    Rng rng(404, "ranges");
    const int bins = 10;
    for (int trial = 0; trial < 50; ++trial) {
        int n = int(rng.uniform_int(1, 60));
        std::vector<double> row(static_cast<std::size_t>(n));
        for (auto& v : row) v = rng.normal(0, 3);
        double simpson = pool_row(row, PoolKind::simpson, bins);
        REQUIRE(simpson > 0.0);
        REQUIRE(simpson <= 1.0);
        double gini = pool_row(row, PoolKind::gini_simpson, bins);
        REQUIRE(gini >= 0.0);
        REQUIRE(gini < 1.0);
        double inv = pool_row(row, PoolKind::inverse_simpson, bins);
        REQUIRE(inv >= 1.0);
        REQUIRE(inv <= double(bins) + 1e-12);
        double h = pool_row(row, PoolKind::shannon_entropy, bins);
        REQUIRE(h >= 0.0);
        REQUIRE(h <= std::log2(double(bins)) + 1e-12);
    }
}

TEST_CASE("concat_all descriptor is the element-wise concatenation of the 11 pools") {
    Rng rng(505, "concat");
    std::vector<std::vector<double>> rows(3, std::vector<double>(7));
    for (auto& r : rows)
        for (auto& v : r) v = rng.uniform(-5, 5);
    CharacterizationMatrix mat = make_matrix(rows);

    Descriptor all = pool(mat, {PoolKind::concat_all, 10});
    REQUIRE(all.values.size() == 11 * rows.size());
    std::size_t pos = 0;
    for (PoolKind k : single_pool_kinds()) {
        Descriptor single = pool(mat, {k, 10});
        REQUIRE(single.values.size() == rows.size());
        for (std::size_t i = 0; i < single.values.size(); ++i) {
            REQUIRE(all.values[pos] == single.values[i]);
            REQUIRE(all.feature_names[pos] == single.feature_names[i]);
            ++pos;
        }
    }
}

TEST_CASE("prefix pooling matches pooling the truncated matrix") {
    Rng rng(606, "prefix");
    std::vector<std::vector<double>> rows(4, std::vector<double>(9));
    for (auto& r : rows)
        for (auto& v : r) v = rng.uniform(0, 1);
    CharacterizationMatrix mat = make_matrix(rows);
    for (int k = 1; k <= 9; ++k) {
        std::vector<std::vector<double>> cut;
        for (const auto& r : rows) cut.emplace_back(r.begin(), r.begin() + k);
        CharacterizationMatrix matk = make_matrix(cut);
        Descriptor a = pool(mat, {PoolKind::mean, 10}, k);
        Descriptor b = pool(matk, {PoolKind::mean, 10});
        REQUIRE(a.values == b.values);
    }
}

TEST_CASE("feature names carry metric and pool labels") {
    CharacterizationMatrix mat = make_matrix({{1, 2}, {3, 4}});
    Descriptor d = pool(mat, {PoolKind::median, 10});
    REQUIRE(d.feature_names == std::vector<std::string>{"m0:median", "m1:median"});
}

TEST_CASE("invalid pooling inputs are rejected") {
    CharacterizationMatrix mat = make_matrix({{1, 2}});
    REQUIRE_THROWS_AS(pool(mat, {PoolKind::mean, 10}, 3), InvalidInput);
    REQUIRE_THROWS_AS(pool(mat, {PoolKind::mean, 0}), InvalidInput);
    REQUIRE_THROWS_AS(pool_row(std::vector<double>{}, PoolKind::mean), InvalidInput);
    REQUIRE_THROWS_AS(pool_kind_from_name("bogus"), InvalidInput);
}

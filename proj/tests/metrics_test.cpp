#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pdagrnn/errors.hpp"
#include "pdagrnn/metrics.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace pdagrnn;

namespace {

// direct textbook evaluation in long double
struct Brute {
    long double oa, aa, kappa;
};

Brute brute(const std::vector<std::vector<std::uint64_t>>& m) {
    const std::size_t c = m.size();
    long double n = 0, diag = 0, aa = 0, pe = 0;
    std::size_t populated = 0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            n += m[i][j];
            if (i == j) diag += m[i][j];
        }
    for (std::size_t k = 0; k < c; ++k) {
        long double row = 0, col = 0;
        for (std::size_t j = 0; j < c; ++j) {
            row += m[k][j];
            col += m[j][k];
        }
        pe += row * col;
        if (row > 0) {
            aa += m[k][k] / row;
            ++populated;
        }
    }
    pe /= n * n;
    const long double po = diag / n;
    return {100 * po, 100 * aa / populated, pe >= 1 ? (po >= 1 ? 1.0L : 0.0L) : (po - pe) / (1 - pe)};
}

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& m) {
    ConfusionMatrix cm(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j) cm.add(static_cast<int>(i + 1), static_cast<int>(j + 1), m[i][j]);
    return cm;
}

}  // namespace

TEST_CASE("confusion counts truth rows and prediction columns") {
    const std::vector<int> truth{1, 1, 2, 3, 3, 3};
    const std::vector<int> preds{1, 2, 2, 3, 1, 3};
    const auto cm = confusion(truth, preds, 3);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 2) == 1);
    CHECK(cm.at(3, 1) == 1);
    CHECK(cm.at(3, 3) == 2);
    CHECK(cm.total() == 6);
    CHECK(cm.trace() == 4);
    CHECK(cm.row_sum(3) == 3);
    CHECK(cm.col_sum(1) == 2);
}

TEST_CASE("single pair") {
    const std::vector<int> t{2}, p{3};
    const auto cm = confusion(t, p, 3);
    CHECK(cm.at(2, 3) == 1);
    CHECK(cm.total() == 1);
}

TEST_CASE("random confusion has row sums equal to class counts") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> cls(1, 6);
    std::vector<int> t(1000), p(1000);
    for (auto& v : t) v = cls(rng);
    for (auto& v : p) v = cls(rng);
    const auto cm = confusion(t, p, 6);
    CHECK(cm.total() == 1000);
    for (int k = 1; k <= 6; ++k) {
        CHECK(cm.row_sum(k) == static_cast<std::uint64_t>(std::count(t.begin(), t.end(), k)));
        CHECK(cm.col_sum(k) == static_cast<std::uint64_t>(std::count(p.begin(), p.end(), k)));
    }
}

TEST_CASE("confusion rejects bad input") {
    const std::vector<int> a{1, 2}, b{1};
    CHECK_THROWS_AS(confusion(a, b, 2), ValidationError);
    const std::vector<int> zero{0, 1}, big{1, 3};
    CHECK_THROWS_AS(confusion(zero, a, 2), ValidationError);
    CHECK_THROWS_AS(confusion(a, big, 2), ValidationError);
    CHECK_THROWS_AS(oa_aa_kappa(ConfusionMatrix(3)), ValidationError);
}

TEST_CASE("diagonal matrix is perfect") {
    const auto r = oa_aa_kappa(from_rows({{5, 0, 0}, {0, 7, 0}, {0, 0, 1}}));
    CHECK(r.oa == 100.0);
    CHECK(r.aa == 100.0);
    CHECK(r.kappa == 1.0);
}

TEST_CASE("worked two-class example") {
    const auto r = oa_aa_kappa(from_rows({{40, 10}, {20, 30}}));
    CHECK(r.oa == 70.0);
    CHECK(r.aa == 70.0);
    CHECK(r.kappa == 0.4);
    REQUIRE(r.per_class.size() == 2);
    CHECK(*r.per_class[0] == 80.0);
    CHECK(*r.per_class[1] == 60.0);
}

TEST_CASE("classes without true samples are left out of AA") {
    const auto r = oa_aa_kappa(from_rows({{3, 1, 0}, {0, 0, 0}, {0, 2, 2}}));
    CHECK_FALSE(r.per_class[1].has_value());
    CHECK(r.aa == doctest::Approx((75.0 + 50.0) / 2.0));
}

TEST_CASE("all samples in one class predicted correctly") {
    const auto r = oa_aa_kappa(from_rows({{0, 0}, {0, 9}}));
    CHECK(r.oa == 100.0);
    CHECK(r.kappa == 1.0);
}

TEST_CASE("metrics agree with a brute-force evaluation") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t c = 2 + trial % 9;
        std::uniform_int_distribution<std::uint64_t> count(0, trial % 3 == 0 ? 3 : 200);
        std::vector<std::vector<std::uint64_t>> m(c, std::vector<std::uint64_t>(c));
        for (auto& row : m)
            for (auto& v : row) v = count(rng);
        m[0][0] += 1;
        const auto want = brute(m);
        const auto got = oa_aa_kappa(from_rows(m));
        CHECK(got.oa == doctest::Approx(static_cast<double>(want.oa)).epsilon(1e-12));
        CHECK(got.aa == doctest::Approx(static_cast<double>(want.aa)).epsilon(1e-12));
        CHECK(std::abs(got.kappa - static_cast<double>(want.kappa)) <= 1e-12);
        CHECK(got.kappa <= 1.0);

        bool diagonal = true;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j)
                if (i != j && m[i][j] != 0) diagonal = false;
        CHECK((got.kappa == 1.0) == diagonal);

        // relabelling classes leaves every summary unchanged
        std::vector<std::size_t> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto pm = m;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) pm[perm[i]][perm[j]] = m[i][j];
        const auto permuted = oa_aa_kappa(from_rows(pm));
        CHECK(permuted.oa == doctest::Approx(got.oa).epsilon(1e-12));
        CHECK(permuted.aa == doctest::Approx(got.aa).epsilon(1e-12));
        CHECK(std::abs(permuted.kappa - got.kappa) <= 1e-12);
    }
}

TEST_CASE("mean and sample standard deviation") {
    const std::vector<double> two{90.0, 94.0};
    const auto s = mean_std(two);
    CHECK(s.mean == 92.0);
    CHECK(s.std == doctest::Approx(2.8284271247461903).epsilon(1e-15));
    const std::vector<double> one{42.0};
    CHECK(mean_std(one).std == 0.0);
    CHECK_THROWS_AS(mean_std(std::vector<double>{}), ValidationError);
}

TEST_CASE("format_mean_std") {
    CHECK(format_mean_std({97.4512, 0.7249}) == "97.45 ± 0.72");
    CHECK(format_mean_std({0.5, 0.0}, 3) == "0.500 ± 0.000");
}

TEST_CASE("aggregate and csv layout") {
    std::vector<MetricsReport> runs{
        oa_aa_kappa(from_rows({{40, 10, 0}, {20, 30, 0}, {0, 0, 0}})),
        oa_aa_kappa(from_rows({{50, 0, 0}, {0, 50, 0}, {0, 0, 0}})),
    };
    const auto agg = aggregate_runs(runs);
    CHECK(agg.runs == 2);
    CHECK(agg.oa.mean == 85.0);
    CHECK(agg.kappa.mean == doctest::Approx(0.7));
    REQUIRE(agg.per_class.size() == 3);
    CHECK_FALSE(agg.per_class[2].has_value());

    const std::string csv = metrics_csv(agg);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 7);
    CHECK(lines[0] == "metric,mean,std");
    CHECK(lines[1].rfind("OA,85.000000,", 0) == 0);
    CHECK(lines[2].rfind("AA,", 0) == 0);
    CHECK(lines[3].rfind("kappa,0.700000,", 0) == 0);
    CHECK(lines[4] == "class_1,90.000000,14.142136");
    CHECK(lines[6] == "class_3,nan,nan");

    testing::TempDir dir("metrics");
    write_metrics_csv(agg, dir / "m.csv");
    CHECK(testing::slurp(dir / "m.csv") == csv);
}

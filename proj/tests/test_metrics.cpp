#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fmm/errors.hpp"
#include "fmm/metrics.hpp"
#include "fmm/rng.hpp"
#include "testutil.hpp"

using namespace fmm;

namespace {

// Brute-force Mann-Whitney: fraction of (positive, negative) pairs where the
// positive scores higher, ties counted half.
double mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) {
                wins += 1.0;
            } else if (scores[i] == scores[j]) {
                wins += 0.5;
            }
        }
    }
    for (int l : labels) {
        if (l == 0) ++n_neg;
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Direct transcription of the circular correlation formula.
double circular_corr_reference(const std::vector<double>& a, const std::vector<double>& b) {
    double sa = 0.0, ca = 0.0, sb = 0.0, cb = 0.0;
    for (double x : a) {
        sa += std::sin(x);
        ca += std::cos(x);
    }
    for (double x : b) {
        sb += std::sin(x);
        cb += std::cos(x);
    }
    const double ma = std::atan2(sa, ca);
    const double mb = std::atan2(sb, cb);
    double num = 0.0, d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::sin(a[i] - ma) * std::sin(b[i] - mb);
        d1 += std::sin(a[i] - ma) * std::sin(a[i] - ma);
        d2 += std::sin(b[i] - mb) * std::sin(b[i] - mb);
    }
    return num / std::sqrt(d1 * d2);
}

}  // namespace

TEST_CASE("circular_mean") {
    std::vector<double> zeros{0.0, 0.0, 0.0};
    CHECK(*circular_mean(zeros) == doctest::Approx(0.0));

    std::vector<double> wrap{0.1, kTwoPi - 0.1};
    const double m = *circular_mean(wrap);
    CHECK(std::min(m, kTwoPi - m) < 1e-12);

    std::vector<double> degenerate{0.0, std::numbers::pi};
    CHECK(!circular_mean(degenerate).has_value());

    std::vector<double> empty;
    CHECK_THROWS_AS(circular_mean(empty), ValidationError);
}

TEST_CASE("circular_correlation") {
    std::vector<double> a{0.3, 1.2, 2.9, 4.4, 5.8};
    CHECK(circular_correlation(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("rotation invariance") {
        std::vector<double> b = a;
        for (double& x : b) x = wrap_angle(x + std::numbers::pi / 3.0);
        CHECK(circular_correlation(a, b) == doctest::Approx(1.0).epsilon(1e-12));
        Rng rng(3);
        std::vector<double> c(a.size()), d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) c[i] = rng.uniform(0.0, kTwoPi);
        const double base = circular_correlation(a, c);
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = wrap_angle(c[i] + 2.1);
        CHECK(circular_correlation(a, d) == doctest::Approx(base).epsilon(1e-12));
    }

    SUBCASE("pinned wraparound example matches the direct formula") {
        std::vector<double> x{0.1, 6.2, 0.05, 6.25};
        std::vector<double> y{6.25, 0.05, 6.2, 0.1};
        CHECK(circular_correlation(x, y) == doctest::Approx(circular_corr_reference(x, y)).epsilon(1e-12));
    }

    SUBCASE("100 random instances match the direct formula within 1e-12") {
        Rng rng(17);
        for (int k = 0; k < 100; ++k) {
            const std::size_t n = 3 + rng.below(40);
            std::vector<double> x(n), y(n);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = rng.uniform(0.0, kTwoPi);
                y[i] = rng.uniform(0.0, kTwoPi);
            }
            const double got = circular_correlation(x, y);
            const double ref = circular_corr_reference(x, y);
            CHECK(std::fabs(got - ref) < 1e-12);
        }
    }

    SUBCASE("errors") {
        std::vector<double> shorter{0.1, 0.2};
        CHECK_THROWS_AS(circular_correlation(a, shorter), ValidationError);
        std::vector<double> degenerate{0.0, std::numbers::pi, 0.0, std::numbers::pi, 0.0};
        CHECK_THROWS_AS(circular_correlation(a, degenerate), ValidationError);
    }
}

TEST_CASE("pearson") {
    std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    for (auto& v : y) v = -v;
    // y = -(2x+1): still perfectly anti-correlated
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-12));

    // Fixed 6-point set against a hand-computed value.
    std::vector<double> u{0.2, 1.1, -0.4, 2.2, 0.9, 1.5};
    std::vector<double> v{1.0, 0.4, 0.8, 2.0, 1.6, 0.9};
    double mu = 0.0, mv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        mu += u[i];
        mv += v[i];
    }
    mu /= 6.0;
    mv /= 6.0;
    double num = 0.0, du = 0.0, dv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        num += (u[i] - mu) * (v[i] - mv);
        du += (u[i] - mu) * (u[i] - mu);
        dv += (v[i] - mv) * (v[i] - mv);
    }
    CHECK(pearson(u, v) == doctest::Approx(num / std::sqrt(du * dv)).epsilon(1e-14));

    std::vector<double> flat{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    CHECK_THROWS_AS(pearson(x, flat), ValidationError);
}

TEST_CASE("roc_auroc") {
    SUBCASE("perfect separation") {
        std::vector<double> s{0.9, 0.8, 0.2, 0.1};
        std::vector<int> l{1, 1, 0, 0};
        CHECK(roc_auroc(s, l).auroc == doctest::Approx(1.0));
    }

    SUBCASE("all scores identical gives 0.5") {
        std::vector<double> s{0.5, 0.5, 0.5, 0.5};
        std::vector<int> l{1, 0, 1, 0};
        CHECK(roc_auroc(s, l).auroc == doctest::Approx(0.5));
    }

    SUBCASE("pinned example equals exhaustive pair counting") {
        std::vector<double> s{0.1, 0.4, 0.35, 0.8};
        std::vector<int> l{0, 0, 1, 1};
        CHECK(roc_auroc(s, l).auroc == doctest::Approx(mann_whitney(s, l)).epsilon(1e-12));
    }

    SUBCASE("single class is an error") {
        std::vector<double> s{0.1, 0.2};
        std::vector<int> pos{1, 1};
        CHECK_THROWS_AS(roc_auroc(s, pos), ValidationError);
    }

    SUBCASE("100 random instances match Mann-Whitney within 1e-12") {
        Rng rng(23);
        for (int k = 0; k < 100; ++k) {
            const std::size_t n = 4 + rng.below(47);
            std::vector<double> s(n);
            std::vector<int> l(n);
            bool has0 = false, has1 = false;
            for (std::size_t i = 0; i < n; ++i) {
                // Coarse grid to provoke ties.
                s[i] = std::floor(rng.uniform(0.0, 8.0)) / 8.0;
                l[i] = rng.below(2) == 0 ? 0 : 1;
                has0 |= l[i] == 0;
                has1 |= l[i] == 1;
            }
            if (!has0) l[0] = 0;
            if (!has1) l[n - 1] = 1;
            CHECK(std::fabs(roc_auroc(s, l).auroc - mann_whitney(s, l)) < 1e-12);
        }
    }

    SUBCASE("complement and curve invariants") {
        Rng rng(29);
        for (int k = 0; k < 50; ++k) {
            const std::size_t n = 6 + rng.below(40);
            std::vector<double> s(n), neg(n);
            std::vector<int> l(n);
            bool has0 = false, has1 = false;
            for (std::size_t i = 0; i < n; ++i) {
                s[i] = std::floor(rng.uniform(0.0, 6.0));
                neg[i] = -s[i];
                l[i] = rng.below(2) == 0 ? 0 : 1;
                has0 |= l[i] == 0;
                has1 |= l[i] == 1;
            }
            if (!has0) l[0] = 0;
            if (!has1) l[n - 1] = 1;
            const auto curve = roc_auroc(s, l);
            CHECK(std::fabs(curve.auroc + roc_auroc(neg, l).auroc - 1.0) < 1e-12);

            // Monotone curve from (0,0) to (1,1); area re-derives the auroc.
            CHECK(curve.fpr.front() == 0.0);
            CHECK(curve.tpr.front() == 0.0);
            CHECK(curve.fpr.back() == doctest::Approx(1.0));
            CHECK(curve.tpr.back() == doctest::Approx(1.0));
            double area = 0.0;
            for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
                CHECK(curve.fpr[i] >= curve.fpr[i - 1]);
                CHECK(curve.tpr[i] >= curve.tpr[i - 1]);
                area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
            }
            CHECK(std::fabs(area - curve.auroc) < 1e-12);
        }
    }
}

TEST_CASE("coefficient_correlations") {
    Rng rng(31);
    std::vector<CoefficientVector> oracle;
    for (int k = 0; k < 40; ++k) {
        oracle.push_back(encode(canonical_order(test::random_params(rng))));
    }

    SUBCASE("identical lists give all ones") {
        const auto table = coefficient_correlations(oracle, oracle);
        REQUIRE(table.size() == 21);
        for (const auto& row : table) CHECK(row.value == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("amplitude scaling leaves A rows at one") {
        auto scaled = oracle;
        for (auto& v : scaled) {
            for (int j = 0; j < kWaveCount; ++j) {
                v.values[static_cast<std::size_t>(coeff::amplitude(j))] *= 2.0;
            }
        }
        const auto table = coefficient_correlations(scaled, oracle);
        for (const auto& row : table) {
            if (row.parameter == "A") CHECK(row.value == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

#include <doctest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "fmm/errors.hpp"
#include "fmm/wave.hpp"
#include "testutil.hpp"

using namespace fmm;

namespace {

// Independent scalar implementation of the wave formula, long double, using
// the literal tan form (valid for t - alpha reduced into (-pi, pi)).
double reference_wave_value(double amp, double alpha, double beta, double omega, double t) {
    long double u = static_cast<long double>(t) - static_cast<long double>(alpha);
    const long double pi = 3.14159265358979323846264338327950288L;
    while (u <= -pi) u += 2.0L * pi;
    while (u > pi) u -= 2.0L * pi;
    const long double phi = static_cast<long double>(beta) +
                            2.0L * std::atan(static_cast<long double>(omega) * std::tan(u / 2.0L));
    return static_cast<double>(static_cast<long double>(amp) * std::cos(phi));
}

}  // namespace

TEST_CASE("eval_wave: zero amplitude gives zeros") {
    const auto w = make_wave(0.0, 1.0, 2.0, 0.3);
    const auto out = eval_wave(w, PhaseGrid(8));
    REQUIRE(out.size() == 8);
    for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("eval_wave: omega=1 reduces to a plain cosine") {
    const auto w = make_wave(1.0, 0.0, 0.0, 1.0);
    const auto out = eval_wave(w, PhaseGrid(4));
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::fabs(out[1]) < 1e-12);
    CHECK(out[2] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::fabs(out[3]) < 1e-12);
}

TEST_CASE("eval_wave: matches an independent high-precision evaluation") {
    const double amp = 2.0, alpha = std::numbers::pi, beta = std::numbers::pi / 2.0, omega = 0.1;
    const auto w = make_wave(amp, alpha, beta, omega);
    const int n = 512;
    const PhaseGrid grid(n);
    const auto out = eval_wave(w, grid);
    for (int i = 0; i < n; ++i) {
        const double ref = reference_wave_value(amp, alpha, beta, omega, grid.at(i));
        CHECK(out[static_cast<std::size_t>(i)] == doctest::Approx(ref).epsilon(1e-9));
    }

    // The sharp transition (largest step between neighbors) sits at the
    // antipode of alpha, t = 0 on this grid.
    int argmax = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::fabs(out[static_cast<std::size_t>((i + 1) % n)] - out[static_cast<std::size_t>(i)]);
        if (d > best) {
            best = d;
            argmax = i;
        }
    }
    const int dist = std::min(argmax, n - argmax);
    CHECK(dist <= 2);

    // Exactly one narrow high-slope region per period (counted circularly;
    // the region straddles the grid seam here).
    std::vector<bool> high(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double d = std::fabs(out[static_cast<std::size_t>((i + 1) % n)] - out[static_cast<std::size_t>(i)]);
        high[static_cast<std::size_t>(i)] = d > 0.25 * best;
    }
    int regions = 0;
    for (int i = 0; i < n; ++i) {
        if (high[static_cast<std::size_t>(i)] && !high[static_cast<std::size_t>((i + n - 1) % n)]) ++regions;
    }
    CHECK(regions == 1);
}

TEST_CASE("wave periodicity and omega=1 phase linearity") {
    Rng rng(7);
    for (int k = 0; k < 200; ++k) {
        const auto w = make_wave(rng.uniform(0.0, 2.0), rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi),
                                 rng.uniform(0.01, 1.0));
        const double t = rng.uniform(0.0, kTwoPi);
        CHECK(wave_value(w, t) == doctest::Approx(wave_value(w, t + kTwoPi)).epsilon(1e-12));
    }
    for (int k = 0; k < 200; ++k) {
        const auto w = make_wave(1.0, rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi), 1.0);
        const double t = rng.uniform(0.0, kTwoPi);
        const double lin = w.beta + (t - w.alpha);
        double diff = std::fmod(wave_phase(w, t) - lin, kTwoPi);
        if (diff < -std::numbers::pi) diff += kTwoPi;
        if (diff > std::numbers::pi) diff -= kTwoPi;
        CHECK(std::fabs(diff) < 1e-12);
    }
}

TEST_CASE("eval_beat: constant, single-wave, additivity") {
    FMMBeatParams p;
    p.offset = 3.5;
    for (auto& w : p.waves) w = make_wave(0.0, 0.0, 0.0, 1.0);
    const auto flat = eval_beat(p, PhaseGrid(10));
    for (double v : flat) CHECK(v == doctest::Approx(3.5).epsilon(1e-15));

    FMMBeatParams one = p;
    one.offset = 0.0;
    one.waves[3] = make_wave(1.3, 2.0, 0.7, 0.2);
    const PhaseGrid grid(64);
    const auto beat = eval_beat(one, grid);
    const auto wave = eval_wave(one.waves[3], grid);
    for (int i = 0; i < 64; ++i) {
        CHECK(beat[static_cast<std::size_t>(i)] == doctest::Approx(wave[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    Rng rng(11);
    const auto full = test::random_params(rng);
    const auto total = eval_beat(full, grid);
    for (int i = 0; i < 64; ++i) {
        double acc = full.offset;
        for (const auto& w : full.waves) acc += wave_value(w, grid.at(i));
        CHECK(total[static_cast<std::size_t>(i)] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("eval_beat: textbook morphology has the five deflections in place") {
    const auto p = test::textbook_params();
    const int n = 140;
    const auto signal = eval_beat(p, PhaseGrid(n));

    // R is the global maximum, at 40% of the beat.
    int argmax = 0;
    for (int i = 1; i < n; ++i) {
        if (signal[static_cast<std::size_t>(i)] > signal[static_cast<std::size_t>(argmax)]) argmax = i;
    }
    CHECK(std::abs(argmax - test::feature_index(p.waves[2].alpha, n)) <= 1);
    CHECK(test::feature_index(p.waves[2].alpha, n) == 56);  // 0.4 * 140

    // Q and S are local minima next to R; P and T are local positive bumps.
    const int q_at = test::feature_index(p.waves[1].alpha, n);
    const int s_at = test::feature_index(p.waves[3].alpha, n);
    const int p_at = test::feature_index(p.waves[0].alpha, n);
    const int t_at = test::feature_index(p.waves[4].alpha, n);
    CHECK(q_at < argmax);
    CHECK(s_at > argmax);
    CHECK(signal[static_cast<std::size_t>(q_at)] < signal[static_cast<std::size_t>(p_at)]);
    CHECK(signal[static_cast<std::size_t>(s_at)] < signal[static_cast<std::size_t>(t_at)]);
    CHECK(signal[static_cast<std::size_t>(argmax)] > signal[static_cast<std::size_t>(t_at)]);
    CHECK(signal[static_cast<std::size_t>(t_at)] > signal[static_cast<std::size_t>(p_at)]);
}

TEST_CASE("eval_beat_multilead") {
    const PhaseGrid grid(32);
    const auto base = test::textbook_params();
    std::array<double, kWaveCount> alphas{}, omegas{};
    LeadParams lead1;
    lead1.offset = base.offset;
    for (int j = 0; j < kWaveCount; ++j) {
        const auto js = static_cast<std::size_t>(j);
        alphas[js] = base.waves[js].alpha;
        omegas[js] = base.waves[js].omega;
        lead1.amplitudes[js] = base.waves[js].amplitude;
        lead1.betas[js] = base.waves[js].beta;
    }

    SUBCASE("single lead equals eval_beat") {
        const auto out = eval_beat_multilead(std::span<const LeadParams>(&lead1, 1), alphas, omegas, grid);
        REQUIRE(out.size() == 1);
        const auto direct = eval_beat(base, grid);
        for (int i = 0; i < 32; ++i) {
            CHECK(out[0][static_cast<std::size_t>(i)] ==
                  doctest::Approx(direct[static_cast<std::size_t>(i)]).epsilon(1e-12));
        }
    }

    SUBCASE("identical leads produce identical vectors") {
        std::array<LeadParams, 2> leads{lead1, lead1};
        const auto out = eval_beat_multilead(leads, alphas, omegas, grid);
        REQUIRE(out.size() == 2);
        CHECK(out[0] == out[1]);
    }

    SUBCASE("doubling amplitudes and shifting the offset is affine in the signal") {
        LeadParams lead2 = lead1;
        for (auto& a : lead2.amplitudes) a *= 2.0;
        lead2.offset = lead1.offset + 1.0;
        std::array<LeadParams, 2> leads{lead1, lead2};
        const auto out = eval_beat_multilead(leads, alphas, omegas, grid);
        for (int i = 0; i < 32; ++i) {
            const auto is = static_cast<std::size_t>(i);
            const double expected = 2.0 * (out[0][is] - lead1.offset) + lead1.offset + 1.0;
            CHECK(out[1][is] == doctest::Approx(expected).epsilon(1e-12));
        }
    }

    SUBCASE("zero leads give an empty result") {
        const auto out = eval_beat_multilead(std::span<const LeadParams>(), alphas, omegas, grid);
        CHECK(out.empty());
    }
}

TEST_CASE("encode layout") {
    auto p = test::textbook_params();
    for (auto& w : p.waves) {
        w.alpha = 0.0;
    }
    auto v = encode(p);
    for (int j = 0; j < kWaveCount; ++j) {
        CHECK(v.values[static_cast<std::size_t>(coeff::sin_alpha(j))] == doctest::Approx(0.0));
        CHECK(v.values[static_cast<std::size_t>(coeff::cos_alpha(j))] == doctest::Approx(1.0));
    }

    auto q = test::textbook_params();
    q.waves[0].alpha = std::numbers::pi / 2.0;
    q.waves[0].beta = 3.0 * std::numbers::pi / 2.0;
    v = encode(q);
    CHECK(v.values[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(v.values[3]) < 1e-12);
    CHECK(v.values[4] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::fabs(v.values[5]) < 1e-12);
}

TEST_CASE("decode basics and errors") {
    CHECK(decode(encode(test::textbook_params())).waves[2].alpha == doctest::Approx(5.6549));

    SUBCASE("radius invariance") {
        auto v = encode(test::textbook_params());
        v.values[coeff::sin_alpha(0)] = 0.6;
        v.values[coeff::cos_alpha(0)] = 0.8;
        const double a1 = decode(v).waves[0].alpha;
        v.values[coeff::sin_alpha(0)] = 0.3;
        v.values[coeff::cos_alpha(0)] = 0.4;
        const double a2 = decode(v).waves[0].alpha;
        CHECK(a1 == doctest::Approx(a2).epsilon(1e-15));
    }

    SUBCASE("wrong length is structural") {
        std::vector<double> short_vec(30, 0.5);
        CHECK_THROWS_AS(decode(short_vec), StructuralError);
    }

    SUBCASE("negative amplitude names the index") {
        auto v = encode(test::textbook_params());
        v.values[coeff::amplitude(3)] = -0.1;
        try {
            decode(v);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(std::to_string(coeff::amplitude(3))) != std::string::npos);
        }
    }

    SUBCASE("omega out of range names the index") {
        auto v = encode(test::textbook_params());
        v.values[coeff::omega(4)] = 1.5;
        try {
            decode(v);
            FAIL("expected ValidationError");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find(std::to_string(coeff::omega(4))) != std::string::npos);
        }
    }
}

TEST_CASE("encode/decode round trip on 1000 seeded random parameter sets") {
    Rng rng(1234);
    for (int k = 0; k < 1000; ++k) {
        const auto p = canonical_order(test::random_params(rng));
        const auto v = encode(p);
        const auto q = decode(v);
        CHECK(q.offset == doctest::Approx(p.offset).epsilon(1e-9));
        for (int j = 0; j < kWaveCount; ++j) {
            const auto js = static_cast<std::size_t>(j);
            CHECK(q.waves[js].amplitude == doctest::Approx(p.waves[js].amplitude).epsilon(1e-9));
            CHECK(circular_distance(q.waves[js].alpha, p.waves[js].alpha) < 1e-9);
            CHECK(circular_distance(q.waves[js].beta, p.waves[js].beta) < 1e-9);
            CHECK(q.waves[js].omega == doctest::Approx(p.waves[js].omega).epsilon(1e-9));
        }
        const auto v2 = encode(q);
        for (int i = 0; i < kCoefficientCount; ++i) {
            CHECK(std::fabs(v2.values[static_cast<std::size_t>(i)] - v.values[static_cast<std::size_t>(i)]) <
                  1e-9);
        }
    }
}

TEST_CASE("canonical_order") {
    SUBCASE("already ordered stays unchanged") {
        const auto p = test::textbook_params();
        const auto q = canonical_order(p);
        for (int j = 0; j < kWaveCount; ++j) {
            CHECK(q.waves[static_cast<std::size_t>(j)].alpha == p.waves[static_cast<std::size_t>(j)].alpha);
        }
    }

    SUBCASE("shuffled waves come back in cyclic ascending order with R in slot 2") {
        Rng rng(99);
        for (int k = 0; k < 100; ++k) {
            auto p = test::textbook_params();
            std::vector<FMMWave> shuffled(p.waves.begin(), p.waves.end());
            rng.shuffle(shuffled);
            FMMBeatParams s;
            s.offset = p.offset;
            std::copy(shuffled.begin(), shuffled.end(), s.waves.begin());
            const auto q = canonical_order(s);
            // Same multiset of waves.
            for (const auto& w : p.waves) {
                bool found = false;
                for (const auto& v : q.waves) {
                    if (v.alpha == w.alpha && v.amplitude == w.amplitude) found = true;
                }
                CHECK(found);
            }
            // Max amplitude (R) in slot 2, alphas cyclically ascending.
            CHECK(q.waves[2].amplitude == doctest::Approx(1.0));
            int descents = 0;
            for (int j = 0; j < kWaveCount; ++j) {
                if (q.waves[static_cast<std::size_t>(j)].alpha >
                    q.waves[static_cast<std::size_t>((j + 1) % kWaveCount)].alpha) {
                    ++descents;
                }
            }
            CHECK(descents <= 1);
        }
    }

    SUBCASE("equal alphas keep input order") {
        FMMBeatParams p;
        p.waves = {make_wave(0.1, 1.0, 0.1, 0.5), make_wave(0.2, 1.0, 0.2, 0.5),
                   make_wave(5.0, 2.0, 0.3, 0.5), make_wave(0.4, 3.0, 0.4, 0.5),
                   make_wave(0.5, 4.0, 0.5, 0.5)};
        const auto q = canonical_order(p);
        CHECK(q.waves[2].amplitude == doctest::Approx(5.0));
        // The two alpha=1.0 waves keep their relative order (0.1 before 0.2).
        int first = -1, second = -1;
        for (int j = 0; j < kWaveCount; ++j) {
            if (q.waves[static_cast<std::size_t>(j)].amplitude == doctest::Approx(0.1)) first = j;
            if (q.waves[static_cast<std::size_t>(j)].amplitude == doctest::Approx(0.2)) second = j;
        }
        CHECK((second - first + kWaveCount) % kWaveCount == 1);
    }

    SUBCASE("idempotent") {
        Rng rng(5);
        for (int k = 0; k < 100; ++k) {
            const auto p = canonical_order(test::random_params(rng));
            const auto q = canonical_order(p);
            for (int j = 0; j < kWaveCount; ++j) {
                CHECK(q.waves[static_cast<std::size_t>(j)].alpha == p.waves[static_cast<std::size_t>(j)].alpha);
            }
        }
    }
}

TEST_CASE("params JSON round trip") {
    const auto p = test::textbook_params();
    const auto q = params_from_json(params_to_json(p));
    CHECK(q.offset == doctest::Approx(p.offset));
    for (int j = 0; j < kWaveCount; ++j) {
        CHECK(q.waves[static_cast<std::size_t>(j)].alpha ==
              doctest::Approx(p.waves[static_cast<std::size_t>(j)].alpha));
    }
}

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fmm/dataio.hpp"
#include "fmm/errors.hpp"
#include "testutil.hpp"

using namespace fmm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "fmm_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_ucr_row(std::ofstream& out, int cls, const std::vector<double>& samples) {
    out << static_cast<double>(cls);
    for (double v : samples) out << "," << v;
    out << "\n";
}

// Small UCR-style fixture: three textbook-derived beats per class subset.
fs::path make_ucr_fixture(const std::string& name, const std::vector<int>& classes) {
    const auto path = temp_file(name);
    std::ofstream out(path);
    const auto p = fmm::test::textbook_params();
    const auto signal = eval_beat(p, PhaseGrid(140));
    for (int cls : classes) write_ucr_row(out, cls, signal);
    return path;
}

}  // namespace

TEST_CASE("beats file round trip") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.n_beats = 12;
    spec.anomaly_fraction = 0.25;
    spec.noise_sigma = 0.02;
    spec.seed = 5;
    const auto ds = generate_synthetic(spec);

    const auto path = temp_file("roundtrip.beats");
    save_beats(path, ds.data, "deadbeef");
    const auto loaded = load_beats(path);

    CHECK(loaded.l_pad == ds.data.l_pad);
    CHECK(loaded.sample_rate == ds.data.sample_rate);
    CHECK(loaded.label_map == ds.data.label_map);
    CHECK(loaded.provenance.source == ds.data.provenance.source);
    CHECK(loaded.provenance.split == ds.data.provenance.split);
    REQUIRE(loaded.beats.size() == ds.data.beats.size());
    for (std::size_t i = 0; i < loaded.beats.size(); ++i) {
        CHECK(loaded.beats[i].label == ds.data.beats[i].label);
        CHECK(loaded.beats[i].valid_len == ds.data.beats[i].valid_len);
        CHECK(loaded.beats[i].r_peak_offset == ds.data.beats[i].r_peak_offset);
        CHECK(loaded.beats[i].samples == ds.data.beats[i].samples);  // bit-exact
    }
}

TEST_CASE("load_ecg5000: fixture files") {
    const auto train = make_ucr_fixture("ecg_train.csv", {1, 1, 2, 3, 1});
    const auto test_path = make_ucr_fixture("ecg_test.csv", {1, 4, 5});
    const auto [train_ds, test_ds] = load_ecg5000(train, test_path);

    CHECK(train_ds.beats.size() == 5);
    CHECK(test_ds.beats.size() == 3);
    CHECK(train_ds.l_pad == 140);
    CHECK(train_ds.beats[0].valid_len == 140);
    CHECK(train_ds.beats[0].label == 0);
    CHECK(train_ds.beats[2].label == 1);
    CHECK(test_ds.beats[2].label == 4);
    CHECK(train_ds.label_map.at(0) == "normal");
    CHECK(train_ds.provenance.source == "ECG5000");

    // The detect-max R location: the fixture is the textbook beat, R at 56.
    CHECK(std::abs(train_ds.beats[0].r_peak_offset - 56) <= 5);

    SUBCASE("short row is a structural error naming the line") {
        const auto bad = temp_file("ecg_bad.csv");
        std::ofstream out(bad);
        const auto signal = eval_beat(fmm::test::textbook_params(), PhaseGrid(140));
        write_ucr_row(out, 1, signal);
        std::vector<double> short_row(signal.begin(), signal.end() - 1);
        write_ucr_row(out, 1, short_row);
        out.close();
        try {
            load_ecg5000(bad, test_path);
            FAIL("expected StructuralError");
        } catch (const StructuralError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }

    SUBCASE("non-integer class is rejected") {
        const auto bad = temp_file("ecg_badclass.csv");
        std::ofstream out(bad);
        const auto signal = eval_beat(fmm::test::textbook_params(), PhaseGrid(140));
        out << "1.5";
        for (double v : signal) out << "," << v;
        out << "\n";
        out.close();
        CHECK_THROWS_AS(load_ecg5000(bad, test_path), StructuralError);
    }

    SUBCASE("malformed value is rejected with the line number") {
        const auto bad = temp_file("ecg_badvalue.csv");
        std::ofstream out(bad);
        const auto signal = eval_beat(fmm::test::textbook_params(), PhaseGrid(140));
        write_ucr_row(out, 1, signal);
        out << "2";
        for (int i = 0; i < 139; ++i) out << ",0.0";
        out << ",zzz\n";
        out.close();
        try {
            load_ecg5000(bad, test_path);
            FAIL("expected StructuralError");
        } catch (const StructuralError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("generate_synthetic") {
    SUBCASE("anomaly_fraction 0 labels everything normal") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 20;
        spec.anomaly_fraction = 0.0;
        const auto ds = generate_synthetic(spec);
        for (const auto& beat : ds.data.beats) CHECK(beat.label == 0);
        CHECK(ds.truth.size() == 20);
    }

    SUBCASE("no jitter, no noise reproduces eval_beat exactly") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 3;
        spec.noise_sigma = 0.0;
        spec.jitter = ParamJitter{0.0, 0.0, 0.0, 0.0, 0.0};
        const auto ds = generate_synthetic(spec);
        const auto expected = eval_beat(spec.base, PhaseGrid(spec.valid_len));
        for (const auto& beat : ds.data.beats) {
            for (int t = 0; t < spec.valid_len; ++t) {
                CHECK(beat.samples[static_cast<std::size_t>(t)] ==
                      doctest::Approx(expected[static_cast<std::size_t>(t)]).epsilon(1e-12));
            }
            for (int t = spec.valid_len; t < spec.l_pad; ++t) {
                CHECK(beat.samples[static_cast<std::size_t>(t)] == 0.0);
            }
        }
    }

    SUBCASE("missing-p zeroes the ground-truth P amplitude") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 30;
        spec.anomaly_fraction = 0.5;
        spec.anomaly = "missing-p";
        spec.seed = 9;
        const auto ds = generate_synthetic(spec);
        int anomalous = 0;
        for (std::size_t i = 0; i < ds.data.beats.size(); ++i) {
            if (ds.data.beats[i].label == 1) {
                ++anomalous;
                CHECK(ds.truth[i].waves[0].amplitude == 0.0);
            } else {
                CHECK(ds.truth[i].waves[0].amplitude > 0.0);
            }
        }
        CHECK(anomalous == 15);
        CHECK(ds.data.label_map.at(1) == "missing-p");
    }

    SUBCASE("wide-qrs doubles the QRS lobe widths") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 10;
        spec.anomaly_fraction = 1.0;
        spec.anomaly = "wide-qrs";
        spec.jitter = ParamJitter{0.0, 0.0, 0.0, 0.0, 0.0};
        const auto ds = generate_synthetic(spec);
        for (const auto& truth : ds.truth) {
            CHECK(truth.waves[1].omega == doctest::Approx(2.0 * spec.base.waves[1].omega));
            CHECK(truth.waves[2].omega == doctest::Approx(2.0 * spec.base.waves[2].omega));
            CHECK(truth.waves[3].omega == doctest::Approx(2.0 * spec.base.waves[3].omega));
            CHECK(truth.waves[0].omega == doctest::Approx(spec.base.waves[0].omega));
        }
    }

    SUBCASE("st-shift raises the S-to-T segment") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 2;
        spec.anomaly_fraction = 1.0;
        spec.anomaly = "st-shift";
        spec.noise_sigma = 0.0;
        spec.jitter = ParamJitter{0.0, 0.0, 0.0, 0.0, 0.0};
        const auto ds = generate_synthetic(spec);
        const auto clean = eval_beat(spec.base, PhaseGrid(spec.valid_len));
        const int s_at = fmm::test::feature_index(spec.base.waves[3].alpha, spec.valid_len);
        const int t_at = fmm::test::feature_index(spec.base.waves[4].alpha, spec.valid_len);
        const int mid = (s_at + t_at) / 2;
        CHECK(ds.data.beats[0].samples[static_cast<std::size_t>(mid)] >
              clean[static_cast<std::size_t>(mid)] + 0.05);
    }

    SUBCASE("same seed regenerates identical data") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 8;
        spec.noise_sigma = 0.05;
        spec.seed = 77;
        const auto a = generate_synthetic(spec);
        const auto b = generate_synthetic(spec);
        for (std::size_t i = 0; i < a.data.beats.size(); ++i) {
            CHECK(a.data.beats[i].samples == b.data.beats[i].samples);
        }
    }

    SUBCASE("out-of-range jitter is a validation error") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.n_beats = 50;
        spec.jitter.omega_rel = 30.0;  // pushes omega far above 1
        CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
    }

    SUBCASE("unknown preset is rejected") {
        SyntheticSpec spec = default_synthetic_spec();
        spec.anomaly = "no-such-preset";
        spec.anomaly_fraction = 0.5;
        CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
    }
}

TEST_CASE("params jsonl round trip") {
    Rng rng(15);
    std::vector<FMMBeatParams> params;
    for (int k = 0; k < 7; ++k) params.push_back(canonical_order(fmm::test::random_params(rng)));
    const auto path = temp_file("params.jsonl");
    save_params_jsonl(path, params);
    const auto loaded = load_params_jsonl(path);
    REQUIRE(loaded.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(loaded[i].offset == doctest::Approx(params[i].offset).epsilon(1e-12));
        for (int j = 0; j < kWaveCount; ++j) {
            CHECK(loaded[i].waves[static_cast<std::size_t>(j)].alpha ==
                  doctest::Approx(params[i].waves[static_cast<std::size_t>(j)].alpha).epsilon(1e-12));
        }
    }
}

TEST_CASE("synthetic oracle consistency: fit recovers the stored truth") {
    SyntheticSpec spec = default_synthetic_spec();
    spec.n_beats = 5;
    spec.noise_sigma = 0.0;
    spec.seed = 3;
    const auto ds = generate_synthetic(spec);
    const auto cfg = default_fit_config();
    for (std::size_t i = 0; i < ds.data.beats.size(); ++i) {
        const auto result = fit_beat(ds.data.beats[i], cfg);
        CHECK(result.r2 >= 0.995);
        for (int j = 0; j < kWaveCount; ++j) {
            CHECK(circular_distance(result.params.waves[static_cast<std::size_t>(j)].alpha,
                                    ds.truth[i].waves[static_cast<std::size_t>(j)].alpha) < 0.05);
        }
    }
}

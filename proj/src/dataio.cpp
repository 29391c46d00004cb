#include "fmm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "fmm/errors.hpp"
#include "fmm/rng.hpp"
#include "fmm/version.hpp"

namespace fmm {

void validate(const BeatDataset& ds) {
    if (ds.l_pad <= 0) throw ValidationError("BeatDataset: l_pad must be positive");
    for (const auto& beat : ds.beats) {
        validate(beat);
        if (static_cast<int>(beat.samples.size()) != ds.l_pad) {
            throw ValidationError("BeatDataset: beat length does not match l_pad");
        }
    }
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s, int line_no, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw StructuralError(std::string("line ") + std::to_string(line_no) + ": malformed " + what + " '" +
                              s + "'");
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

void save_beats(const std::filesystem::path& path, const BeatDataset& ds, const std::string& cfg_hash) {
    validate(ds);
    std::ofstream out(path);
    if (!out) throw StructuralError("save_beats: cannot open " + path.string());

    nlohmann::json label_map;
    for (const auto& [code, name] : ds.label_map) label_map[std::to_string(code)] = name;
    nlohmann::json header{{"layout_version", 1},
                          {"l_pad", ds.l_pad},
                          {"sample_rate", ds.sample_rate},
                          {"label_map", label_map},
                          {"provenance",
                           {{"source", ds.provenance.source},
                            {"normal_class", ds.provenance.normal_class},
                            {"split", ds.provenance.split}}},
                          {"tool_version", kToolVersion},
                          {"config_hash", cfg_hash}};
    out << header.dump() << "\n";

    for (std::size_t i = 0; i < ds.beats.size(); ++i) {
        const auto& beat = ds.beats[i];
        out << i << ',' << beat.label << ',' << beat.valid_len << ',' << beat.r_peak_offset;
        for (double s : beat.samples) out << ',' << format_double(s);
        out << '\n';
    }
    if (!out) throw StructuralError("save_beats: write failed for " + path.string());
}

BeatDataset load_beats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("load_beats: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw StructuralError("load_beats: missing header line");

    BeatDataset ds;
    try {
        const auto header = nlohmann::json::parse(line);
        if (header.at("layout_version").get<int>() != 1) {
            throw StructuralError("load_beats: unsupported layout version");
        }
        ds.l_pad = header.at("l_pad").get<int>();
        ds.sample_rate = header.at("sample_rate").get<int>();
        for (const auto& [key, value] : header.at("label_map").items()) {
            ds.label_map[std::stoi(key)] = value.get<std::string>();
        }
        const auto& prov = header.at("provenance");
        ds.provenance.source = prov.at("source").get<std::string>();
        ds.provenance.normal_class = prov.at("normal_class").get<std::string>();
        ds.provenance.split = prov.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("load_beats: bad header: ") + e.what());
    }

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        if (static_cast<int>(fields.size()) != 4 + ds.l_pad) {
            throw StructuralError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(4 + ds.l_pad) + " fields, got " +
                                  std::to_string(fields.size()));
        }
        Heartbeat beat;
        beat.label = static_cast<int>(parse_double(fields[1], line_no, "label"));
        beat.valid_len = static_cast<int>(parse_double(fields[2], line_no, "valid_len"));
        beat.r_peak_offset = static_cast<int>(parse_double(fields[3], line_no, "r_peak_offset"));
        beat.sample_rate = ds.sample_rate;
        beat.samples.reserve(static_cast<std::size_t>(ds.l_pad));
        for (int k = 0; k < ds.l_pad; ++k) {
            beat.samples.push_back(parse_double(fields[static_cast<std::size_t>(4 + k)], line_no, "sample"));
        }
        validate(beat);
        ds.beats.push_back(std::move(beat));
    }
    validate(ds);
    return ds;
}

namespace {

std::vector<std::string> split_ucr_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',' || c == '\t' || c == ' ' || c == '\r') {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

constexpr int kEcg5000Len = 140;

int locate_r_peak(const std::vector<double>& samples, int fs) {
    // The UCR files carry no peak annotation; a detect-max on the band-passed
    // beat is a serviceable substitute.
    const std::array<Biquad, 2> band = {butterworth_lowpass2(15.0, fs), butterworth_highpass2(5.0, fs)};
    const auto bp = filtfilt(band, samples, 20);
    int best = 0;
    for (std::size_t i = 1; i < bp.size(); ++i) {
        if (std::fabs(bp[i]) > std::fabs(bp[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
    }
    return best;
}

BeatDataset load_ucr_split(const std::filesystem::path& path, const std::string& split) {
    std::ifstream in(path);
    if (!in) throw StructuralError("load_ecg5000: cannot open " + path.string());
    BeatDataset ds;
    ds.l_pad = kEcg5000Len;
    ds.sample_rate = kEcg5000Len;  // nominal: one interpolated beat spans ~1 s
    ds.label_map = {{0, "normal"},
                    {1, "supraventricular"},
                    {2, "ventricular"},
                    {3, "fusion"},
                    {4, "unclassifiable"}};
    ds.provenance = {"ECG5000", "class 1 (normal)", split};

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_ucr_row(line);
        if (static_cast<int>(fields.size()) != 1 + kEcg5000Len) {
            throw StructuralError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(1 + kEcg5000Len) + " values, got " +
                                  std::to_string(fields.size()));
        }
        const double raw_class = parse_double(fields[0], line_no, "class");
        const int cls = static_cast<int>(std::lround(raw_class));
        if (std::fabs(raw_class - cls) > 1e-9 || cls < 1 || cls > 5) {
            throw StructuralError("line " + std::to_string(line_no) + ": class must be an integer in 1..5");
        }
        Heartbeat beat;
        beat.valid_len = kEcg5000Len;
        beat.label = cls - 1;
        beat.sample_rate = ds.sample_rate;
        beat.samples.reserve(kEcg5000Len);
        for (int k = 0; k < kEcg5000Len; ++k) {
            beat.samples.push_back(parse_double(fields[static_cast<std::size_t>(1 + k)], line_no, "sample"));
        }
        beat.r_peak_offset = locate_r_peak(beat.samples, ds.sample_rate);
        ds.beats.push_back(std::move(beat));
    }
    if (ds.beats.empty()) throw StructuralError("load_ecg5000: no rows in " + path.string());
    return ds;
}

}  // namespace

std::pair<BeatDataset, BeatDataset> load_ecg5000(const std::filesystem::path& train_path,
                                                 const std::filesystem::path& test_path) {
    return {load_ucr_split(train_path, "train"), load_ucr_split(test_path, "test")};
}

EcgRecord load_record_csv(const std::filesystem::path& csv_path,
                          const std::filesystem::path& meta_path) {
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw StructuralError("load_record_csv: cannot open " + meta_path.string());
    EcgRecord rec;
    try {
        nlohmann::json meta;
        meta_in >> meta;
        rec.sample_rate = meta.at("sample_rate").get<int>();
        rec.lead_id = meta.value("lead_id", "");
        rec.subject_id = meta.value("subject_id", "");
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("load_record_csv: bad sidecar: ") + e.what());
    }

    std::ifstream in(csv_path);
    if (!in) throw StructuralError("load_record_csv: cannot open " + csv_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(line.c_str(), &end);
        if (end == line.c_str()) {
            if (line_no == 1) continue;  // optional header
            throw StructuralError("line " + std::to_string(line_no) + ": malformed sample '" + line + "'");
        }
        rec.samples.push_back(v);
    }
    validate(rec);
    return rec;
}

FMMBeatParams default_synthetic_base() {
    // Frozen from an optimizer fit of a clean hand-built textbook beat
    // (see tools: synth --dump-base regenerates this block).
    FMMBeatParams p;
    p.offset = 1.0;
    p.waves = {FMMWave{0.12, 4.5239, 3.1416, 0.12},   // P
               FMMWave{0.18, 5.4350, 0.0, 0.04},      // Q
               FMMWave{1.00, 5.6549, 3.1416, 0.045},  // R
               FMMWave{0.22, 5.8748, 0.0, 0.045},     // S
               FMMWave{0.28, 0.7540, 3.1416, 0.14}};  // T
    return p;
}

SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.base = default_synthetic_base();
    return spec;
}

namespace {

FMMBeatParams jitter_params(const FMMBeatParams& base, const ParamJitter& j, Rng& rng) {
    FMMBeatParams out;
    out.offset = base.offset + rng.uniform(-j.offset_abs, j.offset_abs);
    for (int w = 0; w < kWaveCount; ++w) {
        const auto& src = base.waves[static_cast<std::size_t>(w)];
        const double amp = src.amplitude * (1.0 + rng.uniform(-j.amplitude_rel, j.amplitude_rel));
        const double alpha = src.alpha + rng.uniform(-j.alpha_abs, j.alpha_abs);
        const double beta = src.beta + rng.uniform(-j.beta_abs, j.beta_abs);
        const double omega = src.omega * (1.0 + rng.uniform(-j.omega_rel, j.omega_rel));
        if (!(omega > 0.0 && omega <= 1.0) || amp < 0.0) {
            throw ValidationError("generate_synthetic: jitter pushed parameters out of range");
        }
        out.waves[static_cast<std::size_t>(w)] = make_wave(amp, alpha, beta, omega);
    }
    return out;
}

// Sample positions of a wave's visible deflection: the narrow feature sits
// at the antipode of alpha.
int feature_index(double alpha, int valid_len) {
    const double phase = wrap_angle(alpha + std::numbers::pi);
    int idx = static_cast<int>(std::lround(phase / kTwoPi * valid_len));
    if (idx >= valid_len) idx -= valid_len;
    return idx;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_beats <= 0) throw ValidationError("generate_synthetic: n_beats must be positive");
    if (spec.valid_len < 32) throw ValidationError("generate_synthetic: valid_len must be >= 32");
    if (spec.valid_len > spec.l_pad) throw ValidationError("generate_synthetic: valid_len exceeds l_pad");
    if (!(spec.anomaly_fraction >= 0.0 && spec.anomaly_fraction <= 1.0)) {
        throw ValidationError("generate_synthetic: anomaly_fraction must lie in [0, 1]");
    }
    if (spec.anomaly_fraction > 0.0 && spec.anomaly != "missing-p" && spec.anomaly != "wide-qrs" &&
        spec.anomaly != "st-shift") {
        throw ValidationError("generate_synthetic: unknown anomaly preset '" + spec.anomaly + "'");
    }
    validate(spec.base);

    Rng rng(spec.seed);
    const int n_anom = static_cast<int>(std::lround(spec.anomaly_fraction * spec.n_beats));
    std::vector<int> is_anom(static_cast<std::size_t>(spec.n_beats), 0);
    std::fill(is_anom.begin(), is_anom.begin() + n_anom, 1);
    rng.shuffle(is_anom);

    SyntheticDataset out;
    out.data.l_pad = spec.l_pad;
    out.data.sample_rate = spec.sample_rate;
    out.data.label_map = {{0, "normal"}};
    if (n_anom > 0) out.data.label_map[1] = spec.anomaly;
    out.data.provenance = {"synthetic", "label 0 (generated normal)", "all"};

    const PhaseGrid grid(spec.valid_len);
    for (int i = 0; i < spec.n_beats; ++i) {
        FMMBeatParams params = jitter_params(spec.base, spec.jitter, rng);
        const bool anomalous = is_anom[static_cast<std::size_t>(i)] != 0;
        double st_shift = 0.0;
        if (anomalous) {
            if (spec.anomaly == "missing-p") {
                params.waves[0].amplitude = 0.0;
            } else if (spec.anomaly == "wide-qrs") {
                for (int w = 1; w <= 3; ++w) {
                    auto& wave = params.waves[static_cast<std::size_t>(w)];
                    wave.omega = std::min(1.0, wave.omega * 2.0);
                }
            } else if (spec.anomaly == "st-shift") {
                st_shift = 0.2 * params.waves[2].amplitude;
            }
        }

        auto signal = eval_beat(params, grid);
        if (st_shift != 0.0) {
            const int s_idx = feature_index(params.waves[3].alpha, spec.valid_len);
            const int t_idx = feature_index(params.waves[4].alpha, spec.valid_len);
            for (int k = s_idx; k != t_idx; k = (k + 1) % spec.valid_len) {
                signal[static_cast<std::size_t>(k)] += st_shift;
            }
        }
        if (spec.noise_sigma > 0.0) {
            for (double& s : signal) s += rng.normal(0.0, spec.noise_sigma);
        }

        Heartbeat beat;
        beat.samples.assign(static_cast<std::size_t>(spec.l_pad), 0.0);
        std::copy(signal.begin(), signal.end(), beat.samples.begin());
        beat.valid_len = spec.valid_len;
        beat.r_peak_offset = feature_index(params.waves[2].alpha, spec.valid_len);
        beat.label = anomalous ? 1 : 0;
        beat.sample_rate = spec.sample_rate;
        validate(beat);
        out.data.beats.push_back(std::move(beat));
        out.truth.push_back(params);
    }
    return out;
}

void save_params_jsonl(const std::filesystem::path& path, std::span<const FMMBeatParams> params) {
    std::ofstream out(path);
    if (!out) throw StructuralError("save_params_jsonl: cannot open " + path.string());
    for (std::size_t i = 0; i < params.size(); ++i) {
        nlohmann::json j = params_to_json(params[i]);
        j["beat_id"] = i;
        out << j.dump() << "\n";
    }
    if (!out) throw StructuralError("save_params_jsonl: write failed for " + path.string());
}

std::vector<FMMBeatParams> load_params_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("load_params_jsonl: cannot open " + path.string());
    std::vector<FMMBeatParams> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(params_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw StructuralError("load_params_jsonl: line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

namespace {

void apply_jitter_json(const nlohmann::json& j, ParamJitter& jit) {
    jit.amplitude_rel = j.value("amplitude_rel", jit.amplitude_rel);
    jit.alpha_abs = j.value("alpha_abs", jit.alpha_abs);
    jit.beta_abs = j.value("beta_abs", jit.beta_abs);
    jit.omega_rel = j.value("omega_rel", jit.omega_rel);
    jit.offset_abs = j.value("offset_abs", jit.offset_abs);
}

}  // namespace

void apply_config_json(const nlohmann::json& j, FitConfig& fit, TrainConfig& train, SyntheticSpec& synth,
                       double& baseline_cutoff_hz) {
    try {
        if (j.contains("fit")) {
            const auto& f = j.at("fit");
            fit.alpha_grid_size = f.value("alpha_grid_size", fit.alpha_grid_size);
            if (f.contains("omega_grid")) fit.omega_grid = f.at("omega_grid").get<std::vector<double>>();
            fit.max_waves = f.value("max_waves", fit.max_waves);
            fit.n_backfit_passes = f.value("n_backfit_passes", fit.n_backfit_passes);
            fit.refine_iters = f.value("refine_iters", fit.refine_iters);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            train.learning_rate = t.value("learning_rate", train.learning_rate);
            train.warmup_epochs = t.value("warmup_epochs", train.warmup_epochs);
            train.train_epochs = t.value("train_epochs", train.train_epochs);
            train.batch_size = t.value("batch_size", train.batch_size);
            train.infer_batch_size = t.value("infer_batch_size", train.infer_batch_size);
            train.early_stop_patience = t.value("early_stop_patience", train.early_stop_patience);
            train.val_split = t.value("val_split", train.val_split);
        }
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            synth.n_beats = s.value("n_beats", synth.n_beats);
            if (s.contains("base")) synth.base = params_from_json(s.at("base"));
            if (s.contains("jitter")) apply_jitter_json(s.at("jitter"), synth.jitter);
            synth.noise_sigma = s.value("noise_sigma", synth.noise_sigma);
            synth.anomaly = s.value("anomaly", synth.anomaly);
            synth.anomaly_fraction = s.value("anomaly_fraction", synth.anomaly_fraction);
            synth.valid_len = s.value("valid_len", synth.valid_len);
            synth.l_pad = s.value("l_pad", synth.l_pad);
            synth.sample_rate = s.value("sample_rate", synth.sample_rate);
        }
        if (j.contains("preprocess")) {
            baseline_cutoff_hz = j.at("preprocess").value("cutoff_hz", baseline_cutoff_hz);
        }
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("config: ") + e.what());
    }
}

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec) {
    return nlohmann::json{{"n_beats", spec.n_beats},
                          {"base", params_to_json(spec.base)},
                          {"jitter",
                           {{"amplitude_rel", spec.jitter.amplitude_rel},
                            {"alpha_abs", spec.jitter.alpha_abs},
                            {"beta_abs", spec.jitter.beta_abs},
                            {"omega_rel", spec.jitter.omega_rel},
                            {"offset_abs", spec.jitter.offset_abs}}},
                          {"noise_sigma", spec.noise_sigma},
                          {"anomaly", spec.anomaly},
                          {"anomaly_fraction", spec.anomaly_fraction},
                          {"valid_len", spec.valid_len},
                          {"l_pad", spec.l_pad},
                          {"sample_rate", spec.sample_rate},
                          {"seed", spec.seed}};
}

}  // namespace fmm

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fmm/fit.hpp"
#include "fmm/preprocess.hpp"
#include "fmm/train.hpp"
#include "fmm/wave.hpp"

namespace fmm {

struct Provenance {
    std::string source;
    std::string normal_class;
    std::string split;
};

struct BeatDataset {
    std::vector<Heartbeat> beats;
    int l_pad = 0;
    int sample_rate = 0;
    std::map<int, std::string> label_map;  // label code -> name; 0 is always "normal"
    Provenance provenance;
};

void validate(const BeatDataset& ds);

/// Beats file: one JSON header line (layout_version, l_pad, sample_rate,
/// label_map, provenance, tool_version, config_hash) followed by CSV rows
/// beat_id,label,valid_len,r_peak_offset,s_0..s_{l_pad-1}. Doubles are
/// written with 17 significant digits so a round-trip is exact.
void save_beats(const std::filesystem::path& path, const BeatDataset& ds, const std::string& cfg_hash);
BeatDataset load_beats(const std::filesystem::path& path);

/// UCR-format ECG5000: first column integer class 1..5, then 140 samples.
/// Class 1 maps to normal (label 0); classes 2..5 become labels 1..4.
/// The R-peak offset is located by a detect-max on the band-passed beat.
std::pair<BeatDataset, BeatDataset> load_ecg5000(const std::filesystem::path& train_path,
                                                 const std::filesystem::path& test_path);

/// Raw recording ingestion: single-column CSV (optional header) plus a
/// sidecar JSON {"sample_rate":..., "lead_id":..., "subject_id":...}.
EcgRecord load_record_csv(const std::filesystem::path& csv_path,
                          const std::filesystem::path& meta_path);

struct ParamJitter {
    double amplitude_rel = 0.10;
    double alpha_abs = 0.05;
    double beta_abs = 0.10;
    double omega_rel = 0.10;
    double offset_abs = 0.05;
};

/// Named anomaly presets: "missing-p" zeroes the P amplitude, "wide-qrs"
/// doubles the Q/R/S lobe widths, "st-shift" raises the segment between the
/// S and T deflections.
struct SyntheticSpec {
    int n_beats = 500;
    FMMBeatParams base;
    ParamJitter jitter;
    double noise_sigma = 0.01;
    std::string anomaly = "missing-p";
    double anomaly_fraction = 0.0;
    int valid_len = 140;
    int l_pad = 160;
    int sample_rate = 140;
    std::uint64_t seed = 0;
};

/// Baseline five-wave beat used by the synthetic generator; values were
/// frozen from an optimizer fit of a clean textbook beat.
FMMBeatParams default_synthetic_base();
SyntheticSpec default_synthetic_spec();

struct SyntheticDataset {
    BeatDataset data;
    std::vector<FMMBeatParams> truth;  // post-transform generator parameters
};

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// JSON-lines interchange for fitted / generated parameters.
void save_params_jsonl(const std::filesystem::path& path, std::span<const FMMBeatParams> params);
std::vector<FMMBeatParams> load_params_jsonl(const std::filesystem::path& path);

/// Config file glue (--config): one JSON object with optional "fit",
/// "train", "synth" and "preprocess" sections.
void apply_config_json(const nlohmann::json& j, FitConfig& fit, TrainConfig& train, SyntheticSpec& synth,
                       double& baseline_cutoff_hz);
nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);

}  // namespace fmm

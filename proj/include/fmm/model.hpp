#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fmm/head.hpp"
#include "fmm/nn.hpp"

namespace fmm {

/// Architecture knobs shared by the baseline and the FMM variant. The
/// defaults give the dumbbell encoder L_pad -> 256 -> 128 -> 32; the baseline
/// decoder mirrors it, the FMM variant replaces it with the head.
struct ArchConfig {
    std::vector<int> encoder_sizes{256, 128, 32};
    double dropout = 0.1;
    int head_hidden = 256;
    double omega_max = 0.5;
};

struct Autoencoder {
    MLP encoder;
    std::variant<MLP, FMMHead> decoder;
    int l_pad = 0;
    std::uint64_t init_seed = 0;
};

bool has_fmm_head(const Autoencoder& model);
int latent_dim(const Autoencoder& model);

Autoencoder make_dense_autoencoder(int l_pad, const ArchConfig& arch, std::uint64_t seed);
Autoencoder make_fmm_autoencoder(int l_pad, const ArchConfig& arch, std::uint64_t seed);

struct AutoencoderGrads {
    MLPGrads encoder;
    std::variant<MLPGrads, HeadGrads> decoder;
};

std::vector<ParamView> collect_params(Autoencoder& model);
std::vector<GradView> collect_grads(const AutoencoderGrads& grads, const Autoencoder& model);

struct AutoencoderCache {
    ForwardCache encoder;
    HeadCache head;            // FMM variant only
    ReconstructCache recon;    // FMM variant only
    ForwardCache decoder_mlp;  // baseline only
    Matrix coeffs;             // FMM variant only
};

/// Full forward pass: encode, decode, reconstruct. For the FMM variant the
/// coefficient batch is exposed in the cache (and return value).
struct AutoencoderOutput {
    Matrix reconstruction;  // B x l_pad
    Matrix coeffs;          // B x 31, empty for the baseline
};

AutoencoderOutput autoencoder_forward(const Autoencoder& model, const Matrix& x,
                                      std::span<const int> valid_lens, bool training, Rng& rng,
                                      AutoencoderCache* cache = nullptr);

/// Backward from d(loss)/d(reconstruction); fills parameter gradients.
void autoencoder_backward(const Autoencoder& model, const AutoencoderCache& cache,
                          const Matrix& upstream_recon, AutoencoderGrads& grads);

/// Backward from d(loss)/d(coefficients) for the warm-up regression phase.
void autoencoder_backward_coeffs(const Autoencoder& model, const AutoencoderCache& cache,
                                 const Matrix& upstream_coeffs, AutoencoderGrads& grads);

/// Deep parameter snapshot for best-epoch restore.
std::vector<Eigen::ArrayXd> snapshot_params(Autoencoder& model);
void restore_params(Autoencoder& model, const std::vector<Eigen::ArrayXd>& snapshot);

inline constexpr int kCheckpointLayoutVersion = 1;

/// Binary container: little-endian u32 header length, JSON header
/// (architecture, layout version, seed, omega_max, parameter index), then
/// raw little-endian f64 parameter blocks in index order.
void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path);
Autoencoder load_checkpoint(const std::filesystem::path& path);

}  // namespace fmm

#pragma once

#include <span>
#include <variant>
#include <vector>

#include "fmm/nn.hpp"
#include "fmm/preprocess.hpp"
#include "fmm/wave.hpp"

namespace fmm {

/// Latent batch: rows are samples. Sequence latents (time_steps > 0) store
/// each sample row-major as [t0 features..., t1 features...].
struct Latent {
    Matrix data;
    int time_steps = 0;  // 0 for plain 2D latents
    int features = 0;
};

/// Identity keeps 2D latents as-is.
struct IdentityPooling {};
/// Flatten turns a (B, T, F) latent into (B, T*F).
struct FlattenPooling {};
/// Shared linear map applied to each timestep's feature vector, giving (B, T).
struct TimeLinearPooling {
    Vector weights;  // F
    double bias = 0.0;
};

using PoolingSpec = std::variant<IdentityPooling, FlattenPooling, TimeLinearPooling>;

Matrix pool_forward(const PoolingSpec& spec, const Latent& latent);

/// Decoder replacement: maps any pooled latent to the 31 constrained FMM
/// coefficients. fc1 is latent->hidden with tanh, fc2 hidden->31 linear;
/// amplitude entries pass through softplus, omega entries through a sigmoid
/// scaled to (0, omega_max), sine/cosine entries through a sigmoid scaled to
/// (-1, 1), and the offset stays linear.
struct FMMHead {
    PoolingSpec pooling;
    MLP net;  // exactly [fc1 tanh, fc2 linear(31)]
    double omega_max = 0.5;

    DenseLayer& fc1() { return net.layers[0]; }
    DenseLayer& fc2() { return net.layers[1]; }
    const DenseLayer& fc1() const { return net.layers[0]; }
    const DenseLayer& fc2() const { return net.layers[1]; }
};

void validate(const FMMHead& head);

FMMHead make_fmm_head(int latent_dim, int hidden, double omega_max, Rng& rng);

struct HeadCache {
    ForwardCache net;
    Matrix raw;  // fc2 output before the per-coefficient activations
};

/// Pooled 2D latent -> activated coefficient batch (B x 31).
Matrix head_forward(const FMMHead& head, const Matrix& latent, bool training, Rng& rng,
                    HeadCache* cache = nullptr);

struct HeadGrads {
    MLPGrads net;
};

/// Backward through activations and both layers; returns dL/d(latent).
Matrix head_backward(const FMMHead& head, const HeadCache& cache, const Matrix& upstream,
                     HeadGrads& grads);

std::vector<ParamView> collect_params(FMMHead& head, const std::string& prefix);
std::vector<GradView> collect_grads(const HeadGrads& grads, const std::string& prefix);

struct ReconstructCache {
    int l_pad = 0;
    std::vector<int> valid_lens;
    Matrix coeffs;
    // Per sample, per wave: kWaveCount x valid_len matrices of intermediates.
    std::vector<Matrix> sin_half, cos_half, denom, sin_phi, cos_phi;
};

/// Evaluates each coefficient row on a valid_len-sized phase grid and places
/// the signal in positions [0, valid_len), zeros elsewhere up to l_pad.
/// Angles are taken as atan2 of the sine/cosine entries, so unnormalized
/// pairs are accepted.
Matrix reconstruct(const Matrix& coeffs, std::span<const int> valid_lens, int l_pad,
                   ReconstructCache* cache = nullptr);

/// Exact gradient of the reconstruction w.r.t. the 31 coefficients.
Matrix reconstruct_backward(const ReconstructCache& cache, const Matrix& upstream);

struct LossValue {
    double loss = 0.0;
    Matrix grad;  // d(loss)/d(first argument)
};

/// Mean over the batch of sum_k weights[k]*(pred-target)^2 / 31.
/// Default weights are 1 with 10 on the six R-wave entries.
std::vector<double> default_regression_weights();
LossValue regression_loss(const Matrix& pred, const Matrix& target, std::span<const double> weights);

/// Mean over the batch of per-sample MSE restricted to [0, valid_len);
/// padded positions contribute exactly zero loss and gradient.
LossValue reconstruction_loss(const Matrix& pred_signal, std::span<const Heartbeat> beats);

}  // namespace fmm

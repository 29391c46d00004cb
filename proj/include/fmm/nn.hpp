#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fmm/rng.hpp"

namespace fmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Numerically stable scalar activations; guarded up to |x| ~ 1e3 and beyond.
double softplus(double x);
double sigmoid(double x);
double sigmoid_scaled(double x, double lo, double hi);
double relu(double x);

enum class Activation { Linear, Relu, Tanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::Linear;
};

/// Glorot-uniform weights, zero bias.
DenseLayer make_dense_layer(int in, int out, Activation activation, Rng& rng);

/// Plain fully connected stack. Dropout masks (unscaled Bernoulli keep masks)
/// are applied after every hidden activation during training only; the output
/// layer is never masked.
struct MLP {
    std::vector<DenseLayer> layers;
    double dropout_rate = 0.0;
};

/// Intermediates captured by forward for the matching backward call.
struct ForwardCache {
    const MLP* model = nullptr;
    Matrix input;
    std::vector<Matrix> pre;    // Z_l
    std::vector<Matrix> post;   // A_l after activation and mask
    std::vector<Matrix> masks;  // empty when not training or rate == 0
    bool training = false;
};

/// Runs the batch (rows = samples) through the stack. Dropout draws come from
/// rng only when training. Throws StructuralError naming the layer on a shape
/// mismatch.
Matrix forward(const MLP& m, const Matrix& x, bool training, Rng& rng, ForwardCache* cache = nullptr);

struct LayerGrads {
    Matrix dweights;
    Vector dbias;
};

struct MLPGrads {
    std::vector<LayerGrads> layers;
};

MLPGrads zero_grads(const MLP& m);
void accumulate(MLPGrads& into, const MLPGrads& other);

/// Backpropagates upstream = dL/d(output) through the cached forward pass.
/// Returns dL/d(input); fills grads. Throws StructuralError on a cache that
/// does not belong to this model.
Matrix backward(const MLP& m, const ForwardCache& cache, const Matrix& upstream, MLPGrads& grads);

/// Named view over one parameter block, used by the optimizer.
struct ParamView {
    std::string name;
    double* data = nullptr;
    std::ptrdiff_t size = 0;
};

struct GradView {
    std::string name;
    const double* data = nullptr;
    std::ptrdiff_t size = 0;
};

std::vector<ParamView> collect_params(MLP& m, const std::string& prefix);
std::vector<GradView> collect_grads(const MLPGrads& g, const std::string& prefix);

/// Adam with bias correction; beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<Eigen::ArrayXd> m;
    std::vector<Eigen::ArrayXd> v;
};

AdamState make_adam(const std::vector<ParamView>& params, double learning_rate);

/// One update step. Throws TrainingError carrying the parameter name when a
/// gradient is non-finite; throws StructuralError on misaligned views.
void adam_step(AdamState& state, std::vector<ParamView>& params, const std::vector<GradView>& grads);

}  // namespace fmm

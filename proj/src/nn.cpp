#include "fmm/nn.hpp"

#include <cmath>

#include "fmm/errors.hpp"

namespace fmm {

double softplus(double x) {
    // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double sigmoid_scaled(double x, double lo, double hi) { return lo + (hi - lo) * sigmoid(x); }

double relu(double x) { return x > 0.0 ? x : 0.0; }

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "linear";
}

Activation activation_from_name(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw StructuralError("unknown activation: " + name);
}

DenseLayer make_dense_layer(int in, int out, Activation activation, Rng& rng) {
    if (in <= 0 || out <= 0) throw ValidationError("make_dense_layer: sizes must be positive");
    DenseLayer layer;
    layer.weights.resize(out, in);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = Vector::Zero(out);
    layer.activation = activation;
    return layer;
}

namespace {

Matrix apply_activation(const Matrix& z, Activation a) {
    switch (a) {
        case Activation::Linear: return z;
        case Activation::Relu: return z.cwiseMax(0.0);
        case Activation::Tanh: return z.array().tanh().matrix();
    }
    return z;
}

Matrix activation_derivative(const Matrix& z, const Matrix& post_act, Activation a) {
    switch (a) {
        case Activation::Linear: return Matrix::Ones(z.rows(), z.cols());
        case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
        case Activation::Tanh: return (1.0 - post_act.array().square()).matrix();
    }
    return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

Matrix forward(const MLP& m, const Matrix& x, bool training, Rng& rng, ForwardCache* cache) {
    if (m.layers.empty()) throw StructuralError("forward: empty MLP");
    if (cache) {
        *cache = ForwardCache{};
        cache->model = &m;
        cache->input = x;
        cache->training = training;
    }
    Matrix cur = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const auto& layer = m.layers[l];
        if (cur.cols() != layer.weights.cols()) {
            throw StructuralError("forward: input width " + std::to_string(cur.cols()) + " does not match layer " +
                                  std::to_string(l) + " input size " + std::to_string(layer.weights.cols()));
        }
        Matrix z = cur * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        Matrix a = apply_activation(z, layer.activation);

        const bool hidden = l + 1 < m.layers.size();
        Matrix mask;
        if (training && hidden && m.dropout_rate > 0.0) {
            mask.resize(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < a.rows(); ++r) {
                for (Eigen::Index c = 0; c < a.cols(); ++c) {
                    mask(r, c) = rng.uniform() < m.dropout_rate ? 0.0 : 1.0;
                }
            }
            a = a.cwiseProduct(mask);
        }
        if (cache) {
            cache->pre.push_back(z);
            cache->post.push_back(a);
            cache->masks.push_back(std::move(mask));
        }
        cur = std::move(a);
    }
    return cur;
}

MLPGrads zero_grads(const MLP& m) {
    MLPGrads g;
    g.layers.reserve(m.layers.size());
    for (const auto& layer : m.layers) {
        g.layers.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
                            Vector::Zero(layer.bias.size())});
    }
    return g;
}

void accumulate(MLPGrads& into, const MLPGrads& other) {
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        into.layers[l].dweights += other.layers[l].dweights;
        into.layers[l].dbias += other.layers[l].dbias;
    }
}

Matrix backward(const MLP& m, const ForwardCache& cache, const Matrix& upstream, MLPGrads& grads) {
    if (cache.model != &m || cache.pre.size() != m.layers.size()) {
        throw StructuralError("backward: cache does not match this model");
    }
    if (upstream.rows() != cache.input.rows() ||
        upstream.cols() != m.layers.back().weights.rows()) {
        throw StructuralError("backward: upstream gradient shape mismatch");
    }
    grads = zero_grads(m);
    Matrix g = upstream;
    for (int l = static_cast<int>(m.layers.size()) - 1; l >= 0; --l) {
        const auto ls = static_cast<std::size_t>(l);
        const auto& layer = m.layers[ls];
        if (cache.masks[ls].size() > 0) {
            g = g.cwiseProduct(cache.masks[ls]);
        }
        const Matrix dz =
            g.cwiseProduct(activation_derivative(cache.pre[ls], cache.post[ls], layer.activation));
        const Matrix& layer_input = l == 0 ? cache.input : cache.post[ls - 1];
        grads.layers[ls].dweights = dz.transpose() * layer_input;
        grads.layers[ls].dbias = dz.colwise().sum().transpose();
        g = dz * layer.weights;
    }
    return g;
}

std::vector<ParamView> collect_params(MLP& m, const std::string& prefix) {
    std::vector<ParamView> out;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        out.push_back({prefix + ".layer" + std::to_string(l) + ".weights", layer.weights.data(),
                       layer.weights.size()});
        out.push_back(
            {prefix + ".layer" + std::to_string(l) + ".bias", layer.bias.data(), layer.bias.size()});
    }
    return out;
}

std::vector<GradView> collect_grads(const MLPGrads& g, const std::string& prefix) {
    std::vector<GradView> out;
    for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const auto& layer = g.layers[l];
        out.push_back({prefix + ".layer" + std::to_string(l) + ".weights", layer.dweights.data(),
                       layer.dweights.size()});
        out.push_back(
            {prefix + ".layer" + std::to_string(l) + ".bias", layer.dbias.data(), layer.dbias.size()});
    }
    return out;
}

AdamState make_adam(const std::vector<ParamView>& params, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.push_back(Eigen::ArrayXd::Zero(p.size));
        s.v.push_back(Eigen::ArrayXd::Zero(p.size));
    }
    return s;
}

void adam_step(AdamState& state, std::vector<ParamView>& params, const std::vector<GradView>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw StructuralError("adam_step: parameter/gradient count mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != grads[i].name || params[i].size != grads[i].size) {
            throw StructuralError("adam_step: misaligned views at " + params[i].name);
        }
        for (std::ptrdiff_t k = 0; k < grads[i].size; ++k) {
            if (!std::isfinite(grads[i].data[k])) {
                throw TrainingError("adam_step: non-finite gradient in " + params[i].name);
            }
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Eigen::Map<Eigen::ArrayXd> p(params[i].data, params[i].size);
        Eigen::Map<const Eigen::ArrayXd> g(grads[i].data, grads[i].size);
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.square();
        p -= state.learning_rate * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + state.epsilon);
    }
}

}  // namespace fmm

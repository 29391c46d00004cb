#include "fmm/head.hpp"

#include <cmath>

#include "fmm/errors.hpp"

namespace fmm {

Matrix pool_forward(const PoolingSpec& spec, const Latent& latent) {
    if (std::holds_alternative<IdentityPooling>(spec)) {
        if (latent.time_steps != 0) throw StructuralError("identity pooling expects a 2D latent");
        return latent.data;
    }
    if (latent.time_steps <= 0 || latent.features <= 0 ||
        latent.data.cols() != static_cast<Eigen::Index>(latent.time_steps) * latent.features) {
        throw StructuralError("sequence pooling expects a (B, T, F) latent");
    }
    if (std::holds_alternative<FlattenPooling>(spec)) {
        return latent.data;  // already stored flattened per sample
    }
    const auto& tl = std::get<TimeLinearPooling>(spec);
    if (tl.weights.size() != latent.features) {
        throw StructuralError("time-linear pooling weight size does not match latent features");
    }
    Matrix out(latent.data.rows(), latent.time_steps);
    for (Eigen::Index b = 0; b < latent.data.rows(); ++b) {
        for (int t = 0; t < latent.time_steps; ++t) {
            double acc = tl.bias;
            for (int f = 0; f < latent.features; ++f) {
                acc += latent.data(b, static_cast<Eigen::Index>(t) * latent.features + f) * tl.weights(f);
            }
            out(b, t) = acc;
        }
    }
    return out;
}

void validate(const FMMHead& head) {
    if (head.net.layers.size() != 2) throw StructuralError("FMMHead: expected exactly fc1 and fc2");
    if (head.net.layers[1].weights.rows() != kCoefficientCount) {
        throw StructuralError("FMMHead: fc2 must output 31 coefficients");
    }
    if (!(head.omega_max > 0.0 && head.omega_max <= 1.0)) {
        throw ValidationError("FMMHead: omega_max must lie in (0, 1]");
    }
}

FMMHead make_fmm_head(int latent_dim, int hidden, double omega_max, Rng& rng) {
    FMMHead head;
    head.pooling = IdentityPooling{};
    head.net.layers.push_back(make_dense_layer(latent_dim, hidden, Activation::Tanh, rng));
    head.net.layers.push_back(make_dense_layer(hidden, kCoefficientCount, Activation::Linear, rng));
    head.net.dropout_rate = 0.0;
    head.omega_max = omega_max;
    validate(head);
    return head;
}

namespace {

enum class CoeffKind { Offset, Amplitude, SinCos, Omega };

CoeffKind kind_of(int col) {
    if (col == coeff::kOffset) return CoeffKind::Offset;
    switch ((col - 1) % 6) {
        case 0: return CoeffKind::Amplitude;
        case 5: return CoeffKind::Omega;
        default: return CoeffKind::SinCos;
    }
}

}  // namespace

Matrix head_forward(const FMMHead& head, const Matrix& latent, bool training, Rng& rng, HeadCache* cache) {
    validate(head);
    HeadCache local;
    HeadCache* c = cache ? cache : &local;
    c->raw = forward(head.net, latent, training, rng, &c->net);
    Matrix out = c->raw;
    for (Eigen::Index col = 0; col < out.cols(); ++col) {
        switch (kind_of(static_cast<int>(col))) {
            case CoeffKind::Offset:
                break;
            case CoeffKind::Amplitude:
                for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, col) = softplus(out(r, col));
                break;
            case CoeffKind::SinCos:
                for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, col) = sigmoid_scaled(out(r, col), -1.0, 1.0);
                break;
            case CoeffKind::Omega:
                for (Eigen::Index r = 0; r < out.rows(); ++r) {
                    out(r, col) = sigmoid_scaled(out(r, col), 0.0, head.omega_max);
                }
                break;
        }
    }
    return out;
}

Matrix head_backward(const FMMHead& head, const HeadCache& cache, const Matrix& upstream, HeadGrads& grads) {
    Matrix draw = upstream;
    for (Eigen::Index col = 0; col < draw.cols(); ++col) {
        switch (kind_of(static_cast<int>(col))) {
            case CoeffKind::Offset:
                break;
            case CoeffKind::Amplitude:
                for (Eigen::Index r = 0; r < draw.rows(); ++r) draw(r, col) *= sigmoid(cache.raw(r, col));
                break;
            case CoeffKind::SinCos:
                for (Eigen::Index r = 0; r < draw.rows(); ++r) {
                    const double s = sigmoid(cache.raw(r, col));
                    draw(r, col) *= 2.0 * s * (1.0 - s);
                }
                break;
            case CoeffKind::Omega:
                for (Eigen::Index r = 0; r < draw.rows(); ++r) {
                    const double s = sigmoid(cache.raw(r, col));
                    draw(r, col) *= head.omega_max * s * (1.0 - s);
                }
                break;
        }
    }
    return backward(head.net, cache.net, draw, grads.net);
}

std::vector<ParamView> collect_params(FMMHead& head, const std::string& prefix) {
    return collect_params(head.net, prefix);
}

std::vector<GradView> collect_grads(const HeadGrads& grads, const std::string& prefix) {
    return collect_grads(grads.net, prefix);
}

Matrix reconstruct(const Matrix& coeffs, std::span<const int> valid_lens, int l_pad, ReconstructCache* cache) {
    if (coeffs.cols() != kCoefficientCount) {
        throw StructuralError("reconstruct: expected 31 coefficient columns, got " +
                              std::to_string(coeffs.cols()));
    }
    if (static_cast<std::size_t>(coeffs.rows()) != valid_lens.size()) {
        throw StructuralError("reconstruct: one valid_len per row required");
    }
    for (int v : valid_lens) {
        if (v < 1) throw ValidationError("reconstruct: valid_len must be >= 1");
        if (v > l_pad) throw ValidationError("reconstruct: valid_len exceeds l_pad");
    }

    const Eigen::Index batch = coeffs.rows();
    Matrix out = Matrix::Zero(batch, l_pad);
    if (cache) {
        *cache = ReconstructCache{};
        cache->l_pad = l_pad;
        cache->valid_lens.assign(valid_lens.begin(), valid_lens.end());
        cache->coeffs = coeffs;
        cache->sin_half.resize(static_cast<std::size_t>(batch));
        cache->cos_half.resize(static_cast<std::size_t>(batch));
        cache->denom.resize(static_cast<std::size_t>(batch));
        cache->sin_phi.resize(static_cast<std::size_t>(batch));
        cache->cos_phi.resize(static_cast<std::size_t>(batch));
    }

    for (Eigen::Index b = 0; b < batch; ++b) {
        const int len = valid_lens[static_cast<std::size_t>(b)];
        const PhaseGrid grid(len);
        if (cache) {
            cache->sin_half[static_cast<std::size_t>(b)].resize(kWaveCount, len);
            cache->cos_half[static_cast<std::size_t>(b)].resize(kWaveCount, len);
            cache->denom[static_cast<std::size_t>(b)].resize(kWaveCount, len);
            cache->sin_phi[static_cast<std::size_t>(b)].resize(kWaveCount, len);
            cache->cos_phi[static_cast<std::size_t>(b)].resize(kWaveCount, len);
        }
        for (int t = 0; t < len; ++t) out(b, t) = coeffs(b, coeff::kOffset);
        for (int j = 0; j < kWaveCount; ++j) {
            const double amp = coeffs(b, coeff::amplitude(j));
            const double sa = coeffs(b, coeff::sin_alpha(j));
            const double ca = coeffs(b, coeff::cos_alpha(j));
            const double sb = coeffs(b, coeff::sin_beta(j));
            const double cb = coeffs(b, coeff::cos_beta(j));
            const double om = coeffs(b, coeff::omega(j));
            const double alpha = std::atan2(sa, ca);
            const double beta = std::atan2(sb, cb);
            for (int t = 0; t < len; ++t) {
                const double half = 0.5 * (grid.at(t) - alpha);
                const double sh = std::sin(half);
                const double ch = std::cos(half);
                const double d = ch * ch + om * om * sh * sh;
                const double phi = beta + 2.0 * std::atan2(om * sh, ch);
                const double sp = std::sin(phi);
                const double cp = std::cos(phi);
                out(b, t) += amp * cp;
                if (cache) {
                    cache->sin_half[static_cast<std::size_t>(b)](j, t) = sh;
                    cache->cos_half[static_cast<std::size_t>(b)](j, t) = ch;
                    cache->denom[static_cast<std::size_t>(b)](j, t) = d;
                    cache->sin_phi[static_cast<std::size_t>(b)](j, t) = sp;
                    cache->cos_phi[static_cast<std::size_t>(b)](j, t) = cp;
                }
            }
        }
    }
    return out;
}

Matrix reconstruct_backward(const ReconstructCache& cache, const Matrix& upstream) {
    const Eigen::Index batch = cache.coeffs.rows();
    if (upstream.rows() != batch || upstream.cols() != cache.l_pad) {
        throw StructuralError("reconstruct_backward: upstream shape mismatch");
    }
    Matrix grad = Matrix::Zero(batch, kCoefficientCount);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto bs = static_cast<std::size_t>(b);
        const int len = cache.valid_lens[bs];
        for (int j = 0; j < kWaveCount; ++j) {
            const double amp = cache.coeffs(b, coeff::amplitude(j));
            const double sa = cache.coeffs(b, coeff::sin_alpha(j));
            const double ca = cache.coeffs(b, coeff::cos_alpha(j));
            const double sb = cache.coeffs(b, coeff::sin_beta(j));
            const double cb = cache.coeffs(b, coeff::cos_beta(j));
            const double om = cache.coeffs(b, coeff::omega(j));
            // atan2 gradients scale with the inverse squared radius; the
            // clamp only matters at the (0, 0) singular point itself.
            const double ra2 = std::max(sa * sa + ca * ca, 1e-30);
            const double rb2 = std::max(sb * sb + cb * cb, 1e-30);
            double g_amp = 0.0, g_alpha = 0.0, g_beta = 0.0, g_om = 0.0;
            for (int t = 0; t < len; ++t) {
                const double up = upstream(b, t);
                if (up == 0.0) continue;
                const double sh = cache.sin_half[bs](j, t);
                const double ch = cache.cos_half[bs](j, t);
                const double d = cache.denom[bs](j, t);
                const double sp = cache.sin_phi[bs](j, t);
                const double cp = cache.cos_phi[bs](j, t);
                const double dphi = -amp * sp * up;  // d(contribution)/d(phi)
                g_amp += up * cp;
                g_alpha += dphi * (-om / d);
                g_beta += dphi;
                g_om += dphi * (2.0 * sh * ch / d);
            }
            grad(b, coeff::amplitude(j)) += g_amp;
            grad(b, coeff::sin_alpha(j)) += g_alpha * (ca / ra2);
            grad(b, coeff::cos_alpha(j)) += g_alpha * (-sa / ra2);
            grad(b, coeff::sin_beta(j)) += g_beta * (cb / rb2);
            grad(b, coeff::cos_beta(j)) += g_beta * (-sb / rb2);
            grad(b, coeff::omega(j)) += g_om;
        }
        double g_offset = 0.0;
        for (int t = 0; t < len; ++t) g_offset += upstream(b, t);
        grad(b, coeff::kOffset) = g_offset;
    }
    return grad;
}

std::vector<double> default_regression_weights() {
    std::vector<double> w(kCoefficientCount, 1.0);
    for (int k = coeff::amplitude(coeff::kRWave); k <= coeff::omega(coeff::kRWave); ++k) {
        w[static_cast<std::size_t>(k)] = 10.0;
    }
    return w;
}

LossValue regression_loss(const Matrix& pred, const Matrix& target, std::span<const double> weights) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw StructuralError("regression_loss: shape mismatch");
    }
    if (static_cast<Eigen::Index>(weights.size()) != pred.cols()) {
        throw StructuralError("regression_loss: one weight per coefficient required");
    }
    const double batch = static_cast<double>(pred.rows());
    const double denom = static_cast<double>(pred.cols()) * batch;
    LossValue out;
    out.grad = Matrix::Zero(pred.rows(), pred.cols());
    for (Eigen::Index r = 0; r < pred.rows(); ++r) {
        for (Eigen::Index c = 0; c < pred.cols(); ++c) {
            const double diff = pred(r, c) - target(r, c);
            const double w = weights[static_cast<std::size_t>(c)];
            out.loss += w * diff * diff / denom;
            out.grad(r, c) = 2.0 * w * diff / denom;
        }
    }
    return out;
}

LossValue reconstruction_loss(const Matrix& pred_signal, std::span<const Heartbeat> beats) {
    if (static_cast<std::size_t>(pred_signal.rows()) != beats.size()) {
        throw StructuralError("reconstruction_loss: one beat per row required");
    }
    const double batch = static_cast<double>(beats.size());
    LossValue out;
    out.grad = Matrix::Zero(pred_signal.rows(), pred_signal.cols());
    for (Eigen::Index b = 0; b < pred_signal.rows(); ++b) {
        const auto& beat = beats[static_cast<std::size_t>(b)];
        if (static_cast<Eigen::Index>(beat.samples.size()) != pred_signal.cols()) {
            throw StructuralError("reconstruction_loss: beat length does not match prediction width");
        }
        const double v = static_cast<double>(beat.valid_len);
        for (int t = 0; t < beat.valid_len; ++t) {
            const double diff = pred_signal(b, t) - beat.samples[static_cast<std::size_t>(t)];
            out.loss += diff * diff / (v * batch);
            out.grad(b, t) = 2.0 * diff / (v * batch);
        }
    }
    return out;
}

}  // namespace fmm

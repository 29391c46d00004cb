#include "fmm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "fmm/errors.hpp"
#include "fmm/head.hpp"

namespace fmm {

void validate(const TrainConfig& cfg) {
    if (cfg.warmup_epochs < 0 || cfg.train_epochs < 0) throw ValidationError("TrainConfig: epochs must be >= 0");
    if (!(cfg.val_split > 0.0 && cfg.val_split < 1.0)) {
        throw ValidationError("TrainConfig: val_split must lie in (0, 1)");
    }
    if (cfg.batch_size < 1 || cfg.infer_batch_size < 1) {
        throw ValidationError("TrainConfig: batch sizes must be positive");
    }
    if (cfg.early_stop_patience < 0) throw ValidationError("TrainConfig: patience must be >= 0");
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("TrainConfig: learning_rate must be positive");
}

std::vector<double> default_lr_sweep() { return {1e-5, 5e-5, 1e-4, 5e-4, 1e-3}; }

Matrix beats_to_matrix(std::span<const Heartbeat> beats, int l_pad) {
    Matrix x = Matrix::Zero(static_cast<Eigen::Index>(beats.size()), l_pad);
    for (std::size_t b = 0; b < beats.size(); ++b) {
        const auto& beat = beats[b];
        if (static_cast<int>(beat.samples.size()) != l_pad) {
            throw StructuralError("beats_to_matrix: beat length does not match l_pad");
        }
        // Copy the valid region only, so stray padding content can never
        // reach the encoder.
        for (int t = 0; t < beat.valid_len; ++t) {
            x(static_cast<Eigen::Index>(b), t) = beat.samples[static_cast<std::size_t>(t)];
        }
    }
    return x;
}

namespace {

constexpr std::uint64_t kWarmupStream = 0x77617265;
constexpr std::uint64_t kAnomalyStream = 0x616e6f6d;

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

Split make_split(std::size_t n, double val_split, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::lround(val_split * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    Split s;
    s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return s;
}

struct BatchData {
    Matrix x;
    std::vector<int> valid_lens;
    std::vector<Heartbeat> beats;  // shallow copies for the loss
    Matrix targets;                // warm-up only
};

BatchData gather(std::span<const Heartbeat> beats, const Matrix& targets_all,
                 std::span<const std::size_t> order, std::size_t lo, std::size_t hi, int l_pad,
                 bool with_targets) {
    BatchData b;
    const auto count = static_cast<Eigen::Index>(hi - lo);
    b.valid_lens.reserve(static_cast<std::size_t>(count));
    b.beats.reserve(static_cast<std::size_t>(count));
    for (std::size_t i = lo; i < hi; ++i) {
        b.beats.push_back(beats[order[i]]);
        b.valid_lens.push_back(beats[order[i]].valid_len);
    }
    b.x = beats_to_matrix(b.beats, l_pad);
    if (with_targets) {
        b.targets.resize(count, targets_all.cols());
        for (std::size_t i = lo; i < hi; ++i) {
            b.targets.row(static_cast<Eigen::Index>(i - lo)) =
                targets_all.row(static_cast<Eigen::Index>(order[i]));
        }
    }
    return b;
}

enum class Objective { Regression, Reconstruction };

double evaluate_loss(const Autoencoder& model, std::span<const Heartbeat> beats, const Matrix& targets_all,
                     std::span<const std::size_t> idx, Objective obj, int batch_size, Rng& rng,
                     std::span<const double> weights) {
    double total = 0.0;
    std::size_t done = 0;
    while (done < idx.size()) {
        const std::size_t hi = std::min(done + static_cast<std::size_t>(batch_size), idx.size());
        BatchData batch =
            gather(beats, targets_all, idx, done, hi, model.l_pad, obj == Objective::Regression);
        AutoencoderCache cache;
        const auto out = autoencoder_forward(model, batch.x, batch.valid_lens, false, rng, &cache);
        const LossValue loss = obj == Objective::Regression
                                   ? regression_loss(out.coeffs, batch.targets, weights)
                                   : reconstruction_loss(out.reconstruction, batch.beats);
        total += loss.loss * static_cast<double>(hi - done);
        done = hi;
    }
    return total / static_cast<double>(idx.size());
}

TrainReport run_training(Autoencoder& model, std::span<const Heartbeat> beats, const Matrix& targets_all,
                         Objective obj, int epochs, const TrainConfig& cfg, std::uint64_t stream,
                         const std::string& phase) {
    TrainReport report;
    report.phase = phase;
    if (epochs == 0) return report;

    Rng rng = Rng(cfg.seed).fork(stream);
    const Split split = make_split(beats.size(), cfg.val_split, rng);
    const auto weights = default_regression_weights();

    auto params = collect_params(model);
    AdamState adam = make_adam(params, cfg.learning_rate);

    std::vector<Eigen::ArrayXd> best_snapshot = snapshot_params(model);
    report.best_val_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;

    std::vector<std::size_t> order = split.train;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double train_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t hi = std::min(done + static_cast<std::size_t>(cfg.batch_size), order.size());
            BatchData batch =
                gather(beats, targets_all, order, done, hi, model.l_pad, obj == Objective::Regression);
            AutoencoderCache cache;
            const auto out = autoencoder_forward(model, batch.x, batch.valid_lens, true, rng, &cache);
            AutoencoderGrads grads;
            LossValue loss;
            if (obj == Objective::Regression) {
                loss = regression_loss(out.coeffs, batch.targets, weights);
                autoencoder_backward_coeffs(model, cache, loss.grad, grads);
            } else {
                loss = reconstruction_loss(out.reconstruction, batch.beats);
                autoencoder_backward(model, cache, loss.grad, grads);
            }
            auto grad_views = collect_grads(grads, model);
            adam_step(adam, params, grad_views);
            train_loss += loss.loss * static_cast<double>(hi - done);
            done = hi;
        }
        train_loss /= static_cast<double>(order.size());

        const double val_loss =
            evaluate_loss(model, beats, targets_all, split.val, obj, cfg.batch_size, rng, weights);
        const auto t1 = std::chrono::steady_clock::now();

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = train_loss;
        stats.val_loss = val_loss;
        stats.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        report.epochs.push_back(stats);

        if (val_loss < report.best_val_loss) {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best_snapshot = snapshot_params(model);
            since_best = 0;
        } else {
            ++since_best;
            if (since_best > cfg.early_stop_patience) break;
        }
    }

    restore_params(model, best_snapshot);
    return report;
}

}  // namespace

TrainReport warmup(Autoencoder& model, std::span<const Heartbeat> beats,
                   std::span<const CoefficientVector> targets, const TrainConfig& cfg) {
    validate(cfg);
    if (!has_fmm_head(model)) throw ValidationError("warmup: model has no FMM head to regress");
    if (beats.empty() || targets.empty()) throw ValidationError("warmup: empty target set");
    if (beats.size() != targets.size()) {
        throw ValidationError("warmup: every beat needs a matching oracle target");
    }
    if (beats.size() < 2) throw ValidationError("warmup: need at least 2 beats for a validation split");

    Matrix target_mat(static_cast<Eigen::Index>(targets.size()), kCoefficientCount);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (int k = 0; k < kCoefficientCount; ++k) {
            target_mat(static_cast<Eigen::Index>(i), k) = targets[i].values[static_cast<std::size_t>(k)];
        }
    }
    return run_training(model, beats, target_mat, Objective::Regression, cfg.warmup_epochs, cfg,
                        kWarmupStream, "warmup");
}

TrainReport train_anomaly(Autoencoder& model, std::span<const Heartbeat> beats, const TrainConfig& cfg) {
    validate(cfg);
    if (beats.size() < 2) throw ValidationError("train_anomaly: need at least 2 beats");
    for (std::size_t i = 0; i < beats.size(); ++i) {
        if (beats[i].label != kLabelNormal) {
            throw ValidationError("train_anomaly: beat " + std::to_string(i) +
                                  " is not labeled normal; anomaly training uses normal data only");
        }
    }
    Matrix empty_targets;
    return run_training(model, beats, empty_targets, Objective::Reconstruction, cfg.train_epochs, cfg,
                        kAnomalyStream, "anomaly");
}

double anomaly_score(const Autoencoder& model, const Heartbeat& beat) {
    std::vector<Heartbeat> one{beat};
    return anomaly_scores(model, one, 1)[0];
}

std::vector<double> anomaly_scores(const Autoencoder& model, std::span<const Heartbeat> beats,
                                   int batch_size) {
    if (batch_size < 1) throw ValidationError("anomaly_scores: batch_size must be positive");
    std::vector<double> scores;
    scores.reserve(beats.size());
    Rng rng(0);  // inference draws nothing
    std::size_t done = 0;
    while (done < beats.size()) {
        const std::size_t hi = std::min(done + static_cast<std::size_t>(batch_size), beats.size());
        std::vector<Heartbeat> chunk(beats.begin() + static_cast<std::ptrdiff_t>(done),
                                     beats.begin() + static_cast<std::ptrdiff_t>(hi));
        std::vector<int> valid_lens;
        valid_lens.reserve(chunk.size());
        for (const auto& b : chunk) valid_lens.push_back(b.valid_len);
        const Matrix x = beats_to_matrix(chunk, model.l_pad);
        const auto out = autoencoder_forward(model, x, valid_lens, false, rng, nullptr);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const auto& beat = chunk[b];
            double mse = 0.0;
            for (int t = 0; t < beat.valid_len; ++t) {
                const double diff =
                    out.reconstruction(static_cast<Eigen::Index>(b), t) - beat.samples[static_cast<std::size_t>(t)];
                mse += diff * diff;
            }
            scores.push_back(mse / static_cast<double>(beat.valid_len));
        }
        done = hi;
    }
    return scores;
}

Matrix extract_coefficients(const Autoencoder& model, std::span<const Heartbeat> beats, int batch_size) {
    if (!has_fmm_head(model)) throw ValidationError("extract_coefficients: model has no FMM head");
    if (batch_size < 1) throw ValidationError("extract_coefficients: batch_size must be positive");
    Matrix coeffs(static_cast<Eigen::Index>(beats.size()), kCoefficientCount);
    Rng rng(0);
    const auto& head = std::get<FMMHead>(model.decoder);
    std::size_t done = 0;
    while (done < beats.size()) {
        const std::size_t hi = std::min(done + static_cast<std::size_t>(batch_size), beats.size());
        std::vector<Heartbeat> chunk(beats.begin() + static_cast<std::ptrdiff_t>(done),
                                     beats.begin() + static_cast<std::ptrdiff_t>(hi));
        const Matrix x = beats_to_matrix(chunk, model.l_pad);
        const Matrix latent = forward(model.encoder, x, false, rng, nullptr);
        const Matrix c = head_forward(head, latent, false, rng, nullptr);
        coeffs.middleRows(static_cast<Eigen::Index>(done), c.rows()) = c;
        done = hi;
    }
    return coeffs;
}

}  // namespace fmm

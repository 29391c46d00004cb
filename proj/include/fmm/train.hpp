#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmm/model.hpp"
#include "fmm/preprocess.hpp"

namespace fmm {

struct TrainConfig {
    double learning_rate = 1e-4;
    int warmup_epochs = 500;
    int train_epochs = 500;
    int batch_size = 64;
    int infer_batch_size = 16;
    int early_stop_patience = 25;
    double val_split = 0.1;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Learning rates swept when picking the best model.
std::vector<double> default_lr_sweep();

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainReport {
    std::string phase;
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::string checkpoint;
};

/// Supervised warm-up: regresses the head's coefficients onto oracle targets
/// (weighted MSE with the 10x R-wave weight). Restores the best-validation
/// parameters before returning. Requires one target per beat; beats whose
/// oracle fit failed must be excluded by the caller.
TrainReport warmup(Autoencoder& model, std::span<const Heartbeat> beats,
                   std::span<const CoefficientVector> targets, const TrainConfig& cfg);

/// Reconstruction training on normal beats only (any abnormal or unlabeled
/// beat is rejected). Early-stops on validation loss and restores the best
/// epoch's parameters.
TrainReport train_anomaly(Autoencoder& model, std::span<const Heartbeat> beats, const TrainConfig& cfg);

/// Reconstruction MSE over the valid samples of one beat. Padding content
/// beyond valid_len never influences the score.
double anomaly_score(const Autoencoder& model, const Heartbeat& beat);

/// Batched scoring, same contract as anomaly_score.
std::vector<double> anomaly_scores(const Autoencoder& model, std::span<const Heartbeat> beats,
                                   int batch_size);

/// Head coefficients for a beat batch (FMM decoder required).
Matrix extract_coefficients(const Autoencoder& model, std::span<const Heartbeat> beats, int batch_size);

/// Rows are beats; padding positions are written as exact zeros.
Matrix beats_to_matrix(std::span<const Heartbeat> beats, int l_pad);

}  // namespace fmm

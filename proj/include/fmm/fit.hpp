#pragma once

#include <span>
#include <vector>

#include "fmm/preprocess.hpp"
#include "fmm/wave.hpp"

namespace fmm {

/// Knobs for the backfitting optimizer. The grid seeds the derivative-free
/// search in (alpha, omega); the linear parameters (M, A, beta) have a
/// closed-form solve per grid cell.
struct FitConfig {
    int alpha_grid_size = 64;
    std::vector<double> omega_grid;  // defaults to 16 log-spaced points in [0.01, 1]
    int max_waves = 7;
    int n_backfit_passes = 2;
    int refine_iters = 30;
};

FitConfig default_fit_config();
void validate(const FitConfig& cfg);

struct SingleWaveFit {
    FMMWave wave;
    double offset_increment = 0.0;
    double sse = 0.0;
};

/// Fits one wave plus an offset increment to the residual by exhaustive
/// (alpha, omega) grid search with a per-cell linear solve, then local
/// pattern-search refinement. A constant residual yields A = 0 and the mean
/// as offset increment.
SingleWaveFit fit_single_wave(std::span<const double> residual, const PhaseGrid& grid,
                              const FitConfig& cfg);

/// Labels five of the fitted candidates as P, Q, R, S, T. r_alpha is the
/// expected alpha of the R wave (for beats cut by the 40/60 rule this is the
/// R-peak grid phase shifted by pi, the alpha convention of the wave model).
/// R is the strongest candidate with alpha within pi/4 of r_alpha (global
/// maximum as fallback); Q and S are its circular neighbors; P and T are the
/// strongest candidates in the two halves of the remaining arc. Unfilled
/// slots become zero-amplitude placeholders at their half-arc midpoint.
std::array<FMMWave, kWaveCount> assign_waves(std::span<const FMMWave> candidates, double r_alpha);

struct FitResult {
    FMMBeatParams params;
    double residual_rmse = 0.0;
    double r2 = 0.0;
    int waves_considered = 0;
};

/// Full per-beat extraction: greedy single-wave fits on the running residual,
/// backfitting sweeps that refit each wave against the others' residual
/// (a sweep never increases the SSE), wave assignation, and a final offset
/// refit. Operates on the valid samples only.
FitResult fit_beat(const Heartbeat& beat, const FitConfig& cfg);

/// Fits many beats with a bounded worker pool; results keep input order.
/// threads <= 1 forces fully sequential execution.
std::vector<FitResult> fit_beats(std::span<const Heartbeat> beats, const FitConfig& cfg, int threads);

}  // namespace fmm

#include "fmm/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include <Eigen/Dense>

#include "fmm/errors.hpp"

namespace fmm {

FitConfig default_fit_config() {
    FitConfig cfg;
    const int n = 16;
    cfg.omega_grid.reserve(n);
    const double lo = std::log(0.01), hi = std::log(1.0);
    for (int i = 0; i < n; ++i) {
        cfg.omega_grid.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / (n - 1)));
    }
    return cfg;
}

void validate(const FitConfig& cfg) {
    if (cfg.alpha_grid_size < 4) throw ValidationError("FitConfig: alpha_grid_size too small");
    if (cfg.omega_grid.empty()) throw ValidationError("FitConfig: omega_grid must be non-empty");
    for (double w : cfg.omega_grid) {
        if (!(w > 0.0 && w <= 1.0)) throw ValidationError("FitConfig: omega grid values must lie in (0, 1]");
    }
    if (cfg.max_waves < kWaveCount) throw ValidationError("FitConfig: max_waves must be >= 5");
    if (cfg.n_backfit_passes < 0 || cfg.refine_iters < 0) {
        throw ValidationError("FitConfig: pass counts must be non-negative");
    }
}

namespace {

constexpr double kOmegaFloor = 1e-4;

/// Least-squares fit of r(t) ~ m + x1*cos(phi0) + x2*sin(phi0) for a fixed
/// (alpha, omega). cos/sin of phi0 come from the half-angle rational
/// identities, so the inner loop is transcendental-free:
///   cos(phi0) = (c^2 - w^2 s^2) / (c^2 + w^2 s^2)
///   sin(phi0) = 2 w s c / (c^2 + w^2 s^2)
/// with s = sin((t-alpha)/2), c = cos((t-alpha)/2).
struct CellFit {
    double m = 0.0, x1 = 0.0, x2 = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

CellFit solve_cell(std::span<const double> r, std::span<const double> sin_half,
                   std::span<const double> cos_half, double omega, double sum_r, double sum_r2) {
    const std::size_t n = r.size();
    const double w2 = omega * omega;
    double s1 = 0.0, s2 = 0.0, s11 = 0.0, s22 = 0.0, s12 = 0.0, r1 = 0.0, r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = cos_half[i];
        const double s = sin_half[i];
        const double c2 = c * c;
        const double s2q = s * s;
        const double d = c2 + w2 * s2q;
        const double b1 = (c2 - w2 * s2q) / d;
        const double b2 = 2.0 * omega * s * c / d;
        s1 += b1;
        s2 += b2;
        s11 += b1 * b1;
        s22 += b2 * b2;
        s12 += b1 * b2;
        r1 += r[i] * b1;
        r2 += r[i] * b2;
    }
    const double nn = static_cast<double>(n);
    // Normal equations for (m, x1, x2); solved by Cramer's rule.
    const double a11 = nn, a12 = s1, a13 = s2;
    const double a22 = s11, a23 = s12, a33 = s22;
    const double det = a11 * (a22 * a33 - a23 * a23) - a12 * (a12 * a33 - a23 * a13) +
                       a13 * (a12 * a23 - a22 * a13);
    CellFit fit;
    if (std::fabs(det) < 1e-12 * std::max(1.0, nn * nn * nn)) return fit;  // degenerate basis
    const double b1 = sum_r, b2 = r1, b3 = r2;
    fit.m = (b1 * (a22 * a33 - a23 * a23) - a12 * (b2 * a33 - a23 * b3) + a13 * (b2 * a23 - a22 * b3)) / det;
    fit.x1 = (a11 * (b2 * a33 - a23 * b3) - b1 * (a12 * a33 - a23 * a13) + a13 * (a12 * b3 - b2 * a13)) / det;
    fit.x2 = (a11 * (a22 * b3 - b2 * a23) - a12 * (a12 * b3 - b2 * a13) + b1 * (a12 * a23 - a22 * a13)) / det;
    fit.sse = sum_r2 - (fit.m * b1 + fit.x1 * b2 + fit.x2 * b3);
    if (fit.sse < 0.0) fit.sse = 0.0;  // identity can go slightly negative in fp
    return fit;
}

void half_angles(const PhaseGrid& grid, double alpha, std::vector<double>& sin_half,
                 std::vector<double>& cos_half) {
    const int n = grid.size();
    sin_half.resize(static_cast<std::size_t>(n));
    cos_half.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double half = 0.5 * (grid.at(i) - alpha);
        sin_half[static_cast<std::size_t>(i)] = std::sin(half);
        cos_half[static_cast<std::size_t>(i)] = std::cos(half);
    }
}

SingleWaveFit to_wave(double alpha, double omega, const CellFit& cell) {
    SingleWaveFit out;
    const double amp = std::hypot(cell.x1, cell.x2);
    // Sign folds into beta, keeping A >= 0.
    const double beta = amp > 0.0 ? wrap_angle(std::atan2(-cell.x2, cell.x1)) : 0.0;
    out.wave = FMMWave{amp, wrap_angle(alpha), beta, std::clamp(omega, kOmegaFloor, 1.0)};
    out.offset_increment = cell.m;
    out.sse = cell.sse;
    return out;
}

}  // namespace

struct ResidualSums {
    double sum_r = 0.0;
    double sum_r2 = 0.0;
};

ResidualSums residual_sums(std::span<const double> residual) {
    ResidualSums s;
    for (double v : residual) {
        s.sum_r += v;
        s.sum_r2 += v * v;
    }
    return s;
}

double resolution_floor(const PhaseGrid& grid) {
    // Features narrower than a couple of grid samples are unidentifiable and
    // degenerate into single-sample spikes; keep omega above the resolution.
    return std::max(kOmegaFloor, 3.0 / static_cast<double>(grid.size()));
}

struct SearchState {
    double alpha = 0.0;
    double omega = 1.0;
    CellFit cell;
};

void pattern_search(std::span<const double> residual, const PhaseGrid& grid, const ResidualSums& sums,
                    double omega_floor, double step_alpha, double step_log_omega, int iters,
                    SearchState& best) {
    std::vector<double> sin_half, cos_half;
    auto probe = [&](double alpha, double omega) {
        half_angles(grid, alpha, sin_half, cos_half);
        const CellFit cell = solve_cell(residual, sin_half, cos_half, omega, sums.sum_r, sums.sum_r2);
        if (cell.sse < best.cell.sse) {
            best.cell = cell;
            best.alpha = alpha;
            best.omega = omega;
            return true;
        }
        return false;
    };
    for (int iter = 0; iter < iters; ++iter) {
        bool improved = false;
        improved |= probe(best.alpha - step_alpha, best.omega);
        improved |= probe(best.alpha + step_alpha, best.omega);
        improved |= probe(best.alpha, std::clamp(best.omega * std::exp(-step_log_omega), omega_floor, 1.0));
        improved |= probe(best.alpha, std::clamp(best.omega * std::exp(step_log_omega), omega_floor, 1.0));
        if (!improved) {
            step_alpha *= 0.5;
            step_log_omega *= 0.5;
        }
    }
}

bool near_constant(const ResidualSums& sums, std::size_t n, double* mean_out) {
    const double mean = sums.sum_r / static_cast<double>(n);
    const double sst = sums.sum_r2 - sums.sum_r * mean;
    *mean_out = mean;
    return sst <= 1e-15 * std::max(1.0, sums.sum_r2);
}

/// Local polish of an existing wave against a residual: the warm start plus
/// the same pattern search that the grid fit finishes with. Used by the
/// backfitting sweeps, which must not relocate waves across the beat.
SingleWaveFit refine_wave(std::span<const double> residual, const PhaseGrid& grid, const FitConfig& cfg,
                          const FMMWave& warm) {
    const auto sums = residual_sums(residual);
    double mean = 0.0;
    if (near_constant(sums, residual.size(), &mean)) {
        SingleWaveFit out;
        out.wave = FMMWave{0.0, 0.0, 0.0, 1.0};
        out.offset_increment = mean;
        out.sse = std::max(sums.sum_r2 - sums.sum_r * mean, 0.0);
        return out;
    }
    const double omega_floor = resolution_floor(grid);
    SearchState best;
    best.alpha = warm.alpha;
    best.omega = std::clamp(warm.omega, omega_floor, 1.0);
    {
        std::vector<double> sin_half, cos_half;
        half_angles(grid, best.alpha, sin_half, cos_half);
        best.cell = solve_cell(residual, sin_half, cos_half, best.omega, sums.sum_r, sums.sum_r2);
    }
    const double step_alpha = 0.5 * kTwoPi / static_cast<double>(cfg.alpha_grid_size);
    const double step_log_omega =
        0.5 * (cfg.omega_grid.size() > 1 ? std::log(cfg.omega_grid[1] / cfg.omega_grid[0]) : 0.3);
    pattern_search(residual, grid, sums, omega_floor, step_alpha, step_log_omega, 2 * cfg.refine_iters,
                   best);
    return to_wave(best.alpha, best.omega, best.cell);
}

// Joint damped Gauss-Newton polish of all wave parameters plus the offset.
// The backfitting solution provides the basin; this stage removes the
// mutual-compensation bias that per-wave sweeps cannot (waves trading
// amplitude and direction inside the QRS complex).
void lm_polish(std::span<const double> signal, const PhaseGrid& grid, double omega_floor,
               FMMBeatParams& params, int max_iters) {
    const int n = grid.size();
    constexpr int kDim = 1 + 4 * kWaveCount;  // M + (A, alpha, beta, omega) per wave

    auto model_residual = [&](const FMMBeatParams& p, Eigen::VectorXd& r) {
        for (int i = 0; i < n; ++i) {
            double acc = p.offset;
            for (const auto& w : p.waves) acc += wave_value(w, grid.at(i));
            r(i) = signal[static_cast<std::size_t>(i)] - acc;
        }
    };

    Eigen::VectorXd r(n);
    model_residual(params, r);
    double sse = r.squaredNorm();
    double lambda = 1e-4;

    Eigen::MatrixXd jac(n, kDim);
    for (int iter = 0; iter < max_iters; ++iter) {
        for (int i = 0; i < n; ++i) {
            const double t = grid.at(i);
            jac(i, 0) = 1.0;
            for (int j = 0; j < kWaveCount; ++j) {
                const auto& w = params.waves[static_cast<std::size_t>(j)];
                const double half = 0.5 * (t - w.alpha);
                const double sh = std::sin(half);
                const double ch = std::cos(half);
                const double d = ch * ch + w.omega * w.omega * sh * sh;
                const double phi = w.beta + 2.0 * std::atan2(w.omega * sh, ch);
                const double sp = std::sin(phi);
                const double cp = std::cos(phi);
                const int base = 1 + 4 * j;
                jac(i, base + 0) = cp;                                      // dA
                jac(i, base + 1) = w.amplitude * sp * w.omega / d;          // dalpha
                jac(i, base + 2) = -w.amplitude * sp;                       // dbeta
                jac(i, base + 3) = -w.amplitude * sp * 2.0 * sh * ch / d;   // domega
            }
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        bool stepped = false;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (int k = 0; k < kDim; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(jtr);

            FMMBeatParams trial = params;
            trial.offset += delta(0);
            for (int j = 0; j < kWaveCount; ++j) {
                auto& w = trial.waves[static_cast<std::size_t>(j)];
                const int base = 1 + 4 * j;
                w.amplitude += delta(base + 0);
                w.alpha = wrap_angle(w.alpha + delta(base + 1));
                w.beta = wrap_angle(w.beta + delta(base + 2));
                w.omega = std::clamp(w.omega + delta(base + 3), omega_floor, 1.0);
                if (w.amplitude < 0.0) {
                    w.amplitude = -w.amplitude;
                    w.beta = wrap_angle(w.beta + std::numbers::pi);
                }
            }
            Eigen::VectorXd trial_r(n);
            model_residual(trial, trial_r);
            const double trial_sse = trial_r.squaredNorm();
            if (trial_sse < sse) {
                const double gain = sse - trial_sse;
                params = trial;
                r = std::move(trial_r);
                sse = trial_sse;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                if (gain <= 1e-12 * std::max(sse, 1e-300)) iter = max_iters;  // converged
                break;
            }
            lambda *= 4.0;
        }
        if (!stepped) break;
    }
}

SingleWaveFit fit_single_wave(std::span<const double> residual, const PhaseGrid& grid,
                              const FitConfig& cfg) {
    validate(cfg);
    if (residual.size() < 16) throw ValidationError("fit_single_wave: residual must have >= 16 samples");
    if (static_cast<int>(residual.size()) != grid.size()) {
        throw StructuralError("fit_single_wave: residual length does not match grid");
    }

    const auto sums = residual_sums(residual);
    double mean = 0.0;
    if (near_constant(sums, residual.size(), &mean)) {
        SingleWaveFit out;
        out.wave = FMMWave{0.0, 0.0, 0.0, 1.0};
        out.offset_increment = mean;
        out.sse = std::max(sums.sum_r2 - sums.sum_r * mean, 0.0);
        return out;
    }

    const double omega_floor = resolution_floor(grid);

    std::vector<double> sin_half, cos_half;
    SearchState best;
    for (int ai = 0; ai < cfg.alpha_grid_size; ++ai) {
        const double alpha = kTwoPi * static_cast<double>(ai) / static_cast<double>(cfg.alpha_grid_size);
        half_angles(grid, alpha, sin_half, cos_half);
        double prev_omega = -1.0;
        for (double omega : cfg.omega_grid) {
            omega = std::max(omega, omega_floor);
            if (omega == prev_omega) continue;
            prev_omega = omega;
            const CellFit cell = solve_cell(residual, sin_half, cos_half, omega, sums.sum_r, sums.sum_r2);
            if (cell.sse < best.cell.sse) {
                best.cell = cell;
                best.alpha = alpha;
                best.omega = omega;
            }
        }
    }

    const double step_alpha = kTwoPi / static_cast<double>(cfg.alpha_grid_size);
    const double step_log_omega =
        cfg.omega_grid.size() > 1 ? std::log(cfg.omega_grid[1] / cfg.omega_grid[0]) : 0.3;
    pattern_search(residual, grid, sums, omega_floor, step_alpha, step_log_omega, cfg.refine_iters, best);

    return to_wave(best.alpha, best.omega, best.cell);
}

std::array<FMMWave, kWaveCount> assign_waves(std::span<const FMMWave> candidates, double r_alpha) {
    if (candidates.size() < kWaveCount) {
        throw ValidationError("assign_waves: need at least 5 candidates");
    }
    const std::size_t n = candidates.size();
    r_alpha = wrap_angle(r_alpha);

    double max_amp = 0.0;
    for (const auto& c : candidates) max_amp = std::max(max_amp, c.amplitude);

    // Near-zero candidates carry no morphology; they must not grab the
    // neighbor slots around R.
    std::vector<std::size_t> sig;
    for (std::size_t i = 0; i < n; ++i) {
        if (candidates[i].amplitude >= 0.05 * max_amp) sig.push_back(i);
    }
    if (sig.size() < 3) {
        sig.clear();
        for (std::size_t i = 0; i < n; ++i) sig.push_back(i);
    }

    // Two candidates whose alphas sit within their combined lobe widths
    // describe the same deflection; keep the stronger one.
    std::stable_sort(sig.begin(), sig.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].amplitude > candidates[b].amplitude;
    });
    std::vector<std::size_t> merged;
    for (std::size_t i : sig) {
        bool duplicate = false;
        for (std::size_t kept : merged) {
            if (circular_distance(candidates[i].alpha, candidates[kept].alpha) <
                1.2 * (candidates[i].omega + candidates[kept].omega)) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) merged.push_back(i);
    }
    if (merged.size() >= 3) sig = std::move(merged);

    // R: strongest candidate within pi/4 of the hint, global strongest otherwise.
    std::size_t r_idx = sig[0];
    bool found = false;
    for (std::size_t i : sig) {
        if (circular_distance(candidates[i].alpha, r_alpha) < std::numbers::pi / 4.0) {
            if (!found || candidates[i].amplitude > candidates[r_idx].amplitude) {
                r_idx = i;
                found = true;
            }
        }
    }
    if (!found) {
        for (std::size_t i : sig) {
            if (candidates[i].amplitude > candidates[r_idx].amplitude) r_idx = i;
        }
    }

    // Circular alpha order over the significant candidates.
    std::stable_sort(sig.begin(), sig.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].alpha < candidates[b].alpha;
    });
    const std::size_t m = sig.size();
    std::size_t r_pos = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (sig[i] == r_idx) r_pos = i;
    }
    const std::size_t q_idx = sig[(r_pos + m - 1) % m];
    const std::size_t s_idx = sig[(r_pos + 1) % m];

    const FMMWave& r_wave = candidates[r_idx];
    const FMMWave q_wave = q_idx != r_idx ? candidates[q_idx] : FMMWave{0.0, r_wave.alpha, 0.0, 0.1};
    const FMMWave s_wave = s_idx != r_idx && s_idx != q_idx ? candidates[s_idx]
                                                            : FMMWave{0.0, r_wave.alpha, 0.0, 0.1};

    // The remaining arc runs from S forward to Q (the long way around, not
    // through R); T candidates live in its first half, P in the second.
    const double arc_start = s_wave.alpha;
    const double arc_len = wrap_angle(q_wave.alpha - s_wave.alpha);
    const double arc_half = arc_len / 2.0;

    int p_idx = -1, t_idx = -1;
    for (std::size_t i : sig) {
        if (i == r_idx || i == q_idx || i == s_idx) continue;
        const double d = wrap_angle(candidates[i].alpha - arc_start);
        if (d > arc_len) continue;  // numerically outside the arc
        if (d >= arc_half) {
            if (p_idx < 0 || candidates[i].amplitude > candidates[static_cast<std::size_t>(p_idx)].amplitude) {
                p_idx = static_cast<int>(i);
            }
        } else {
            if (t_idx < 0 || candidates[i].amplitude > candidates[static_cast<std::size_t>(t_idx)].amplitude) {
                t_idx = static_cast<int>(i);
            }
        }
    }
    const FMMWave p_wave = p_idx >= 0 ? candidates[static_cast<std::size_t>(p_idx)]
                                      : FMMWave{0.0, wrap_angle(arc_start + 0.75 * arc_len), 0.0, 0.1};
    const FMMWave t_wave = t_idx >= 0 ? candidates[static_cast<std::size_t>(t_idx)]
                                      : FMMWave{0.0, wrap_angle(arc_start + 0.25 * arc_len), 0.0, 0.1};

    FMMBeatParams p;
    p.waves = {p_wave, q_wave, r_wave, s_wave, t_wave};
    p = canonical_order(p, coeff::kRWave);
    return p.waves;
}

FitResult fit_beat(const Heartbeat& beat, const FitConfig& cfg) {
    validate(cfg);
    validate(beat);
    if (beat.valid_len < 32) throw ValidationError("fit_beat: valid_len must be >= 32");

    const int v = beat.valid_len;
    const PhaseGrid grid(v);
    std::span<const double> raw(beat.samples.data(), static_cast<std::size_t>(v));

    // Fit on a normalized copy; the optimizer then takes the same arithmetic
    // path for any positive scaling of the input, and A and M scale exactly.
    double raw_mean = 0.0;
    for (double x : raw) raw_mean += x;
    raw_mean /= v;
    double raw_var = 0.0;
    for (double x : raw) raw_var += (x - raw_mean) * (x - raw_mean);
    const double scale = raw_var > 0.0 ? std::sqrt(raw_var / v) : 1.0;

    std::vector<double> signal(raw.begin(), raw.end());
    for (double& x : signal) x /= scale;

    double offset = 0.0;
    std::vector<FMMWave> waves;
    std::vector<double> residual(signal.begin(), signal.end());

    auto subtract_wave = [&](std::vector<double>& target, const FMMWave& w, double m_inc) {
        for (int i = 0; i < v; ++i) {
            target[static_cast<std::size_t>(i)] -= m_inc + wave_value(w, grid.at(i));
        }
    };
    auto sse_of = [&](const std::vector<double>& r) {
        double s = 0.0;
        for (double x : r) s += x * x;
        return s;
    };

    // Greedy candidate collection.
    for (int k = 0; k < cfg.max_waves; ++k) {
        const SingleWaveFit f = fit_single_wave(residual, grid, cfg);
        waves.push_back(f.wave);
        offset += f.offset_increment;
        subtract_wave(residual, f.wave, f.offset_increment);
    }

    // Backfitting sweeps: local refits against the residual of the other
    // waves, kept only when they lower the SSE, so the residual is
    // non-increasing across passes.
    auto backfit_sweep = [&](std::vector<FMMWave>& active, bool with_restart) {
        for (std::size_t j = 0; j < active.size(); ++j) {
            std::vector<double> target = residual;
            for (int i = 0; i < v; ++i) {
                target[static_cast<std::size_t>(i)] += wave_value(active[j], grid.at(i));
            }
            const double current_sse = sse_of(residual);
            SingleWaveFit f = refine_wave(target, grid, cfg, active[j]);
            if (with_restart) {
                // A fresh grid search escapes valleys the warm start cannot.
                const SingleWaveFit g = fit_single_wave(target, grid, cfg);
                if (g.sse < f.sse) f = g;
            }
            if (f.sse < current_sse) {
                active[j] = f.wave;
                offset += f.offset_increment;
                residual = std::move(target);
                subtract_wave(residual, f.wave, f.offset_increment);
            }
        }
    };
    for (int pass = 0; pass < cfg.n_backfit_passes; ++pass) backfit_sweep(waves, false);

    // The R peak sits at this grid phase; the matching wave has its alpha at
    // the antipode (a wave's narrow feature lies opposite its alpha).
    const double r_alpha =
        wrap_angle(kTwoPi * static_cast<double>(beat.r_peak_offset) / static_cast<double>(v) +
                   std::numbers::pi);

    FitResult result;
    result.waves_considered = static_cast<int>(waves.size());
    result.params.waves = assign_waves(waves, r_alpha);

    // Polish the five kept waves: the dropped candidates' signal share must
    // be reabsorbed before the residual statistics are computed.
    {
        std::vector<FMMWave> kept(result.params.waves.begin(), result.params.waves.end());
        residual.assign(signal.begin(), signal.end());
        for (const auto& w : kept) {
            for (int i = 0; i < v; ++i) {
                residual[static_cast<std::size_t>(i)] -= wave_value(w, grid.at(i));
            }
        }
        double res_mean = std::accumulate(residual.begin(), residual.end(), 0.0) / v;
        for (double& r : residual) r -= res_mean;
        offset = res_mean;
        // Sweep until the residual stops improving; the first sweeps absorb
        // the dropped candidates, later ones untangle neighboring waves.
        const int max_polish = std::max(12, cfg.n_backfit_passes);
        double prev_sse = sse_of(residual);
        for (int pass = 0; pass < max_polish; ++pass) {
            backfit_sweep(kept, pass > 0);
            const double cur_sse = sse_of(residual);
            if (prev_sse - cur_sse <= 1e-9 * std::max(prev_sse, 1e-300)) break;
            prev_sse = cur_sse;
        }
        result.params.waves = assign_waves(kept, r_alpha);
    }

    // Offset refit on the selected five, then a joint damped Gauss-Newton
    // polish to the nearest stationary point.
    {
        std::vector<double> leftover(signal.begin(), signal.end());
        for (const auto& w : result.params.waves) {
            for (int i = 0; i < v; ++i) {
                leftover[static_cast<std::size_t>(i)] -= wave_value(w, grid.at(i));
            }
        }
        result.params.offset = std::accumulate(leftover.begin(), leftover.end(), 0.0) / v;
    }
    lm_polish(signal, grid, resolution_floor(grid), result.params, 60);
    result.params = canonical_order(result.params, coeff::kRWave);

    std::vector<double> final_residual(signal.begin(), signal.end());
    for (const auto& w : result.params.waves) {
        for (int i = 0; i < v; ++i) {
            final_residual[static_cast<std::size_t>(i)] -= wave_value(w, grid.at(i));
        }
    }
    double sse = 0.0;
    for (double r : final_residual) sse += (r - result.params.offset) * (r - result.params.offset);
    result.residual_rmse = std::sqrt(sse / v);

    double mean = 0.0;
    for (double x : signal) mean += x;
    mean /= v;
    double sst = 0.0;
    for (double x : signal) sst += (x - mean) * (x - mean);
    result.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;

    // Back to the input scale.
    result.params.offset *= scale;
    for (auto& w : result.params.waves) w.amplitude *= scale;
    result.residual_rmse *= scale;
    return result;
}

std::vector<FitResult> fit_beats(std::span<const Heartbeat> beats, const FitConfig& cfg, int threads) {
    std::vector<FitResult> results(beats.size());
    if (threads <= 1) {
        for (std::size_t i = 0; i < beats.size(); ++i) results[i] = fit_beat(beats[i], cfg);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_workers = std::min<int>(threads, static_cast<int>(beats.size()));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= beats.size()) break;
                    results[i] = fit_beat(beats[i], cfg);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

}  // namespace fmm

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fmm {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Reduces an angle to [0, 2*pi).
double wrap_angle(double a);

/// Shortest arc between two angles, in [0, pi].
double circular_distance(double a, double b);

/// One frequency-modulated Moebius wave: amplitude, peak location, peak
/// direction, and lobe width. Angles are stored reduced to [0, 2*pi);
/// omega lies in (0, 1] and amplitude is non-negative.
struct FMMWave {
    double amplitude = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double omega = 1.0;
};

/// Validates invariants; throws ValidationError naming the offending field.
void validate(const FMMWave& w);

/// Builds a wave, wrapping angles into [0, 2*pi) and validating A and omega.
FMMWave make_wave(double amplitude, double alpha, double beta, double omega);

inline constexpr int kWaveCount = 5;

/// Names of the five ECG deflections in canonical order.
const char* wave_name(int index);

/// A full heartbeat: constant offset plus five waves (P, Q, R, S, T),
/// kept in the canonical alpha order (see canonical_order).
struct FMMBeatParams {
    double offset = 0.0;
    std::array<FMMWave, kWaveCount> waves{};
};

void validate(const FMMBeatParams& p);

/// Uniform phase grid t_i = 2*pi*i/n over [0, 2*pi).
class PhaseGrid {
public:
    explicit PhaseGrid(int n);
    int size() const { return n_; }
    double at(int i) const { return kTwoPi * static_cast<double>(i) / static_cast<double>(n_); }

private:
    int n_;
};

/// Wave phase phi(t) = beta + 2*atan2(omega*sin((t-alpha)/2), cos((t-alpha)/2)).
/// The atan2 form is total; it has no tan singularity anywhere on the circle.
double wave_phase(const FMMWave& w, double t);

/// Scalar wave value A*cos(phi(t)).
double wave_value(const FMMWave& w, double t);

/// Evaluates one wave on the grid.
std::vector<double> eval_wave(const FMMWave& w, const PhaseGrid& grid);

/// Evaluates offset + sum of the five waves on the grid.
std::vector<double> eval_beat(const FMMBeatParams& p, const PhaseGrid& grid);

/// Per-lead parameters for multi-lead generation; alpha and omega are shared
/// across leads while M, A and beta vary per lead.
struct LeadParams {
    double offset = 0.0;
    std::array<double, kWaveCount> amplitudes{};
    std::array<double, kWaveCount> betas{};
};

std::vector<std::vector<double>> eval_beat_multilead(std::span<const LeadParams> leads,
                                                     const std::array<double, kWaveCount>& alphas,
                                                     const std::array<double, kWaveCount>& omegas,
                                                     const PhaseGrid& grid);

inline constexpr int kCoefficientCount = 31;

/// Flat NN-facing encoding: [M, then per wave P..T: A, sin a, cos a,
/// sin b, cos b, omega]. The layout is frozen; checkpoint and golden files
/// depend on it.
struct CoefficientVector {
    std::array<double, kCoefficientCount> values{};
};

/// Index helpers into the frozen coefficient layout.
namespace coeff {
inline constexpr int kOffset = 0;
constexpr int amplitude(int wave) { return 1 + 6 * wave; }
constexpr int sin_alpha(int wave) { return 2 + 6 * wave; }
constexpr int cos_alpha(int wave) { return 3 + 6 * wave; }
constexpr int sin_beta(int wave) { return 4 + 6 * wave; }
constexpr int cos_beta(int wave) { return 5 + 6 * wave; }
constexpr int omega(int wave) { return 6 + 6 * wave; }
inline constexpr int kRWave = 2;  // canonical slot of the R wave
}  // namespace coeff

/// Splits circular parameters into sine/cosine pairs.
/// Requires p to be valid and canonically ordered.
CoefficientVector encode(const FMMBeatParams& p);

/// Rebuilds parameters from the flat encoding. Angles come from atan2 of the
/// sine/cosine pairs, so unnormalized pairs are handled uniformly.
/// Throws StructuralError on wrong length and ValidationError (naming the
/// index) on negative amplitude or out-of-range omega.
FMMBeatParams decode(std::span<const double> values);
FMMBeatParams decode(const CoefficientVector& v);

/// Reorders the five waves so alpha ascends after rotating the circle to put
/// the R wave (the hinted input index, otherwise the wave of maximal
/// amplitude) at canonical slot 2. Alpha values themselves are unchanged.
/// Equal alphas keep their input order.
FMMBeatParams canonical_order(const FMMBeatParams& p,
                              std::optional<int> r_index_hint = std::nullopt);

/// JSON interchange format for fit results and warm-up targets.
nlohmann::json params_to_json(const FMMBeatParams& p);
FMMBeatParams params_from_json(const nlohmann::json& j);

}  // namespace fmm

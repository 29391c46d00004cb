#include "fmm/wave.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fmm/errors.hpp"

namespace fmm {

double wrap_angle(double a) {
    double r = std::fmod(a, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    // fmod can land exactly on 2*pi after the correction when a is a tiny
    // negative number.
    if (r >= kTwoPi) r = 0.0;
    return r;
}

double circular_distance(double a, double b) {
    double d = std::fabs(wrap_angle(a) - wrap_angle(b));
    return std::min(d, kTwoPi - d);
}

void validate(const FMMWave& w) {
    if (!(w.amplitude >= 0.0)) throw ValidationError("FMMWave: amplitude must be >= 0");
    if (!(w.omega > 0.0 && w.omega <= 1.0)) throw ValidationError("FMMWave: omega must lie in (0, 1]");
    if (!(w.alpha >= 0.0 && w.alpha < kTwoPi)) throw ValidationError("FMMWave: alpha must lie in [0, 2*pi)");
    if (!(w.beta >= 0.0 && w.beta < kTwoPi)) throw ValidationError("FMMWave: beta must lie in [0, 2*pi)");
}

FMMWave make_wave(double amplitude, double alpha, double beta, double omega) {
    FMMWave w{amplitude, wrap_angle(alpha), wrap_angle(beta), omega};
    validate(w);
    return w;
}

void validate(const FMMBeatParams& p) {
    if (!std::isfinite(p.offset)) throw ValidationError("FMMBeatParams: offset must be finite");
    for (const auto& w : p.waves) validate(w);
}

const char* wave_name(int index) {
    static const char* names[kWaveCount] = {"P", "Q", "R", "S", "T"};
    return names[index];
}

PhaseGrid::PhaseGrid(int n) : n_(n) {
    if (n <= 0) throw ValidationError("PhaseGrid: sample count must be positive");
}

double wave_phase(const FMMWave& w, double t) {
    const double half = 0.5 * (t - w.alpha);
    return w.beta + 2.0 * std::atan2(w.omega * std::sin(half), std::cos(half));
}

double wave_value(const FMMWave& w, double t) {
    return w.amplitude * std::cos(wave_phase(w, t));
}

std::vector<double> eval_wave(const FMMWave& w, const PhaseGrid& grid) {
    std::vector<double> out(static_cast<std::size_t>(grid.size()));
    for (int i = 0; i < grid.size(); ++i) out[static_cast<std::size_t>(i)] = wave_value(w, grid.at(i));
    return out;
}

std::vector<double> eval_beat(const FMMBeatParams& p, const PhaseGrid& grid) {
    std::vector<double> out(static_cast<std::size_t>(grid.size()), p.offset);
    for (const auto& w : p.waves) {
        for (int i = 0; i < grid.size(); ++i) out[static_cast<std::size_t>(i)] += wave_value(w, grid.at(i));
    }
    return out;
}

std::vector<std::vector<double>> eval_beat_multilead(std::span<const LeadParams> leads,
                                                     const std::array<double, kWaveCount>& alphas,
                                                     const std::array<double, kWaveCount>& omegas,
                                                     const PhaseGrid& grid) {
    std::vector<std::vector<double>> out;
    out.reserve(leads.size());
    for (const auto& lead : leads) {
        FMMBeatParams p;
        p.offset = lead.offset;
        for (int j = 0; j < kWaveCount; ++j) {
            p.waves[static_cast<std::size_t>(j)] =
                make_wave(lead.amplitudes[static_cast<std::size_t>(j)], alphas[static_cast<std::size_t>(j)],
                          lead.betas[static_cast<std::size_t>(j)], omegas[static_cast<std::size_t>(j)]);
        }
        out.push_back(eval_beat(p, grid));
    }
    return out;
}

CoefficientVector encode(const FMMBeatParams& p) {
    CoefficientVector v;
    v.values[coeff::kOffset] = p.offset;
    for (int j = 0; j < kWaveCount; ++j) {
        const auto& w = p.waves[static_cast<std::size_t>(j)];
        v.values[static_cast<std::size_t>(coeff::amplitude(j))] = w.amplitude;
        v.values[static_cast<std::size_t>(coeff::sin_alpha(j))] = std::sin(w.alpha);
        v.values[static_cast<std::size_t>(coeff::cos_alpha(j))] = std::cos(w.alpha);
        v.values[static_cast<std::size_t>(coeff::sin_beta(j))] = std::sin(w.beta);
        v.values[static_cast<std::size_t>(coeff::cos_beta(j))] = std::cos(w.beta);
        v.values[static_cast<std::size_t>(coeff::omega(j))] = w.omega;
    }
    return v;
}

FMMBeatParams decode(std::span<const double> values) {
    if (values.size() != kCoefficientCount) {
        throw StructuralError("decode: expected " + std::to_string(kCoefficientCount) + " coefficients, got " +
                              std::to_string(values.size()));
    }
    FMMBeatParams p;
    p.offset = values[coeff::kOffset];
    for (int j = 0; j < kWaveCount; ++j) {
        const double a = values[static_cast<std::size_t>(coeff::amplitude(j))];
        if (!(a >= 0.0)) {
            throw ValidationError("decode: negative amplitude at index " + std::to_string(coeff::amplitude(j)));
        }
        const double om = values[static_cast<std::size_t>(coeff::omega(j))];
        if (!(om > 0.0 && om <= 1.0)) {
            throw ValidationError("decode: omega out of (0, 1] at index " + std::to_string(coeff::omega(j)));
        }
        const double alpha =
            wrap_angle(std::atan2(values[static_cast<std::size_t>(coeff::sin_alpha(j))],
                                  values[static_cast<std::size_t>(coeff::cos_alpha(j))]));
        const double beta = wrap_angle(std::atan2(values[static_cast<std::size_t>(coeff::sin_beta(j))],
                                                  values[static_cast<std::size_t>(coeff::cos_beta(j))]));
        p.waves[static_cast<std::size_t>(j)] = FMMWave{a, alpha, beta, om};
    }
    return p;
}

FMMBeatParams decode(const CoefficientVector& v) { return decode(std::span<const double>(v.values)); }

FMMBeatParams canonical_order(const FMMBeatParams& p, std::optional<int> r_index_hint) {
    std::array<int, kWaveCount> idx{};
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return p.waves[static_cast<std::size_t>(a)].alpha < p.waves[static_cast<std::size_t>(b)].alpha;
    });

    int r_input = 0;
    if (r_index_hint) {
        if (*r_index_hint < 0 || *r_index_hint >= kWaveCount) {
            throw ValidationError("canonical_order: r_index_hint out of range");
        }
        r_input = *r_index_hint;
    } else {
        for (int j = 1; j < kWaveCount; ++j) {
            if (p.waves[static_cast<std::size_t>(j)].amplitude >
                p.waves[static_cast<std::size_t>(r_input)].amplitude) {
                r_input = j;
            }
        }
    }

    int r_pos = 0;
    for (int j = 0; j < kWaveCount; ++j) {
        if (idx[static_cast<std::size_t>(j)] == r_input) r_pos = j;
    }

    FMMBeatParams out;
    out.offset = p.offset;
    const int shift = (r_pos - coeff::kRWave + kWaveCount) % kWaveCount;
    for (int j = 0; j < kWaveCount; ++j) {
        out.waves[static_cast<std::size_t>(j)] =
            p.waves[static_cast<std::size_t>(idx[static_cast<std::size_t>((j + shift) % kWaveCount)])];
    }
    return out;
}

nlohmann::json params_to_json(const FMMBeatParams& p) {
    nlohmann::json waves = nlohmann::json::array();
    for (int j = 0; j < kWaveCount; ++j) {
        const auto& w = p.waves[static_cast<std::size_t>(j)];
        waves.push_back({{"name", wave_name(j)},
                         {"A", w.amplitude},
                         {"alpha", w.alpha},
                         {"beta", w.beta},
                         {"omega", w.omega}});
    }
    return nlohmann::json{{"M", p.offset}, {"waves", waves}};
}

FMMBeatParams params_from_json(const nlohmann::json& j) {
    FMMBeatParams p;
    try {
        p.offset = j.at("M").get<double>();
        const auto& waves = j.at("waves");
        if (!waves.is_array() || waves.size() != kWaveCount) {
            throw StructuralError("params_from_json: expected 5 waves");
        }
        for (int k = 0; k < kWaveCount; ++k) {
            const auto& w = waves[static_cast<std::size_t>(k)];
            p.waves[static_cast<std::size_t>(k)] =
                make_wave(w.at("A").get<double>(), w.at("alpha").get<double>(), w.at("beta").get<double>(),
                          w.at("omega").get<double>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("params_from_json: ") + e.what());
    }
    return p;
}

}  // namespace fmm

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace fmm {

/// Raw single-lead recording plus acquisition metadata.
struct EcgRecord {
    std::vector<double> samples;
    int sample_rate = 0;
    std::string lead_id;
    std::string subject_id;
};

void validate(const EcgRecord& rec);

inline constexpr int kLabelUnknown = -1;
inline constexpr int kLabelNormal = 0;

/// One segmented heartbeat, zero-padded to a fixed length. samples beyond
/// valid_len are exactly zero and the R peak index lies inside the valid part.
struct Heartbeat {
    std::vector<double> samples;
    int valid_len = 0;
    int r_peak_offset = 0;
    int label = kLabelUnknown;
    int sample_rate = 0;
};

void validate(const Heartbeat& beat);

/// One second-order IIR section, direct form II transposed.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// 4th-order Butterworth low-pass as two cascaded sections.
std::array<Biquad, 2> butterworth_lowpass4(double cutoff_hz, double fs);
/// 2nd-order Butterworth sections used by the QRS band-pass.
Biquad butterworth_lowpass2(double cutoff_hz, double fs);
Biquad butterworth_highpass2(double cutoff_hz, double fs);

/// Zero-phase forward-backward filtering with odd-reflection edge padding.
/// The reflection pivots on the mean of the first/last pivot_window samples
/// (1 reproduces the classic endpoint reflection).
std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x, int pad_len,
                             int pivot_window = 1);

/// Subtracts a low-pass estimate of the baseline (high-pass effect).
/// cutoff_hz must lie in (0, sample_rate/2).
EcgRecord remove_baseline(const EcgRecord& rec, double cutoff_hz = 0.5);

/// Pan-Tompkins QRS detection: 5-15 Hz band-pass, derivative, squaring,
/// 150 ms moving-window integration, adaptive dual thresholds with search-back
/// and a 200 ms refractory period. Requires at least 2 s of samples.
/// Returns strictly increasing sample indices of the detected R peaks.
std::vector<int> detect_r_peaks(const EcgRecord& rec);

struct SegmentationResult {
    std::vector<Heartbeat> beats;
    bool too_few_peaks = false;
};

/// Cuts beat k as [peak_k - 0.4*(peak_k - peak_{k-1}), peak_k + 0.6*(peak_{k+1} - peak_k)).
/// First and last peaks lack a neighbor and are dropped; beats longer than
/// l_pad are discarded; the rest are zero-padded to l_pad.
SegmentationResult segment_beats(const EcgRecord& rec, std::span<const int> peaks, int l_pad);

}  // namespace fmm

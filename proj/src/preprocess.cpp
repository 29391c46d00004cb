#include "fmm/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fmm/errors.hpp"

namespace fmm {

void validate(const EcgRecord& rec) {
    if (rec.samples.empty()) throw ValidationError("EcgRecord: samples must be non-empty");
    if (rec.sample_rate <= 0) throw ValidationError("EcgRecord: sample_rate must be positive");
}

void validate(const Heartbeat& beat) {
    if (beat.valid_len <= 0 || beat.valid_len > static_cast<int>(beat.samples.size())) {
        throw ValidationError("Heartbeat: valid_len out of range");
    }
    if (beat.r_peak_offset < 0 || beat.r_peak_offset >= beat.valid_len) {
        throw ValidationError("Heartbeat: r_peak_offset outside valid samples");
    }
    for (std::size_t i = static_cast<std::size_t>(beat.valid_len); i < beat.samples.size(); ++i) {
        if (beat.samples[i] != 0.0) throw ValidationError("Heartbeat: padding must be exactly zero");
    }
}

namespace {

// Bilinear-transform biquad for a 2nd-order Butterworth section with the
// given quality factor (RBJ cookbook form).
Biquad lowpass_section(double cutoff_hz, double fs, double q) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
    const double cw = std::cos(w0);
    const double sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
    s.b2 = s.b0;
    s.a1 = -2.0 * cw / a0;
    s.a2 = (1.0 - alpha) / a0;
    return s;
}

Biquad highpass_section(double cutoff_hz, double fs, double q) {
    const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
    const double cw = std::cos(w0);
    const double sw = std::sin(w0);
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = (1.0 + cw) / 2.0 / a0;
    s.b1 = -(1.0 + cw) / a0;
    s.b2 = s.b0;
    s.a1 = -2.0 * cw / a0;
    s.a2 = (1.0 - alpha) / a0;
    return s;
}

void check_cutoff(double cutoff_hz, double fs) {
    if (!(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0)) {
        throw ValidationError("cutoff frequency must lie in (0, sample_rate/2)");
    }
}

std::vector<double> run_sections(std::span<const Biquad> sections, std::vector<double> x) {
    for (const auto& s : sections) {
        // Steady-state initial conditions for a step of the first sample; a
        // constant signal then passes with no start-up transient.
        const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        const double x0 = x.empty() ? 0.0 : x.front();
        double z1 = x0 * (g - s.b0);
        double z2 = x0 * (s.b2 - s.a2 * g);
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return x;
}

}  // namespace

std::array<Biquad, 2> butterworth_lowpass4(double cutoff_hz, double fs) {
    check_cutoff(cutoff_hz, fs);
    // Q pair for a 4th-order Butterworth: 1/(2*cos(pi/8)), 1/(2*cos(3*pi/8)).
    return {lowpass_section(cutoff_hz, fs, 0.5411961001461969),
            lowpass_section(cutoff_hz, fs, 1.3065629648763764)};
}

Biquad butterworth_lowpass2(double cutoff_hz, double fs) {
    check_cutoff(cutoff_hz, fs);
    return lowpass_section(cutoff_hz, fs, std::numbers::sqrt2 / 2.0);
}

Biquad butterworth_highpass2(double cutoff_hz, double fs) {
    check_cutoff(cutoff_hz, fs);
    return highpass_section(cutoff_hz, fs, std::numbers::sqrt2 / 2.0);
}

std::vector<double> filtfilt(std::span<const Biquad> sections, std::span<const double> x, int pad_len,
                             int pivot_window) {
    if (x.empty()) return {};
    const int n = static_cast<int>(x.size());
    pad_len = std::min(pad_len, n - 1);
    if (pad_len < 0) pad_len = 0;
    pivot_window = std::clamp(pivot_window, 1, n);

    // Odd reflection suppresses edge transients. The pivot is the local mean
    // rather than the endpoint sample, so a record cut mid-oscillation does
    // not inject a level pedestal into the extension.
    double pivot_lo = 0.0, pivot_hi = 0.0;
    for (int i = 0; i < pivot_window; ++i) {
        pivot_lo += x[static_cast<std::size_t>(i)];
        pivot_hi += x[static_cast<std::size_t>(n - 1 - i)];
    }
    pivot_lo /= pivot_window;
    pivot_hi /= pivot_window;

    std::vector<double> ext;
    ext.reserve(static_cast<std::size_t>(n + 2 * pad_len));
    for (int i = pad_len; i >= 1; --i) ext.push_back(2.0 * pivot_lo - x[static_cast<std::size_t>(i)]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (int i = 1; i <= pad_len; ++i) {
        ext.push_back(2.0 * pivot_hi - x[static_cast<std::size_t>(n - 1 - i)]);
    }

    ext = run_sections(sections, std::move(ext));
    std::reverse(ext.begin(), ext.end());
    ext = run_sections(sections, std::move(ext));
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + pad_len, ext.begin() + pad_len + n);
}

EcgRecord remove_baseline(const EcgRecord& rec, double cutoff_hz) {
    validate(rec);
    check_cutoff(cutoff_hz, rec.sample_rate);
    const auto sections = butterworth_lowpass4(cutoff_hz, rec.sample_rate);
    // Long padding; the baseline estimator must settle on sub-Hz components.
    const int pad = static_cast<int>(std::lround(2.0 * rec.sample_rate / cutoff_hz));
    const int pivot = std::max(1, static_cast<int>(std::lround(0.25 * rec.sample_rate / cutoff_hz)));
    const auto baseline = filtfilt(sections, rec.samples, pad, pivot);
    EcgRecord out = rec;
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] -= baseline[i];
    return out;
}

std::vector<int> detect_r_peaks(const EcgRecord& rec) {
    validate(rec);
    const int fs = rec.sample_rate;
    const int n = static_cast<int>(rec.samples.size());
    if (n < 2 * fs) throw ValidationError("detect_r_peaks: need at least 2 seconds of samples");

    // Band-pass 5-15 Hz, zero phase so peak positions stay aligned.
    const std::array<Biquad, 2> band = {butterworth_lowpass2(15.0, fs), butterworth_highpass2(5.0, fs)};
    const auto bp = filtfilt(band, rec.samples, fs);

    // Centered five-point derivative, then squaring.
    std::vector<double> sq(static_cast<std::size_t>(n), 0.0);
    for (int i = 2; i < n - 2; ++i) {
        const double d = (-bp[static_cast<std::size_t>(i - 2)] - 2.0 * bp[static_cast<std::size_t>(i - 1)] +
                          2.0 * bp[static_cast<std::size_t>(i + 1)] + bp[static_cast<std::size_t>(i + 2)]) /
                         8.0;
        sq[static_cast<std::size_t>(i)] = d * d;
    }

    // Moving-window integration over ~150 ms, centered.
    const int win = std::max(1, static_cast<int>(std::lround(0.150 * fs)));
    std::vector<double> integ(static_cast<std::size_t>(n), 0.0);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        acc += sq[static_cast<std::size_t>(i)];
        if (i >= win) acc -= sq[static_cast<std::size_t>(i - win)];
        const int center = i - win / 2;
        if (center >= 0) integ[static_cast<std::size_t>(center)] = acc / win;
    }

    // Candidate peaks: strict local maxima of the integrated signal.
    std::vector<int> cand;
    for (int i = 1; i < n - 1; ++i) {
        const double v = integ[static_cast<std::size_t>(i)];
        if (v > integ[static_cast<std::size_t>(i - 1)] && v >= integ[static_cast<std::size_t>(i + 1)] && v > 0.0) {
            cand.push_back(i);
        }
    }
    if (cand.empty()) return {};

    // Threshold bootstrap from the first 2 seconds.
    double init_max = 0.0, init_mean = 0.0;
    for (int i = 0; i < 2 * fs; ++i) {
        init_max = std::max(init_max, integ[static_cast<std::size_t>(i)]);
        init_mean += integ[static_cast<std::size_t>(i)];
    }
    init_mean /= 2.0 * fs;
    double spki = 0.5 * init_max;
    double npki = 0.5 * init_mean;

    const int refractory = static_cast<int>(std::lround(0.200 * fs));
    std::vector<int> peaks;
    std::vector<int> missed_buffer;
    std::vector<double> rr_intervals;

    auto rr_average = [&]() {
        if (rr_intervals.empty()) return 0.0;
        const std::size_t take = std::min<std::size_t>(8, rr_intervals.size());
        double s = 0.0;
        for (std::size_t i = rr_intervals.size() - take; i < rr_intervals.size(); ++i) s += rr_intervals[i];
        return s / static_cast<double>(take);
    };

    auto accept = [&](int idx) {
        if (!peaks.empty()) rr_intervals.push_back(static_cast<double>(idx - peaks.back()));
        peaks.push_back(idx);
        missed_buffer.clear();
    };

    for (int idx : cand) {
        const double peak_val = integ[static_cast<std::size_t>(idx)];
        const double thr1 = npki + 0.25 * (spki - npki);
        if (!peaks.empty() && idx - peaks.back() < refractory) {
            // Inside the refractory window; keep the stronger of the two.
            if (peak_val > integ[static_cast<std::size_t>(peaks.back())]) {
                peaks.back() = idx;
                spki = 0.125 * peak_val + 0.875 * spki;
            }
            continue;
        }
        if (peak_val > thr1) {
            spki = 0.125 * peak_val + 0.875 * spki;
            accept(idx);
        } else {
            npki = 0.125 * peak_val + 0.875 * npki;
            missed_buffer.push_back(idx);
            // Search-back with the lower threshold when a beat seems missed.
            const double rr_avg = rr_average();
            if (rr_avg > 0.0 && !peaks.empty() &&
                static_cast<double>(idx - peaks.back()) > 1.66 * rr_avg) {
                const double thr2 = 0.5 * thr1;
                int best = -1;
                for (int m : missed_buffer) {
                    if (m - peaks.back() < refractory) continue;
                    if (integ[static_cast<std::size_t>(m)] > thr2 &&
                        (best < 0 || integ[static_cast<std::size_t>(m)] > integ[static_cast<std::size_t>(best)])) {
                        best = m;
                    }
                }
                if (best >= 0) {
                    spki = 0.25 * integ[static_cast<std::size_t>(best)] + 0.75 * spki;
                    accept(best);
                }
            }
        }
    }

    // Refine each detection to the largest band-passed deflection nearby.
    const int search = std::max(1, static_cast<int>(std::lround(0.075 * fs)));
    std::vector<int> refined;
    refined.reserve(peaks.size());
    for (int idx : peaks) {
        int best = idx;
        double best_val = std::fabs(bp[static_cast<std::size_t>(idx)]);
        for (int k = std::max(0, idx - search); k <= std::min(n - 1, idx + search); ++k) {
            const double v = std::fabs(bp[static_cast<std::size_t>(k)]);
            if (v > best_val) {
                best_val = v;
                best = k;
            }
        }
        refined.push_back(best);
    }
    std::sort(refined.begin(), refined.end());
    refined.erase(std::unique(refined.begin(), refined.end()), refined.end());

    // Refinement can pull two neighbors onto the same deflection.
    std::vector<int> out;
    for (int idx : refined) {
        if (!out.empty() && idx - out.back() < refractory) {
            if (std::fabs(bp[static_cast<std::size_t>(idx)]) > std::fabs(bp[static_cast<std::size_t>(out.back())])) {
                out.back() = idx;
            }
            continue;
        }
        out.push_back(idx);
    }
    return out;
}

SegmentationResult segment_beats(const EcgRecord& rec, std::span<const int> peaks, int l_pad) {
    validate(rec);
    if (l_pad <= 0) throw ValidationError("segment_beats: l_pad must be positive");
    SegmentationResult result;
    if (peaks.size() < 3) {
        result.too_few_peaks = true;
        return result;
    }
    const int n = static_cast<int>(rec.samples.size());
    for (std::size_t k = 1; k + 1 < peaks.size(); ++k) {
        const int prev = peaks[k - 1];
        const int cur = peaks[k];
        const int next = peaks[k + 1];
        const int start = cur - static_cast<int>(std::lround(0.4 * (cur - prev)));
        const int stop = cur + static_cast<int>(std::lround(0.6 * (next - cur)));
        if (start < 0 || stop > n || stop <= start) continue;
        const int valid = stop - start;
        if (valid > l_pad) continue;  // over-long beats are dropped
        Heartbeat beat;
        beat.samples.assign(static_cast<std::size_t>(l_pad), 0.0);
        std::copy(rec.samples.begin() + start, rec.samples.begin() + stop, beat.samples.begin());
        beat.valid_len = valid;
        beat.r_peak_offset = cur - start;
        beat.label = kLabelUnknown;
        beat.sample_rate = rec.sample_rate;
        result.beats.push_back(std::move(beat));
    }
    return result;
}

}  // namespace fmm

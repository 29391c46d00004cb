#include "fmm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fmm/errors.hpp"

namespace fmm {

std::optional<double> circular_mean(std::span<const double> angles) {
    if (angles.empty()) throw ValidationError("circular_mean: empty input");
    double s = 0.0, c = 0.0;
    for (double a : angles) {
        s += std::sin(a);
        c += std::cos(a);
    }
    if (std::hypot(s, c) < 1e-12) return std::nullopt;
    return wrap_angle(std::atan2(s, c));
}

double circular_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("circular_correlation: length mismatch");
    const auto ma = circular_mean(a);
    const auto mb = circular_mean(b);
    if (!ma || !mb) throw ValidationError("circular_correlation: undefined circular mean");
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double sa = std::sin(a[i] - *ma);
        const double sb = std::sin(b[i] - *mb);
        num += sa * sb;
        da += sa * sa;
        db += sb * sb;
    }
    const double eps = 1e-24 * static_cast<double>(a.size());
    if (da < eps || db < eps) throw ValidationError("circular_correlation: degenerate denominator");
    return num / std::sqrt(da * db);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
    if (x.size() < 2) throw ValidationError("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx += (x[i] - mx) * (x[i] - mx);
        dy += (y[i] - my) * (y[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) throw ValidationError("pearson: zero variance");
    return num / std::sqrt(dx * dy);
}

RocCurve roc_auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ValidationError("roc_auroc: length mismatch");
    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) {
        if (l == 1) {
            ++n_pos;
        } else if (l == 0) {
            ++n_neg;
        } else {
            throw ValidationError("roc_auroc: labels must be 0 or 1");
        }
    }
    if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auroc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });

    RocCurve curve;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);

    double area = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        std::size_t tied_pos = 0, tied_neg = 0;
        while (i < order.size() && scores[order[i]] == s) {
            if (labels[order[i]] == 1) {
                ++tied_pos;
            } else {
                ++tied_neg;
            }
            ++i;
        }
        const double fpr0 = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr0 = static_cast<double>(tp) / static_cast<double>(n_pos);
        tp += tied_pos;
        fp += tied_neg;
        const double fpr1 = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr1 = static_cast<double>(tp) / static_cast<double>(n_pos);
        area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
        curve.thresholds.push_back(s);
        curve.fpr.push_back(fpr1);
        curve.tpr.push_back(tpr1);
    }
    curve.auroc = area;
    return curve;
}

std::vector<CorrelationEntry> coefficient_correlations(std::span<const CoefficientVector> predicted,
                                                       std::span<const CoefficientVector> oracle) {
    if (predicted.size() != oracle.size()) throw ValidationError("coefficient_correlations: length mismatch");
    if (predicted.size() < 3) throw ValidationError("coefficient_correlations: need at least 3 samples");

    const std::size_t n = predicted.size();
    std::vector<FMMBeatParams> p(n), o(n);
    for (std::size_t i = 0; i < n; ++i) {
        p[i] = decode(predicted[i]);
        o[i] = decode(oracle[i]);
    }

    std::vector<CorrelationEntry> table;
    std::vector<double> a(n), b(n);
    auto column = [&](auto getter) {
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = getter(p[i]);
            b[i] = getter(o[i]);
        }
    };

    for (int w = 0; w < kWaveCount; ++w) {
        const auto ws = static_cast<std::size_t>(w);
        column([&](const FMMBeatParams& q) { return q.waves[ws].amplitude; });
        table.push_back({wave_name(w), "A", "pearson", pearson(a, b)});
        column([&](const FMMBeatParams& q) { return q.waves[ws].alpha; });
        table.push_back({wave_name(w), "alpha", "circular", circular_correlation(a, b)});
        column([&](const FMMBeatParams& q) { return q.waves[ws].beta; });
        table.push_back({wave_name(w), "beta", "circular", circular_correlation(a, b)});
        column([&](const FMMBeatParams& q) { return q.waves[ws].omega; });
        table.push_back({wave_name(w), "omega", "pearson", pearson(a, b)});
    }
    column([&](const FMMBeatParams& q) { return q.offset; });
    table.push_back({"-", "M", "pearson", pearson(a, b)});
    return table;
}

}  // namespace fmm

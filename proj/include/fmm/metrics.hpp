#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fmm/wave.hpp"

namespace fmm {

/// Circular mean atan2(sum sin, sum cos), reduced to [0, 2*pi).
/// Returns nullopt when the resultant vector length is below 1e-12 (the mean
/// is undefined, e.g. for {0, pi}). Throws ValidationError on empty input.
std::optional<double> circular_mean(std::span<const double> angles);

/// Jammalamadaka-SenGupta circular correlation. Throws ValidationError on
/// length mismatch, undefined circular mean, or a degenerate denominator.
double circular_correlation(std::span<const double> a, std::span<const double> b);

/// Linear Pearson correlation. Throws ValidationError when either variance
/// is zero or fewer than two points are given.
double pearson(std::span<const double> x, std::span<const double> y);

/// ROC curve from a descending threshold sweep with tied scores grouped into
/// a single step; auroc is the trapezoidal area (equal to the Mann-Whitney
/// statistic with ties counted half).
struct RocCurve {
    std::vector<double> thresholds;  // descending, one per step
    std::vector<double> fpr;         // includes the (0,0) and (1,1) endpoints
    std::vector<double> tpr;
    double auroc = 0.0;
};

/// labels are binary: 1 = positive (abnormal), 0 = negative.
/// Throws ValidationError unless both classes are present.
RocCurve roc_auroc(std::span<const double> scores, std::span<const int> labels);

struct CorrelationEntry {
    std::string wave;       // "P".."T" or "-" for the offset row
    std::string parameter;  // "A", "alpha", "beta", "omega", "M"
    std::string kind;       // "circular" or "pearson"
    double value = 0.0;
};

/// Per-parameter agreement between two aligned coefficient lists: circular
/// correlation for the decoded alpha/beta angles, Pearson for A, omega and M.
std::vector<CorrelationEntry> coefficient_correlations(std::span<const CoefficientVector> predicted,
                                                       std::span<const CoefficientVector> oracle);

}  // namespace fmm

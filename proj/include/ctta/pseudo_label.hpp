#pragma once

#include "ctta/gmm.hpp"

#include <utility>
#include <vector>

namespace ctta {

enum class LabelTag { Known, Unknown, Ignored };

/// Per-sample pseudo-label decision. Known carries a class index in
/// [0, num_classes); Unknown maps to the extra index num_classes.
struct PseudoLabel {
  LabelTag tag = LabelTag::Ignored;
  int known_class = -1;

  static PseudoLabel known(int c) { return {LabelTag::Known, c}; }
  static PseudoLabel unknown() { return {LabelTag::Unknown, -1}; }
  static PseudoLabel ignored() { return {LabelTag::Ignored, -1}; }

  bool is_known() const { return tag == LabelTag::Known; }
  bool operator==(const PseudoLabel& o) const {
    return tag == o.tag && (tag != LabelTag::Known || known_class == o.known_class);
  }
};

enum class OodMetric { Mahalanobis, NormalizedEntropy };

/// Min over initialized classes of the squared Mahalanobis form under
/// sigma(c) + eps*I. No square root.
double score_mahalanobis(const GmmState& state, const Vector& reduced_feat);

/// Normalized Shannon entropy of a responsibility vector, in [0,1].
double score_entropy(const Vector& responsibilities);

/// Sorted-sample quantile with linear interpolation between order
/// statistics at position q*(n-1).
double quantile_linear(std::vector<double> values, double q);

/// Accumulates per-batch score quantiles over the first n_init batches,
/// then freezes tau_l/tau_u as their means.
struct ThresholdCalibrator {
  double p_reject = 0.5;
  int n_init = 50;
  std::vector<double> lower_quantiles;
  std::vector<double> upper_quantiles;
  bool frozen = false;
  double tau_l = 0.0;
  double tau_u = 0.0;
};

ThresholdCalibrator make_calibrator(double p_reject, int n_init);

void calibrate_observe(ThresholdCalibrator& cal, const std::vector<double>& batch_scores);

/// Running means of the quantiles seen so far; usable before freezing.
std::pair<double, double> provisional_thresholds(const ThresholdCalibrator& cal);

/// Mean the two quantile lists into final thresholds, clamping both to
/// their midpoint if they ever cross.
std::pair<double, double> finalize_thresholds(const std::vector<double>& lowers,
                                              const std::vector<double>& uppers);

/// score <= tau_l -> Known(argmax p), score >= tau_u -> Unknown,
/// otherwise Ignored. Argmax ties break to the lowest class index.
PseudoLabel assign(const Vector& p, double score, double tau_l, double tau_u);

/// Thresholded student+teacher ensemble decision. Returns a class index
/// in [0, C) or C for unknown, with tau = (tau_l + tau_u) / 2.
int decide_inference(const Vector& student_probs, const Vector& teacher_probs, double score,
                     double tau_l, double tau_u);

}  // namespace ctta

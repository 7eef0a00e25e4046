#include "ctta/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctta {

double score_mahalanobis(const GmmState& state, const Vector& reduced_feat) {
  if (reduced_feat.size() != state.dim)
    throw std::invalid_argument("score_mahalanobis: feature dimension mismatch");
  bool any = false;
  double best = 0.0;
  for (int c = 0; c < state.num_classes; ++c) {
    if (!state.initialized[c]) continue;
    Matrix reg = state.sigma[c];
    reg.diagonal().array() += state.cov_eps;
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("score_mahalanobis: covariance for class " + std::to_string(c) +
                               " is not positive definite");
    const Vector diff = reduced_feat - state.mu.row(c).transpose();
    const Vector z = Matrix(llt.matrixL()).triangularView<Eigen::Lower>().solve(diff);
    const double quad = z.squaredNorm();
    if (!any || quad < best) best = quad;
    any = true;
  }
  if (!any)
    throw std::runtime_error("score_mahalanobis: no class initialized yet");
  return best;
}

double score_entropy(const Vector& responsibilities) {
  const int n = int(responsibilities.size());
  if (n < 2) throw std::invalid_argument("score_entropy: need at least two classes");
  const double total = responsibilities.sum();
  if (std::abs(total - 1.0) > 1e-6 || (responsibilities.array() < 0.0).any())
    throw std::invalid_argument("score_entropy: input is not on the probability simplex");
  double h = 0.0;
  for (int c = 0; c < n; ++c) {
    const double p = responsibilities(c);
    if (p > 0.0) h += p * std::log(p);
  }
  return -h / std::log(double(n));
}

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile_linear: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile_linear: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ThresholdCalibrator make_calibrator(double p_reject, int n_init) {
  if (!(p_reject > 0.0 && p_reject < 1.0))
    throw std::invalid_argument("make_calibrator: p_reject must be in (0,1)");
  if (n_init < 1) throw std::invalid_argument("make_calibrator: n_init must be >= 1");
  ThresholdCalibrator cal;
  cal.p_reject = p_reject;
  cal.n_init = n_init;
  return cal;
}

std::pair<double, double> finalize_thresholds(const std::vector<double>& lowers,
                                              const std::vector<double>& uppers) {
  if (lowers.empty() || lowers.size() != uppers.size())
    throw std::invalid_argument("finalize_thresholds: quantile lists empty or mismatched");
  const double tl = std::accumulate(lowers.begin(), lowers.end(), 0.0) / double(lowers.size());
  const double tu = std::accumulate(uppers.begin(), uppers.end(), 0.0) / double(uppers.size());
  if (tl > tu) {
    const double mid = 0.5 * (tl + tu);
    return {mid, mid};
  }
  return {tl, tu};
}

void calibrate_observe(ThresholdCalibrator& cal, const std::vector<double>& batch_scores) {
  if (cal.frozen)
    throw std::logic_error("calibrate_observe: thresholds already frozen");
  if (batch_scores.size() < 2)
    throw std::invalid_argument("calibrate_observe: need at least two scores per batch");
  const double q_lo = (1.0 - cal.p_reject) / 2.0;
  const double q_hi = 1.0 - q_lo;
  cal.lower_quantiles.push_back(quantile_linear(batch_scores, q_lo));
  cal.upper_quantiles.push_back(quantile_linear(batch_scores, q_hi));
  if (int(cal.lower_quantiles.size()) == cal.n_init) {
    std::tie(cal.tau_l, cal.tau_u) = finalize_thresholds(cal.lower_quantiles, cal.upper_quantiles);
    cal.frozen = true;
  }
}

std::pair<double, double> provisional_thresholds(const ThresholdCalibrator& cal) {
  if (cal.frozen) return {cal.tau_l, cal.tau_u};
  return finalize_thresholds(cal.lower_quantiles, cal.upper_quantiles);
}

PseudoLabel assign(const Vector& p, double score, double tau_l, double tau_u) {
  if (tau_l > tau_u) throw std::invalid_argument("assign: tau_l must not exceed tau_u");
  if (score <= tau_l) {
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    return PseudoLabel::known(int(best));
  }
  if (score >= tau_u) return PseudoLabel::unknown();
  return PseudoLabel::ignored();
}

int decide_inference(const Vector& student_probs, const Vector& teacher_probs, double score,
                     double tau_l, double tau_u) {
  const double tau = 0.5 * (tau_l + tau_u);
  if (score > tau) return int(student_probs.size());
  const Vector combined = student_probs + teacher_probs;
  Eigen::Index best = 0;
  combined.maxCoeff(&best);
  return int(best);
}

}  // namespace ctta

#pragma once

#include "ctta/net.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace ctta {

/// Streaming class-conditional Gaussian mixture over reduced features.
/// s(c) accumulates soft class evidence; mu/sigma are recursively
/// updated per batch. Stored covariances are raw; the cov_eps ridge is
/// applied only when evaluating densities and Mahalanobis terms.
struct GmmState {
  int num_classes = 0;
  int dim = 0;
  Vector s;                       // soft class weights, >= 0
  Matrix mu;                      // num_classes x dim
  std::vector<Matrix> sigma;      // num_classes of dim x dim
  std::vector<bool> initialized;  // true once s(c) exceeded s_min
  double alpha_gmm = 0.99;
  double cov_eps = 1e-4;
  double s_min = 1e-8;
};

/// Density reported for classes without usable estimates; small enough
/// that they never beat a real component.
inline constexpr double kDensityFloor = 1e-300;

GmmState make_gmm(int num_classes, int dim, double alpha_gmm, double cov_eps = 1e-4,
                  double s_min = 1e-8);

/// One recursive update from a batch of teacher softmax rows and the
/// matching reduced features. Covariance cross-products are taken
/// against the new mean; the previous covariance is carried over as is.
void gmm_update(GmmState& state, const Matrix& teacher_probs, const Matrix& reduced_feats);

/// Log density per class under N(mu(c), sigma(c) + eps*I); uninitialized
/// classes contribute log(kDensityFloor).
Vector log_likelihoods(const GmmState& state, const Vector& reduced_feat);

Vector likelihoods(const GmmState& state, const Vector& reduced_feat);

/// p / sum(p); throws on an all-zero vector.
Vector responsibilities(const Vector& p);

/// softmax over log densities; the underflow-safe route to Eq-style
/// normalized likelihood ratios.
Vector responsibilities_from_log(const Vector& log_p);

/// sigma + eps*I, verified positive definite via Cholesky.
Matrix regularize_cov(const Matrix& sigma, double eps);

nlohmann::json gmm_to_json(const GmmState& state);
GmmState gmm_from_json(const nlohmann::json& j);

}  // namespace ctta

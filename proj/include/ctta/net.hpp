#pragma once

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <vector>

namespace ctta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One dense layer, stored as W (out x in) and b (out).
struct Layer {
  Matrix W;
  Vector b;
};

/// Shape descriptor for the full network: a trunk mapping inputs to
/// features (tanh on all but the last trunk layer), a linear projection
/// head onto the reduced space, and a linear classifier head.
struct Architecture {
  int input_dim = 8;
  std::vector<int> hidden = {64, 64};
  int feature_dim = 32;
  int reduced_dim = 8;
  int num_classes = 0;

  std::vector<std::pair<int, int>> trunk_shapes() const;
};

/// All trainable arrays of one network copy. Gradients reuse the same
/// layout so elementwise traversals can be shared.
struct ParamSet {
  std::vector<Layer> trunk;
  Layer proj;
  Layer cls;

  template <typename F>
  void for_each_layer(F&& f) {
    for (auto& l : trunk) f(l);
    f(proj);
    f(cls);
  }
  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& l : trunk) f(l);
    f(proj);
    f(cls);
  }

  bool same_shape(const ParamSet& other) const;
  bool all_finite() const;
  long num_scalars() const;
};

using Gradients = ParamSet;

ParamSet make_params(const Architecture& arch, std::mt19937_64& rng);
ParamSet zeros_like(const ParamSet& p);

/// Everything a forward pass computed, kept for the backward pass.
struct ForwardTrace {
  Matrix inputs;                     // N x D
  std::vector<Matrix> activations;   // per trunk layer, post-activation
  Matrix features;                   // N x FD (== activations.back())
  Matrix reduced;                    // N x FD_r
  Matrix logits;                     // N x C
  Matrix probs;                      // N x C, row-wise softmax
};

Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

ForwardTrace forward(const Architecture& arch, const ParamSet& params, const Matrix& batch);

/// Gradients of a scalar loss w.r.t. the trace outputs it consumed.
/// Empty matrices mean "unused". d_probs is routed through the softmax
/// Jacobian; d_logits bypasses it.
struct OutputGrads {
  Matrix d_features;
  Matrix d_reduced;
  Matrix d_probs;
  Matrix d_logits;
};

Gradients backward(const Architecture& arch, const ParamSet& params,
                   const ForwardTrace& trace, const OutputGrads& out);

struct OptimizerState {
  double learning_rate = 0.001;
  double momentum = 0.9;
  ParamSet velocity;
};

OptimizerState make_optimizer(const ParamSet& params, double lr, double momentum);

/// Classic heavy-ball step: v <- m*v + g, theta <- theta - lr*v.
/// Throws on non-finite gradients.
void sgd_step(ParamSet& params, const Gradients& grads, OptimizerState& opt);

/// Central-difference check of analytic gradients over up to max_coords
/// sampled parameter coordinates. Returns the max relative error
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<double(const ParamSet&)>& loss_fn,
                  const ParamSet& params, const Gradients& analytic, double eps,
                  int max_coords, std::mt19937_64& rng);

}  // namespace ctta

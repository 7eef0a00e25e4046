#include "ctta/net.hpp"

#include <cmath>
#include <stdexcept>

namespace ctta {

std::vector<std::pair<int, int>> Architecture::trunk_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int in = input_dim;
  for (int h : hidden) {
    shapes.emplace_back(h, in);
    in = h;
  }
  shapes.emplace_back(feature_dim, in);
  return shapes;
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (trunk.size() != other.trunk.size()) return false;
  auto eq = [](const Layer& a, const Layer& b) {
    return a.W.rows() == b.W.rows() && a.W.cols() == b.W.cols() && a.b.size() == b.b.size();
  };
  for (size_t i = 0; i < trunk.size(); ++i)
    if (!eq(trunk[i], other.trunk[i])) return false;
  return eq(proj, other.proj) && eq(cls, other.cls);
}

bool ParamSet::all_finite() const {
  bool ok = true;
  for_each_layer([&](const Layer& l) {
    ok = ok && l.W.allFinite() && l.b.allFinite();
  });
  return ok;
}

long ParamSet::num_scalars() const {
  long n = 0;
  for_each_layer([&](const Layer& l) { n += l.W.size() + l.b.size(); });
  return n;
}

ParamSet make_params(const Architecture& arch, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto init = [&](int out, int in) {
    Layer l;
    l.W = Matrix::NullaryExpr(out, in, [&]() { return gauss(rng) / std::sqrt(double(in)); });
    l.b = Vector::Zero(out);
    return l;
  };
  ParamSet p;
  for (auto [out, in] : arch.trunk_shapes()) p.trunk.push_back(init(out, in));
  p.proj = init(arch.reduced_dim, arch.feature_dim);
  p.cls = init(arch.num_classes, arch.feature_dim);
  return p;
}

ParamSet zeros_like(const ParamSet& p) {
  ParamSet z = p;
  z.for_each_layer([](Layer& l) {
    l.W.setZero();
    l.b.setZero();
  });
  return z;
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    out.row(i) = softmax(logits.row(i).transpose()).transpose();
  return out;
}

namespace {

Matrix affine(const Layer& l, const Matrix& x) {
  return (x * l.W.transpose()).rowwise() + l.b.transpose();
}

}  // namespace

ForwardTrace forward(const Architecture& arch, const ParamSet& params, const Matrix& batch) {
  if (batch.cols() != arch.input_dim)
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, network expects " + std::to_string(arch.input_dim));
  ForwardTrace t;
  t.inputs = batch;
  Matrix x = batch;
  const size_t n_trunk = params.trunk.size();
  t.activations.reserve(n_trunk);
  for (size_t i = 0; i < n_trunk; ++i) {
    x = affine(params.trunk[i], x);
    if (i + 1 < n_trunk) x = x.array().tanh();
    t.activations.push_back(x);
  }
  t.features = t.activations.back();
  t.reduced = affine(params.proj, t.features);
  t.logits = affine(params.cls, t.features);
  t.probs = softmax_rows(t.logits);
  return t;
}

Gradients backward(const Architecture& arch, const ParamSet& params,
                   const ForwardTrace& trace, const OutputGrads& out) {
  const Eigen::Index n = trace.inputs.rows();
  Gradients g = zeros_like(params);

  // Route d_probs through the softmax Jacobian, then merge with d_logits.
  Matrix d_logits = Matrix::Zero(n, arch.num_classes);
  if (out.d_logits.size() > 0) d_logits = out.d_logits;
  if (out.d_probs.size() > 0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto p = trace.probs.row(i).array();
      const auto dp = out.d_probs.row(i).array();
      const double dot = (p * dp).sum();
      d_logits.row(i) += (p * (dp - dot)).matrix();
    }
  }

  Matrix d_features = Matrix::Zero(n, arch.feature_dim);
  if (out.d_features.size() > 0) d_features = out.d_features;

  if (d_logits.size() > 0) {
    g.cls.W = d_logits.transpose() * trace.features;
    g.cls.b = d_logits.colwise().sum().transpose();
    d_features += d_logits * params.cls.W;
  }
  if (out.d_reduced.size() > 0) {
    g.proj.W = out.d_reduced.transpose() * trace.features;
    g.proj.b = out.d_reduced.colwise().sum().transpose();
    d_features += out.d_reduced * params.proj.W;
  }

  // Trunk: last layer is linear, earlier ones carry tanh.
  Matrix d = d_features;
  for (int i = int(params.trunk.size()) - 1; i >= 0; --i) {
    if (size_t(i) + 1 < params.trunk.size())
      d = d.array() * (1.0 - trace.activations[i].array().square());
    const Matrix& below = (i == 0) ? trace.inputs : trace.activations[i - 1];
    g.trunk[i].W = d.transpose() * below;
    g.trunk[i].b = d.colwise().sum().transpose();
    if (i > 0) d = d * params.trunk[i].W;
  }
  return g;
}

OptimizerState make_optimizer(const ParamSet& params, double lr, double momentum) {
  OptimizerState opt;
  opt.learning_rate = lr;
  opt.momentum = momentum;
  opt.velocity = zeros_like(params);
  return opt;
}

void sgd_step(ParamSet& params, const Gradients& grads, OptimizerState& opt) {
  if (!grads.all_finite())
    throw std::runtime_error("sgd_step: non-finite gradient, step aborted");
  auto step = [&](Layer& p, const Layer& g, Layer& v) {
    v.W = opt.momentum * v.W + g.W;
    v.b = opt.momentum * v.b + g.b;
    p.W -= opt.learning_rate * v.W;
    p.b -= opt.learning_rate * v.b;
  };
  for (size_t i = 0; i < params.trunk.size(); ++i)
    step(params.trunk[i], grads.trunk[i], opt.velocity.trunk[i]);
  step(params.proj, grads.proj, opt.velocity.proj);
  step(params.cls, grads.cls, opt.velocity.cls);
}

namespace {

double* scalar_at(ParamSet& p, long idx) {
  double* ptr = nullptr;
  long seen = 0;
  p.for_each_layer([&](Layer& l) {
    if (ptr) return;
    if (idx < seen + l.W.size()) {
      ptr = l.W.data() + (idx - seen);
      return;
    }
    seen += l.W.size();
    if (idx < seen + l.b.size()) {
      ptr = l.b.data() + (idx - seen);
      return;
    }
    seen += l.b.size();
  });
  return ptr;
}

const double* scalar_at(const ParamSet& p, long idx) {
  return scalar_at(const_cast<ParamSet&>(p), idx);
}

}  // namespace

double grad_check(const std::function<double(const ParamSet&)>& loss_fn,
                  const ParamSet& params, const Gradients& analytic, double eps,
                  int max_coords, std::mt19937_64& rng) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  const long total = params.num_scalars();
  std::vector<long> coords;
  if (total <= max_coords) {
    coords.resize(total);
    for (long i = 0; i < total; ++i) coords[i] = i;
  } else {
    std::uniform_int_distribution<long> pick(0, total - 1);
    for (int i = 0; i < max_coords; ++i) coords.push_back(pick(rng));
  }

  ParamSet work = params;
  double worst = 0.0;
  for (long idx : coords) {
    double* x = scalar_at(work, idx);
    const double orig = *x;
    *x = orig + eps;
    const double up = loss_fn(work);
    *x = orig - eps;
    const double down = loss_fn(work);
    *x = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = *scalar_at(analytic, idx);
    const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace ctta

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctta/net.hpp"

#include <cmath>
#include <cstring>

using namespace ctta;

namespace {

Architecture small_arch(int d = 4, int fd = 3, int fdr = 2, int classes = 3) {
  Architecture a;
  a.input_dim = d;
  a.hidden = {5};
  a.feature_dim = fd;
  a.reduced_dim = fdr;
  a.num_classes = classes;
  return a;
}

Matrix random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return Matrix::NullaryExpr(r, c, [&]() { return g(rng); });
}

bool bitwise_equal(const ParamSet& a, const ParamSet& b) {
  bool eq = a.same_shape(b);
  if (!eq) return false;
  auto cmp = [&](const Layer& x, const Layer& y) {
    eq = eq && std::memcmp(x.W.data(), y.W.data(), sizeof(double) * x.W.size()) == 0 &&
         std::memcmp(x.b.data(), y.b.data(), sizeof(double) * x.b.size()) == 0;
  };
  for (size_t i = 0; i < a.trunk.size(); ++i) cmp(a.trunk[i], b.trunk[i]);
  cmp(a.proj, b.proj);
  cmp(a.cls, b.cls);
  return eq;
}

}  // namespace

TEST_CASE("softmax basics") {
  Vector z(3);
  z << 0, 0, 0;
  Vector p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  z << 7.5, 7.5, 7.5;
  p = softmax(z);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Vector z2(2);
  z2 << 2, 0;
  const Vector p2 = softmax(z2);
  const double e2 = std::exp(2.0);
  CHECK(p2(0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(p2(1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    Vector z(5);
    for (int i = 0; i < 5; ++i) z(i) = g(rng);
    const Vector p = softmax(z);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    const Vector shifted = softmax(Vector(z.array() + 123.456));
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward: zero weights give uniform probs") {
  std::mt19937_64 rng(1);
  const Architecture arch = small_arch();
  ParamSet p = zeros_like(make_params(arch, rng));
  const Matrix x = random_matrix(6, arch.input_dim, rng);
  const ForwardTrace t = forward(arch, p, x);
  CHECK(t.logits.cwiseAbs().maxCoeff() == 0.0);
  CHECK((t.probs.array() - 1.0 / arch.num_classes).abs().maxCoeff() < 1e-15);
}

TEST_CASE("forward: identity trunk passes inputs through") {
  Architecture arch;
  arch.input_dim = 4;
  arch.hidden = {};
  arch.feature_dim = 4;
  arch.reduced_dim = 2;
  arch.num_classes = 3;
  std::mt19937_64 rng(2);
  ParamSet p = make_params(arch, rng);
  p.trunk[0].W = Matrix::Identity(4, 4);
  p.trunk[0].b.setZero();
  const Matrix x = random_matrix(5, 4, rng);
  const ForwardTrace t = forward(arch, p, x);
  CHECK((t.features - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: probs rows sum to one") {
  std::mt19937_64 rng(3);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  const ForwardTrace t = forward(arch, p, random_matrix(8, arch.input_dim, rng));
  for (Eigen::Index i = 0; i < t.probs.rows(); ++i) {
    CHECK(std::abs(t.probs.row(i).sum() - 1.0) < 1e-9);
    CHECK(t.probs.row(i).minCoeff() >= 0.0);
    CHECK(t.probs.row(i).maxCoeff() <= 1.0);
  }
}

TEST_CASE("forward: dimension mismatch throws") {
  std::mt19937_64 rng(4);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  CHECK_THROWS_AS(forward(arch, p, Matrix::Zero(3, arch.input_dim + 1)), std::invalid_argument);
}

TEST_CASE("backward: zero output grads give zero parameter grads") {
  std::mt19937_64 rng(5);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  const ForwardTrace t = forward(arch, p, random_matrix(4, arch.input_dim, rng));
  const Gradients g = backward(arch, p, t, OutputGrads{});
  g.for_each_layer([](const Layer& l) {
    CHECK(l.W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(l.b.cwiseAbs().maxCoeff() == 0.0);
  });
}

TEST_CASE("backward: sum-of-logits grad on identity trunk is input column sums") {
  Architecture arch;
  arch.input_dim = 3;
  arch.hidden = {};
  arch.feature_dim = 3;
  arch.reduced_dim = 2;
  arch.num_classes = 2;
  std::mt19937_64 rng(6);
  ParamSet p = make_params(arch, rng);
  p.trunk[0].W = Matrix::Identity(3, 3);
  p.trunk[0].b.setZero();
  const Matrix x = random_matrix(5, 3, rng);
  const ForwardTrace t = forward(arch, p, x);
  OutputGrads og;
  og.d_logits = Matrix::Ones(5, 2);  // loss = sum of logits
  const Gradients g = backward(arch, p, t, og);
  const Vector colsum = x.colwise().sum().transpose();
  for (int c = 0; c < 2; ++c) {
    CHECK((g.cls.W.row(c).transpose() - colsum).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.cls.b(c) == doctest::Approx(5.0));
  }
}

TEST_CASE("grad_check: quadratic loss") {
  std::mt19937_64 rng(8);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  auto loss = [](const ParamSet& q) {
    double s = 0.0;
    q.for_each_layer([&](const Layer& l) { s += l.W.squaredNorm() + l.b.squaredNorm(); });
    return 0.5 * s;
  };
  const Gradients analytic = p;  // d(0.5||theta||^2)/dtheta = theta
  const double err = grad_check(loss, p, analytic, 1e-5, 200, rng);
  CHECK(err < 1e-7);
}

TEST_CASE("grad_check: constant loss") {
  std::mt19937_64 rng(9);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  auto loss = [](const ParamSet&) { return 3.25; };
  const double err = grad_check(loss, p, zeros_like(p), 1e-5, 50, rng);
  CHECK(err == 0.0);
}

TEST_CASE("grad_check: full forward chain against finite differences") {
  // scalar loss mixing probs, reduced and features heads
  std::mt19937_64 rng(10);
  const Architecture arch = small_arch();
  const ParamSet p = make_params(arch, rng);
  const Matrix x = random_matrix(4, arch.input_dim, rng);
  auto loss = [&](const ParamSet& q) {
    const ForwardTrace t = forward(arch, q, x);
    return t.probs.col(0).sum() + 0.5 * t.reduced.squaredNorm() + t.features.sum();
  };
  const ForwardTrace t = forward(arch, p, x);
  OutputGrads og;
  og.d_probs = Matrix::Zero(4, arch.num_classes);
  og.d_probs.col(0).setOnes();
  og.d_reduced = t.reduced;
  og.d_features = Matrix::Ones(4, arch.feature_dim);
  const Gradients analytic = backward(arch, p, t, og);
  const double err = grad_check(loss, p, analytic, 1e-5, 300, rng);
  CHECK(err < 1e-6);
}

TEST_CASE("sgd_step: fixed point and plain descent") {
  std::mt19937_64 rng(11);
  const Architecture arch = small_arch();
  ParamSet p = make_params(arch, rng);
  const ParamSet before = p;

  OptimizerState opt = make_optimizer(p, 0.1, 0.9);
  sgd_step(p, zeros_like(p), opt);
  CHECK(bitwise_equal(p, before));

  OptimizerState plain = make_optimizer(p, 1.0, 0.0);
  ParamSet g = zeros_like(p);
  g.cls.W.setConstant(0.25);
  sgd_step(p, g, plain);
  CHECK(((before.cls.W - p.cls.W).array() - 0.25).abs().maxCoeff() < 1e-15);
  for (size_t i = 0; i < p.trunk.size(); ++i)
    CHECK((p.trunk[i].W - before.trunk[i].W).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgd_step: momentum accumulates") {
  Architecture arch;
  arch.input_dim = 1;
  arch.hidden = {};
  arch.feature_dim = 1;
  arch.reduced_dim = 1;
  arch.num_classes = 1;
  std::mt19937_64 rng(12);
  ParamSet p = make_params(arch, rng);
  p.trunk[0].W(0, 0) = 0.0;
  OptimizerState opt = make_optimizer(p, 0.001, 0.9);
  ParamSet g = zeros_like(p);
  g.trunk[0].W(0, 0) = 1.0;
  sgd_step(p, g, opt);
  const double after_first = p.trunk[0].W(0, 0);
  CHECK(after_first == doctest::Approx(-0.001).epsilon(1e-15));
  sgd_step(p, g, opt);
  CHECK(p.trunk[0].W(0, 0) - after_first == doctest::Approx(-0.001 * 1.9).epsilon(1e-15));
}

TEST_CASE("sgd_step: deterministic and rejects NaN") {
  std::mt19937_64 rng(13);
  const Architecture arch = small_arch();
  const ParamSet p0 = make_params(arch, rng);
  ParamSet g = zeros_like(p0);
  g.proj.W.setConstant(0.5);

  ParamSet a = p0, b = p0;
  OptimizerState oa = make_optimizer(a, 0.01, 0.9);
  OptimizerState ob = make_optimizer(b, 0.01, 0.9);
  sgd_step(a, g, oa);
  sgd_step(b, g, ob);
  CHECK(bitwise_equal(a, b));

  g.proj.W(0, 0) = std::nan("");
  ParamSet c = p0;
  OptimizerState oc = make_optimizer(c, 0.01, 0.9);
  CHECK_THROWS_AS(sgd_step(c, g, oc), std::runtime_error);
}

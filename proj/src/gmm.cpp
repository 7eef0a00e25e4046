#include "ctta/gmm.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ctta {

GmmState make_gmm(int num_classes, int dim, double alpha_gmm, double cov_eps, double s_min) {
  if (num_classes <= 0 || dim <= 0)
    throw std::invalid_argument("make_gmm: num_classes and dim must be positive");
  if (!(alpha_gmm >= 0.0 && alpha_gmm <= 1.0))
    throw std::invalid_argument("make_gmm: alpha_gmm must be in [0,1]");
  if (cov_eps < 0.0) throw std::invalid_argument("make_gmm: cov_eps must be >= 0");
  GmmState st;
  st.num_classes = num_classes;
  st.dim = dim;
  st.s = Vector::Zero(num_classes);
  st.mu = Matrix::Zero(num_classes, dim);
  st.sigma.assign(num_classes, Matrix::Zero(dim, dim));
  st.initialized.assign(num_classes, false);
  st.alpha_gmm = alpha_gmm;
  st.cov_eps = cov_eps;
  st.s_min = s_min;
  return st;
}

void gmm_update(GmmState& state, const Matrix& teacher_probs, const Matrix& reduced_feats) {
  const Eigen::Index n = teacher_probs.rows();
  if (reduced_feats.rows() != n)
    throw std::invalid_argument("gmm_update: probs/features row mismatch");
  if (teacher_probs.cols() != state.num_classes || reduced_feats.cols() != state.dim)
    throw std::invalid_argument("gmm_update: column dimensions do not match state");
  if (!reduced_feats.allFinite() || !teacher_probs.allFinite())
    throw std::invalid_argument("gmm_update: non-finite input");

  const double a = state.alpha_gmm;
  for (int c = 0; c < state.num_classes; ++c) {
    const Vector w = teacher_probs.col(c);
    const double s_prev = state.s(c);
    const double s_new = a * s_prev + w.sum();
    state.s(c) = s_new;
    if (!(s_new > state.s_min)) continue;  // no usable evidence yet, keep parameters

    const Vector weighted_sum = reduced_feats.transpose() * w;
    const Vector mu_new =
        (a * s_prev * state.mu.row(c).transpose() + weighted_sum) / s_new;
    const Matrix centered = reduced_feats.rowwise() - mu_new.transpose();
    const Matrix scatter = centered.transpose() * w.asDiagonal() * centered;
    state.sigma[c] = (a * s_prev * state.sigma[c] + scatter) / s_new;
    state.mu.row(c) = mu_new.transpose();
    state.initialized[c] = true;
  }
}

namespace {

/// log N(x; mu, sigma + eps*I) via Cholesky.
double log_density(const Matrix& sigma, double eps, const Vector& mu, const Vector& x,
                   int class_index) {
  const int d = int(mu.size());
  Matrix reg = sigma;
  reg.diagonal().array() += eps;
  Eigen::LLT<Matrix> llt(reg);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gmm: covariance for class " + std::to_string(class_index) +
                             " is not positive definite after regularization");
  const Matrix L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const Vector z = L.triangularView<Eigen::Lower>().solve(x - mu);
  const double quad = z.squaredNorm();
  const double lp = -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet + quad);
  if (!std::isfinite(lp))
    throw std::runtime_error("gmm: non-finite density for class " + std::to_string(class_index));
  return lp;
}

}  // namespace

Vector log_likelihoods(const GmmState& state, const Vector& reduced_feat) {
  if (reduced_feat.size() != state.dim)
    throw std::invalid_argument("log_likelihoods: feature dimension mismatch");
  Vector out(state.num_classes);
  const double floor_log = std::log(kDensityFloor);
  for (int c = 0; c < state.num_classes; ++c) {
    out(c) = state.initialized[c]
                 ? log_density(state.sigma[c], state.cov_eps, state.mu.row(c).transpose(),
                               reduced_feat, c)
                 : floor_log;
  }
  return out;
}

Vector likelihoods(const GmmState& state, const Vector& reduced_feat) {
  return log_likelihoods(state, reduced_feat).array().exp();
}

Vector responsibilities(const Vector& p) {
  if ((p.array() < 0.0).any())
    throw std::invalid_argument("responsibilities: negative entry");
  const double total = p.sum();
  if (total <= 0.0)
    throw std::runtime_error("responsibilities: all-zero likelihood vector");
  return p / total;
}

Vector responsibilities_from_log(const Vector& log_p) {
  const double m = log_p.maxCoeff();
  Vector e = (log_p.array() - m).exp();
  return e / e.sum();
}

Matrix regularize_cov(const Matrix& sigma, double eps) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument("regularize_cov: matrix must be square");
  Matrix out = sigma;
  out.diagonal().array() += eps;
  Eigen::LLT<Matrix> llt(out);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("regularize_cov: output is not positive definite");
  return out;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  Matrix m(rows, cols);
  for (size_t i = 0; i < rows; ++i)
    for (size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  return m;
}

constexpr int kSnapshotVersion = 1;

}  // namespace

nlohmann::json gmm_to_json(const GmmState& state) {
  nlohmann::json j;
  j["version"] = kSnapshotVersion;
  j["num_classes"] = state.num_classes;
  j["dim"] = state.dim;
  j["alpha_gmm"] = state.alpha_gmm;
  j["cov_eps"] = state.cov_eps;
  j["s_min"] = state.s_min;
  j["s"] = std::vector<double>(state.s.data(), state.s.data() + state.s.size());
  j["mu"] = matrix_to_json(state.mu);
  nlohmann::json sig = nlohmann::json::array();
  for (const auto& m : state.sigma) sig.push_back(matrix_to_json(m));
  j["sigma"] = std::move(sig);
  j["initialized"] = std::vector<bool>(state.initialized.begin(), state.initialized.end());
  return j;
}

GmmState gmm_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kSnapshotVersion)
    throw std::runtime_error("gmm_from_json: unsupported snapshot version");
  GmmState st = make_gmm(j.at("num_classes").get<int>(), j.at("dim").get<int>(),
                         j.at("alpha_gmm").get<double>(), j.at("cov_eps").get<double>(),
                         j.at("s_min").get<double>());
  const auto s = j.at("s").get<std::vector<double>>();
  st.s = Eigen::Map<const Vector>(s.data(), s.size());
  st.mu = matrix_from_json(j.at("mu"));
  st.sigma.clear();
  for (const auto& m : j.at("sigma")) st.sigma.push_back(matrix_from_json(m));
  const auto flags = j.at("initialized").get<std::vector<bool>>();
  st.initialized.assign(flags.begin(), flags.end());
  if (int(st.sigma.size()) != st.num_classes || int(st.initialized.size()) != st.num_classes ||
      st.mu.rows() != st.num_classes || st.s.size() != st.num_classes)
    throw std::runtime_error("gmm_from_json: inconsistent snapshot");
  return st;
}

}  // namespace ctta

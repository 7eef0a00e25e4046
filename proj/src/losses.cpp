#include "ctta/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ctta {

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Matrix normalize_rows(const Matrix& x, const char* what) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double n = x.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw std::runtime_error(std::string("contrastive_loss: zero-norm ") + what + " at row " +
                               std::to_string(i));
    out.row(i) = x.row(i) / n;
  }
  return out;
}

}  // namespace

LossValueGrad contrastive_loss(const LabeledEmbeddings& emb, double temperature) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("contrastive_loss: temperature must be positive");
  const Eigen::Index m = emb.reduced.rows();
  const Eigen::Index n_classes = emb.means.rows();
  if (Eigen::Index(emb.labels.size()) != m)
    throw std::invalid_argument("contrastive_loss: label count mismatch");
  if (!emb.means_valid.empty() && Eigen::Index(emb.means_valid.size()) != n_classes)
    throw std::invalid_argument("contrastive_loss: means_valid size mismatch");

  LossValueGrad res;
  res.grad = Matrix::Zero(m, emb.reduced.cols());
  bool any_known = false;
  for (const auto& l : emb.labels) any_known = any_known || l.is_known();
  if (!any_known || m == 0) return res;

  auto mean_valid = [&](Eigen::Index c) {
    return emb.means_valid.empty() || emb.means_valid[c];
  };

  const Matrix u = normalize_rows(emb.reduced, "embedding");
  const Matrix sims = u * u.transpose();  // cosine similarities
  Matrix d_u = Matrix::Zero(m, u.cols());
  const double inv_t = 1.0 / temperature;
  double value = 0.0;

  // Sample-to-sample term: anchor i, positives j != i sharing its Known
  // label, denominator over all l != i.
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!emb.labels[i].is_known()) continue;
    std::vector<Eigen::Index> others;
    std::vector<double> logits;
    others.reserve(m - 1);
    logits.reserve(m - 1);
    int n_pos = 0;
    double pos_logit_sum = 0.0;
    for (Eigen::Index l = 0; l < m; ++l) {
      if (l == i) continue;
      others.push_back(l);
      const double q = sims(l, i) * inv_t;
      logits.push_back(q);
      if (emb.labels[l] == emb.labels[i]) {
        ++n_pos;
        pos_logit_sum += q;
      }
    }
    if (n_pos == 0) continue;
    const double lse = log_sum_exp(logits);
    value += double(n_pos) * lse - pos_logit_sum;

    double denom = 0.0;
    for (double q : logits) denom += std::exp(q - lse);
    for (size_t idx = 0; idx < others.size(); ++idx) {
      const Eigen::Index l = others[idx];
      const double w = std::exp(logits[idx] - lse) / denom;
      const bool pos = emb.labels[l] == emb.labels[i];
      const double coeff = (double(n_pos) * w - (pos ? 1.0 : 0.0)) * inv_t;
      d_u.row(l) += coeff * u.row(i);
      d_u.row(i) += coeff * u.row(l);
    }
  }

  // Sample-to-mean term: each Known sample against all available class
  // means; means receive no gradient.
  Matrix mean_dirs(n_classes, emb.means.cols());
  for (Eigen::Index c = 0; c < n_classes; ++c) {
    if (!mean_valid(c)) continue;
    const double n = emb.means.row(c).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw std::runtime_error("contrastive_loss: zero-norm class mean at index " +
                               std::to_string(c));
    mean_dirs.row(c) = emb.means.row(c) / n;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!emb.labels[i].is_known()) continue;
    const int c = emb.labels[i].known_class;
    if (c < 0 || c >= n_classes || !mean_valid(c))
      throw std::invalid_argument("contrastive_loss: Known label outside available class means");
    std::vector<Eigen::Index> classes;
    std::vector<double> logits;
    double own = 0.0;
    for (Eigen::Index cc = 0; cc < n_classes; ++cc) {
      if (!mean_valid(cc)) continue;
      const double v = mean_dirs.row(cc).dot(u.row(i)) * inv_t;
      classes.push_back(cc);
      logits.push_back(v);
      if (cc == c) own = v;
    }
    const double lse = log_sum_exp(logits);
    value += lse - own;
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - lse);
    for (size_t idx = 0; idx < classes.size(); ++idx) {
      const double soft = std::exp(logits[idx] - lse) / denom;
      const double coeff = (soft - (classes[idx] == c ? 1.0 : 0.0)) * inv_t;
      d_u.row(i) += coeff * mean_dirs.row(classes[idx]);
    }
  }

  // Chain through the row normalization.
  for (Eigen::Index i = 0; i < m; ++i) {
    const double n = emb.reduced.row(i).norm();
    const double dot = u.row(i).dot(d_u.row(i));
    res.grad.row(i) = (d_u.row(i) - dot * u.row(i)) / n;
  }
  res.value = value;
  return res;
}

double normalized_entropy(const Vector& probs) {
  const int n = int(probs.size());
  double h = 0.0;
  for (int c = 0; c < n; ++c) {
    const double p = probs(c);
    if (p > 0.0) h += p * std::log(p);
  }
  return -h / std::log(double(n));
}

Vector normalized_entropy_grad(const Vector& probs) {
  const int n = int(probs.size());
  const double scale = -1.0 / std::log(double(n));
  Vector g = Vector::Zero(n);
  for (int c = 0; c < n; ++c) {
    const double p = probs(c);
    if (p > 0.0) g(c) = scale * (std::log(p) + 1.0);
  }
  return g;
}

LossValueGrad entropy_loss(const Matrix& student_probs, const std::vector<PseudoLabel>& labels) {
  const Eigen::Index n = student_probs.rows();
  if (Eigen::Index(labels.size()) != n)
    throw std::invalid_argument("entropy_loss: label count mismatch");
  LossValueGrad res;
  res.grad = Matrix::Zero(n, student_probs.cols());
  if (n == 0) return res;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double sign = 0.0;
    if (labels[i].tag == LabelTag::Known) sign = 1.0;
    else if (labels[i].tag == LabelTag::Unknown) sign = -1.0;
    else continue;
    const Vector row = student_probs.row(i).transpose();
    acc += sign * normalized_entropy(row);
    res.grad.row(i) = (sign / double(n)) * normalized_entropy_grad(row).transpose();
  }
  res.value = acc / double(n);
  return res;
}

LossValueGrad feature_consistency(const Matrix& student_feats, const Matrix& ref_feats) {
  if (student_feats.rows() != ref_feats.rows() || student_feats.cols() != ref_feats.cols())
    throw std::invalid_argument("feature_consistency: shape mismatch");
  const Eigen::Index n = student_feats.rows();
  LossValueGrad res;
  res.grad = Matrix::Zero(n, student_feats.cols());
  if (n == 0) return res;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector diff = (student_feats.row(i) - ref_feats.row(i)).transpose();
    const double norm = diff.norm();
    acc += norm;
    if (norm > 0.0) res.grad.row(i) = diff.transpose() / (norm * double(n));
  }
  res.value = acc / double(n);
  return res;
}

double total_loss(double contrastive, double entropy, double consist_src, double consist_mt,
                  const LossWeights& w) {
  const char* names[] = {"contrastive", "entropy", "consistency_src", "consistency_mt"};
  const double parts[] = {contrastive, entropy, consist_src, consist_mt};
  for (int i = 0; i < 4; ++i)
    if (!std::isfinite(parts[i]))
      throw std::runtime_error(std::string("total_loss: non-finite ") + names[i] + " term");
  return contrastive + w.lambda_entropy * entropy + w.lambda_src * consist_src +
         w.lambda_mt * consist_mt;
}

}  // namespace ctta

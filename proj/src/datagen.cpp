#include "ctta/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ctta {

void validate(const ScenarioConfig& cfg) {
  if (cfg.input_dim < 2) throw std::invalid_argument("scenario: input_dim must be >= 2");
  if (cfg.shared < 0 || cfg.source_private < 0 || cfg.target_private < 0)
    throw std::invalid_argument("scenario: class split counts must be nonnegative");
  if (cfg.num_source_classes() < 2)
    throw std::invalid_argument("scenario: need at least two source classes");
  if (cfg.num_target_classes() < 1)
    throw std::invalid_argument("scenario: need at least one target class");
  switch (cfg.scenario) {
    case Scenario::PDA:
      if (cfg.target_private != 0)
        throw std::invalid_argument("scenario: PDA requires target_private == 0");
      break;
    case Scenario::ODA:
      if (cfg.source_private != 0)
        throw std::invalid_argument("scenario: ODA requires source_private == 0");
      break;
    case Scenario::OPDA:
      if (cfg.shared <= 0 || cfg.source_private <= 0 || cfg.target_private <= 0)
        throw std::invalid_argument("scenario: OPDA requires all three split counts > 0");
      break;
  }
  if (cfg.batch_size < 2) throw std::invalid_argument("scenario: batch_size must be >= 2");
  if (cfg.domains.empty()) throw std::invalid_argument("scenario: need at least one domain");
  if (cfg.batches_per_domain.size() != cfg.domains.size())
    throw std::invalid_argument("scenario: batches_per_domain must match domain count");
  for (int b : cfg.batches_per_domain)
    if (b < 0) throw std::invalid_argument("scenario: batches_per_domain entries must be >= 0");
  for (const auto& d : cfg.domains) {
    if (!(d.scale > 0.0)) throw std::invalid_argument("scenario: domain scale must be positive");
    if (d.noise_std < 0.0) throw std::invalid_argument("scenario: noise_std must be >= 0");
    if (d.translation.size() != 0 && d.translation.size() != cfg.input_dim)
      throw std::invalid_argument("scenario: translation dimension mismatch");
  }
  if (cfg.source_samples_per_class < 1)
    throw std::invalid_argument("scenario: source_samples_per_class must be >= 1");
  if (!(cfg.class_radius > 0.0))
    throw std::invalid_argument("scenario: class_radius must be positive");
}

std::optional<Batch> DomainStream::next() {
  if (cursor_ >= batches_.size()) return std::nullopt;
  return std::move(batches_[cursor_++]);
}

Matrix apply_shift(const Matrix& points, const ShiftSpec& spec, std::mt19937_64& rng) {
  Matrix out = points;
  if (spec.rotation != 0.0 && points.cols() >= 2) {
    const double c = std::cos(spec.rotation);
    const double s = std::sin(spec.rotation);
    const Vector x0 = out.col(0);
    const Vector x1 = out.col(1);
    out.col(0) = c * x0 - s * x1;
    out.col(1) = s * x0 + c * x1;
  }
  out *= spec.scale;
  if (spec.translation.size() > 0) out.rowwise() += spec.translation.transpose();
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> gauss(0.0, spec.noise_std);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += gauss(rng);
  }
  return out;
}

Matrix augment(const Matrix& inputs, double sigma_aug, std::mt19937_64& rng) {
  if (sigma_aug < 0.0) throw std::invalid_argument("augment: sigma_aug must be >= 0");
  if (sigma_aug == 0.0) return inputs;
  std::normal_distribution<double> gauss(0.0, sigma_aug);
  Matrix out = inputs;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += gauss(rng);
  return out;
}

namespace {

Matrix class_means(int num_classes, int dim, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix means(num_classes, dim);
  if (num_classes <= 2 * dim) {
    // Vertices of a randomly rotated orthoplex: pairwise distances are
    // radius*sqrt(2) (or 2*radius for antipodal pairs), so blobs stay
    // separated regardless of the class count.
    const Matrix a = Matrix::NullaryExpr(dim, dim, [&]() { return gauss(rng); });
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix basis = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < dim; ++i)
      if (r(i, i) < 0) basis.col(i) = -basis.col(i);
    for (int c = 0; c < num_classes; ++c) {
      const double sign = c < dim ? 1.0 : -1.0;
      means.row(c) = sign * radius * basis.col(c % dim).transpose();
    }
    return means;
  }
  // More classes than orthoplex vertices: best spread out of a fixed
  // number of random placements.
  double best_sep = -1.0;
  Matrix best = means;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Matrix cand(num_classes, dim);
    for (int c = 0; c < num_classes; ++c) {
      Vector dir(dim);
      do {
        for (int j = 0; j < dim; ++j) dir(j) = gauss(rng);
      } while (dir.norm() < 1e-8);
      cand.row(c) = radius * dir.transpose() / dir.norm();
    }
    double sep = std::numeric_limits<double>::infinity();
    for (int i = 0; i < num_classes; ++i)
      for (int j = i + 1; j < num_classes; ++j)
        sep = std::min(sep, (cand.row(i) - cand.row(j)).norm());
    if (sep > best_sep) {
      best_sep = sep;
      best = cand;
    }
  }
  return best;
}

Matrix sample_blob(const Vector& mean, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix out(n, mean.size());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < mean.size(); ++j) out(i, j) = mean(j) + gauss(rng);
  return out;
}

}  // namespace

std::pair<SourceData, DomainStream> make_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(cfg.seed);
  const Matrix means = class_means(cfg.num_total_classes(), cfg.input_dim, cfg.class_radius, rng);

  SourceData src;
  const int n_src_classes = cfg.num_source_classes();
  const int n_src = n_src_classes * cfg.source_samples_per_class;
  src.inputs.resize(n_src, cfg.input_dim);
  src.labels.resize(n_src);
  for (int c = 0; c < n_src_classes; ++c) {
    const Matrix pts = sample_blob(means.row(c).transpose(), cfg.source_samples_per_class, rng);
    src.inputs.middleRows(Eigen::Index(c) * cfg.source_samples_per_class,
                          cfg.source_samples_per_class) = pts;
    std::fill_n(src.labels.begin() + size_t(c) * cfg.source_samples_per_class,
                cfg.source_samples_per_class, c);
  }

  const int first_tgt = cfg.first_target_class();
  const int n_tgt_classes = cfg.num_target_classes();
  std::uniform_int_distribution<int> pick_class(0, n_tgt_classes - 1);

  std::vector<Batch> batches;
  for (size_t d = 0; d < cfg.domains.size(); ++d) {
    const int n_samples = cfg.batches_per_domain[d] * cfg.batch_size;
    Matrix base(n_samples, cfg.input_dim);
    std::vector<int> labels(n_samples);
    for (int i = 0; i < n_samples; ++i) {
      const int c = first_tgt + pick_class(rng);
      labels[i] = c;
      base.row(i) = sample_blob(means.row(c).transpose(), 1, rng);
    }
    Matrix shifted = apply_shift(base, cfg.domains[d], rng);

    // Shuffle inside the domain; domains stay contiguous.
    std::vector<int> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    for (int b = 0; b < cfg.batches_per_domain[d]; ++b) {
      Batch batch;
      batch.domain_id = int(d);
      batch.inputs.resize(cfg.batch_size, cfg.input_dim);
      batch.true_labels.resize(cfg.batch_size);
      for (int i = 0; i < cfg.batch_size; ++i) {
        const int idx = order[size_t(b) * cfg.batch_size + i];
        batch.inputs.row(i) = shifted.row(idx);
        batch.true_labels[i] = labels[idx];
      }
      batches.push_back(std::move(batch));
    }
  }
  return {std::move(src), DomainStream(std::move(batches))};
}

ParamSet pretrain_source(const Architecture& arch, const SourceData& data, int epochs, double lr,
                         std::mt19937_64& rng) {
  const Eigen::Index n = data.inputs.rows();
  if (n == 0) throw std::invalid_argument("pretrain_source: empty source data");
  if (Eigen::Index(data.labels.size()) != n)
    throw std::invalid_argument("pretrain_source: label count mismatch");
  const int num_classes = arch.num_classes;
  for (int y : data.labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("pretrain_source: label outside source label set");

  ParamSet params = make_params(arch, rng);
  OptimizerState opt = make_optimizer(params, lr, 0.9);
  constexpr double kSmoothing = 0.1;
  constexpr int kMinibatch = 64;

  auto train_accuracy = [&]() {
    const ForwardTrace t = forward(arch, params, data.inputs);
    long correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      t.logits.row(i).maxCoeff(&best);
      if (int(best) == data.labels[i]) ++correct;
    }
    return double(correct) / double(n);
  };

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  double acc = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += kMinibatch) {
      const Eigen::Index size = std::min<Eigen::Index>(kMinibatch, n - start);
      Matrix xb(size, arch.input_dim);
      std::vector<int> yb(size);
      for (Eigen::Index i = 0; i < size; ++i) {
        xb.row(i) = data.inputs.row(order[start + i]);
        yb[i] = data.labels[order[start + i]];
      }
      const ForwardTrace t = forward(arch, params, xb);
      // Smoothed cross-entropy: d logits = (p - t) / N.
      Matrix d_logits = t.probs;
      d_logits.array() -= kSmoothing / double(num_classes);
      for (Eigen::Index i = 0; i < size; ++i)
        d_logits(i, yb[i]) -= 1.0 - kSmoothing;
      d_logits /= double(size);
      OutputGrads og;
      og.d_logits = d_logits;
      sgd_step(params, backward(arch, params, t, og), opt);
    }
    acc = train_accuracy();
    if (acc >= 0.95) break;
  }
  if (acc < 0.60)
    throw std::runtime_error("pretrain_source: train accuracy stuck at " + std::to_string(acc) +
                             "; scenario too hard for the source model");
  return params;
}

}  // namespace ctta

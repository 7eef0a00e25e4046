#include "ctta/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctta {

namespace {

void score_summary(std::vector<double> scores, StepLog& log) {
  std::sort(scores.begin(), scores.end());
  const size_t n = scores.size();
  log.score_min = scores.front();
  log.score_max = scores.back();
  log.score_median =
      n % 2 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
}

void count_labels(const std::vector<PseudoLabel>& labels, int num_classes, StepLog& log) {
  log.known_counts.assign(num_classes, 0);
  log.unknown_count = 0;
  log.ignored_count = 0;
  for (const auto& l : labels) {
    switch (l.tag) {
      case LabelTag::Known: log.known_counts[l.known_class] += 1; break;
      case LabelTag::Unknown: log.unknown_count += 1; break;
      case LabelTag::Ignored: log.ignored_count += 1; break;
    }
  }
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

struct AdaptEngine::Snapshot {
  ParamSet student, teacher;
  ParamSet velocity;
  GmmState gmm;
  ThresholdCalibrator calibrator;
  std::mt19937_64 rng;
};

AdaptEngine::AdaptEngine(const EngineConfig& cfg, const Architecture& arch,
                         const ParamSet& source_params, std::uint64_t seed)
    : cfg_(cfg),
      arch_(arch),
      models_(init_pair(source_params, cfg.alpha_mt)),
      opt_(make_optimizer(source_params, cfg.lr, cfg.momentum)),
      gmm_(make_gmm(arch.num_classes, arch.reduced_dim, cfg.alpha_gmm, cfg.cov_eps, cfg.s_min)),
      calibrator_(make_calibrator(cfg.p_reject, cfg.n_init)),
      rng_(seed) {
  if (cfg.reduced_dim != arch.reduced_dim)
    throw std::invalid_argument("engine: reduced_dim disagrees with architecture");
}

Matrix AdaptEngine::teacher_reduced(const ForwardTrace& teacher_trace) const {
  if (!cfg_.shared_projection) return teacher_trace.reduced;
  return (teacher_trace.features * models_.student.proj.W.transpose()).rowwise() +
         models_.student.proj.b.transpose();
}

std::vector<double> AdaptEngine::ood_scores(const Matrix& reduced,
                                            const std::vector<Vector>& resp) const {
  const Eigen::Index n = reduced.rows();
  std::vector<double> scores(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scores[i] = cfg_.metric == OodMetric::Mahalanobis
                    ? score_mahalanobis(gmm_, reduced.row(i).transpose())
                    : score_entropy(resp[i]);
  }
  return scores;
}

std::pair<std::vector<int>, StepLog> AdaptEngine::source_only_step(const Matrix& inputs) {
  const Eigen::Index n = inputs.rows();
  StepLog log;
  log.batch_index = step_count_;
  const ForwardTrace t = forward(arch_, models_.source, inputs);
  std::vector<double> scores(n);
  for (Eigen::Index i = 0; i < n; ++i)
    scores[i] = normalized_entropy(t.probs.row(i).transpose());
  if (!calibrator_.frozen) {
    calibrate_observe(calibrator_, scores);
  }
  const auto [tau_l, tau_u] = provisional_thresholds(calibrator_);

  std::vector<PseudoLabel> labels(n);
  std::vector<int> preds(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector p = t.probs.row(i).transpose();
    labels[i] = assign(p, scores[i], tau_l, tau_u);
    preds[i] = decide_inference(p, p, scores[i], tau_l, tau_u);
  }
  count_labels(labels, arch_.num_classes, log);
  score_summary(scores, log);
  log.predictions = preds;
  return {preds, log};
}

std::vector<int> AdaptEngine::predict(const Matrix& inputs, double tau_l, double tau_u) {
  const Eigen::Index n = inputs.rows();
  const ParamSet& teacher_params =
      cfg_.ablation.mean_teacher ? models_.teacher : models_.student;
  const ForwardTrace t_trace = forward(arch_, teacher_params, inputs);
  const ForwardTrace s_trace = forward(arch_, models_.student, inputs);
  const Matrix reduced = teacher_reduced(t_trace);

  std::vector<Vector> resp(n);
  for (Eigen::Index i = 0; i < n; ++i)
    resp[i] = responsibilities_from_log(log_likelihoods(gmm_, reduced.row(i).transpose()));
  const std::vector<double> scores = ood_scores(reduced, resp);

  std::vector<int> preds(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector ps = s_trace.probs.row(i).transpose();
    const Vector pt = cfg_.ablation.ensembling ? Vector(t_trace.probs.row(i).transpose()) : ps;
    preds[i] = decide_inference(ps, pt, scores[i], tau_l, tau_u);
  }
  return preds;
}

std::pair<std::vector<int>, StepLog> AdaptEngine::adapt_step(const Matrix& inputs) {
  step_count_ += 1;
  if (!cfg_.ablation.adapt) return source_only_step(inputs);

  const Eigen::Index n = inputs.rows();
  Snapshot snap{models_.student, models_.teacher, opt_.velocity, gmm_, calibrator_, rng_};
  StepLog log;
  log.batch_index = step_count_;

  try {
    // (1) teacher pass on the originals
    const ParamSet& teacher_params =
        cfg_.ablation.mean_teacher ? models_.teacher : models_.student;
    const ForwardTrace t_trace = forward(arch_, teacher_params, inputs);
    const Matrix t_reduced = teacher_reduced(t_trace);

    // (2) GMM update with teacher evidence
    gmm_update(gmm_, t_trace.probs, t_reduced);

    // (3) responsibilities and OOD scores
    std::vector<Vector> resp(n);
    for (Eigen::Index i = 0; i < n; ++i)
      resp[i] = responsibilities_from_log(log_likelihoods(gmm_, t_reduced.row(i).transpose()));
    const std::vector<double> scores = ood_scores(t_reduced, resp);
    score_summary(scores, log);

    // (4) threshold calibration / lookup
    if (!calibrator_.frozen) calibrate_observe(calibrator_, scores);
    const auto [tau_l, tau_u] = provisional_thresholds(calibrator_);

    // (5) pseudo-labels
    std::vector<PseudoLabel> labels(n);
    for (Eigen::Index i = 0; i < n; ++i) labels[i] = assign(resp[i], scores[i], tau_l, tau_u);
    count_labels(labels, arch_.num_classes, log);

    // (6) student pass on originals + augmentations, loss assembly
    const Matrix augmented = augment(inputs, cfg_.sigma_aug, rng_);
    const Matrix doubled = vstack(inputs, augmented);
    std::vector<PseudoLabel> labels2(labels);
    labels2.insert(labels2.end(), labels.begin(), labels.end());

    const ForwardTrace s_trace = forward(arch_, models_.student, doubled);
    const ForwardTrace src_trace = forward(arch_, models_.source, inputs);

    LabeledEmbeddings emb;
    emb.reduced = s_trace.reduced;
    emb.labels = labels2;
    emb.means = gmm_.mu;
    emb.means_valid = gmm_.initialized;
    const LossValueGrad l_con = contrastive_loss(emb, cfg_.weights.temperature);
    const LossValueGrad l_ent = entropy_loss(Matrix(s_trace.probs.topRows(n)), labels);

    const double lambda_src = cfg_.ablation.consistency_src ? cfg_.weights.lambda_src : 0.0;
    const double lambda_mt = cfg_.ablation.consistency_mt ? cfg_.weights.lambda_mt : 0.0;
    LossValueGrad l_src, l_mt;
    l_src.grad = Matrix::Zero(n, arch_.feature_dim);
    l_mt.grad = Matrix::Zero(n, arch_.feature_dim);
    if (lambda_src > 0.0)
      l_src = consistency_src(Matrix(s_trace.features.topRows(n)), src_trace.features);
    if (lambda_mt > 0.0)
      l_mt = consistency_mt(Matrix(s_trace.features.topRows(n)), t_trace.features);

    LossWeights w = cfg_.weights;
    w.lambda_src = lambda_src;
    w.lambda_mt = lambda_mt;
    const double total = total_loss(l_con.value, l_ent.value, l_src.value, l_mt.value, w);
    log.loss_contrastive = l_con.value;
    log.loss_entropy = l_ent.value;
    log.loss_src = l_src.value;
    log.loss_mt = l_mt.value;
    log.loss_total = total;

    // (7) backprop and SGD on the student
    OutputGrads og;
    og.d_reduced = l_con.grad;
    og.d_probs = Matrix::Zero(2 * n, arch_.num_classes);
    og.d_probs.topRows(n) = w.lambda_entropy * l_ent.grad;
    og.d_features = Matrix::Zero(2 * n, arch_.feature_dim);
    og.d_features.topRows(n) = lambda_src * l_src.grad + lambda_mt * l_mt.grad;
    const Gradients grads = backward(arch_, models_.student, s_trace, og);
    sgd_step(models_.student, grads, opt_);
    if (!models_.student.all_finite())
      throw std::runtime_error("adapt_step: non-finite student parameters after update");

    // (8) teacher EMA
    if (cfg_.ablation.mean_teacher) {
      ema_update(models_);
    } else {
      models_.teacher = models_.student;
    }

    // (9) prediction
    std::vector<int> preds;
    if (cfg_.predict_pre_update) {
      preds.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector ps = s_trace.probs.row(i).transpose();
        const Vector pt =
            cfg_.ablation.ensembling ? Vector(t_trace.probs.row(i).transpose()) : ps;
        preds[i] = decide_inference(ps, pt, scores[i], tau_l, tau_u);
      }
    } else {
      preds = predict(inputs, tau_l, tau_u);
    }
    log.predictions = preds;
    return {preds, log};
  } catch (const std::exception&) {
    // Skip the step: restore every piece of mutable state, then still
    // produce a prediction with the restored models.
    models_.student = snap.student;
    models_.teacher = snap.teacher;
    opt_.velocity = snap.velocity;
    gmm_ = snap.gmm;
    calibrator_ = snap.calibrator;
    rng_ = snap.rng;
    log = StepLog{};
    log.batch_index = step_count_;
    log.skipped = true;
    log.known_counts.assign(arch_.num_classes, 0);
    log.ignored_count = n;
    std::vector<int> preds(n, arch_.num_classes);
    try {
      const auto [tau_l, tau_u] = provisional_thresholds(calibrator_);
      preds = predict(inputs, tau_l, tau_u);
    } catch (const std::exception&) {
      // nothing usable yet (e.g. first batch): reject everything
    }
    log.predictions = preds;
    return {preds, log};
  }
}

RunReport run(const EngineConfig& cfg, const Architecture& arch, const ParamSet& source_params,
              DomainStream& stream, Scenario scenario, std::uint64_t seed) {
  AdaptEngine engine(cfg, arch, source_params, seed);
  std::vector<int> known(arch.num_classes);
  for (int c = 0; c < arch.num_classes; ++c) known[c] = c;
  MetricsAccumulator acc = make_accumulator(known, engine.unknown_index());

  RunReport report;
  report.scenario = scenario;
  bool any = false;
  while (auto batch = stream.next()) {
    auto [preds, log] = engine.adapt_step(batch->inputs);
    log.domain_id = batch->domain_id;
    for (size_t i = 0; i < preds.size(); ++i)
      record(acc, preds[i], batch->true_labels[i], batch->domain_id);
    report.steps.push_back(std::move(log));
    any = true;
  }
  if (any) {
    auto [domains, average] = per_domain_average(acc, scenario);
    report.domains = std::move(domains);
    report.average_metric = average;
  }
  report.thresholds_frozen = engine.calibrator().frozen;
  if (engine.calibrator().frozen) {
    report.tau_l = engine.calibrator().tau_l;
    report.tau_u = engine.calibrator().tau_u;
  } else if (!engine.calibrator().lower_quantiles.empty()) {
    std::tie(report.tau_l, report.tau_u) = provisional_thresholds(engine.calibrator());
  }
  return report;
}

}  // namespace ctta

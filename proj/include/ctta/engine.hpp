#pragma once

#include "ctta/datagen.hpp"
#include "ctta/gmm.hpp"
#include "ctta/losses.hpp"
#include "ctta/mean_teacher.hpp"
#include "ctta/metrics.hpp"
#include "ctta/pseudo_label.hpp"

#include <cstdint>
#include <string>

namespace ctta {

struct AblationSwitches {
  bool mean_teacher = true;
  bool ensembling = true;
  bool consistency_src = true;
  bool consistency_mt = true;
  bool adapt = true;  // off = frozen source model with entropy thresholding
};

struct EngineConfig {
  double lr = 0.001;
  double momentum = 0.9;
  double alpha_mt = 0.99;
  double alpha_gmm = 0.99;
  int reduced_dim = 8;
  int n_init = 50;
  double p_reject = 0.5;
  OodMetric metric = OodMetric::NormalizedEntropy;
  LossWeights weights;
  double sigma_aug = 0.1;
  AblationSwitches ablation;
  /// Predict with the pre-step model state instead of the post-step one.
  bool predict_pre_update = false;
  /// Reduce teacher features with the student's projection instead of
  /// the teacher's EMA copy.
  bool shared_projection = false;
  double cov_eps = 1e-4;
  double s_min = 1e-8;
};

struct StepLog {
  int batch_index = 0;  // 1-based position in the stream
  int domain_id = -1;
  std::vector<long> known_counts;  // per class
  long unknown_count = 0;
  long ignored_count = 0;
  double loss_contrastive = 0.0;
  double loss_entropy = 0.0;
  double loss_src = 0.0;
  double loss_mt = 0.0;
  double loss_total = 0.0;
  double score_min = 0.0;
  double score_median = 0.0;
  double score_max = 0.0;
  std::vector<int> predictions;
  bool skipped = false;
};

struct RunReport {
  Scenario scenario = Scenario::OPDA;
  double average_metric = 0.0;
  std::vector<DomainMetric> domains;
  double tau_l = 0.0;
  double tau_u = 0.0;
  bool thresholds_frozen = false;
  std::vector<StepLog> steps;
};

/// Per-stream adaptation state machine. One instance per stream; steps
/// are strictly sequential. Ground-truth labels never enter: adapt_step
/// sees the input matrix only.
class AdaptEngine {
 public:
  AdaptEngine(const EngineConfig& cfg, const Architecture& arch, const ParamSet& source_params,
              std::uint64_t seed);

  /// Runs one full adaptation step on a batch and returns the per-sample
  /// predictions (class index or num_classes for unknown) plus the log.
  std::pair<std::vector<int>, StepLog> adapt_step(const Matrix& inputs);

  const ModelPair& models() const { return models_; }
  const GmmState& gmm() const { return gmm_; }
  const ThresholdCalibrator& calibrator() const { return calibrator_; }
  const EngineConfig& config() const { return cfg_; }
  int unknown_index() const { return arch_.num_classes; }

 private:
  struct Snapshot;
  std::pair<std::vector<int>, StepLog> source_only_step(const Matrix& inputs);
  Matrix teacher_reduced(const ForwardTrace& teacher_trace) const;
  std::vector<double> ood_scores(const Matrix& reduced, const std::vector<Vector>& resp) const;
  std::vector<int> predict(const Matrix& inputs, double tau_l, double tau_u);

  EngineConfig cfg_;
  Architecture arch_;
  ModelPair models_;
  OptimizerState opt_;
  GmmState gmm_;
  ThresholdCalibrator calibrator_;
  std::mt19937_64 rng_;
  int step_count_ = 0;
};

/// Consumes the stream once, predicting every batch at the step that saw
/// it, and aggregates per-domain metrics.
RunReport run(const EngineConfig& cfg, const Architecture& arch, const ParamSet& source_params,
              DomainStream& stream, Scenario scenario, std::uint64_t seed);

}  // namespace ctta

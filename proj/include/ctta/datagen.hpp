#pragma once

#include "ctta/metrics.hpp"
#include "ctta/net.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace ctta {

/// Affine domain transform: x -> scale * R(rotation) * x + translation
/// + noise_std * eta, with R rotating the first two input dimensions.
struct ShiftSpec {
  double rotation = 0.0;  // radians
  Vector translation;     // empty means zero
  double scale = 1.0;
  double noise_std = 0.0;
};

struct ScenarioConfig {
  int input_dim = 8;
  int shared = 4;
  int source_private = 2;
  int target_private = 4;
  Scenario scenario = Scenario::OPDA;
  std::vector<ShiftSpec> domains;
  int batch_size = 64;
  std::vector<int> batches_per_domain;
  std::uint64_t seed = 1;
  int source_samples_per_class = 200;
  double class_radius = 3.0;

  int num_total_classes() const { return shared + source_private + target_private; }
  int num_source_classes() const { return shared + source_private; }
  int num_target_classes() const { return shared + target_private; }
  /// Global ids: source classes are [0, n_src), target classes are the
  /// last n_tgt, so the shared block sits at [source_private, n_src).
  int first_target_class() const { return num_total_classes() - num_target_classes(); }
};

void validate(const ScenarioConfig& cfg);

struct Batch {
  Matrix inputs;                 // N_b x D
  std::vector<int> true_labels;  // metrics only, never shown to adaptation
  int domain_id = 0;
};

struct SourceData {
  Matrix inputs;
  std::vector<int> labels;
};

/// Single-pass batch source: each batch is yielded exactly once and
/// domain ids never decrease.
class DomainStream {
 public:
  DomainStream() = default;
  explicit DomainStream(std::vector<Batch> batches) : batches_(std::move(batches)) {}

  std::optional<Batch> next();
  int total_batches() const { return int(batches_.size()); }
  bool exhausted() const { return cursor_ >= batches_.size(); }

 private:
  std::vector<Batch> batches_;
  std::size_t cursor_ = 0;
};

/// Builds the class geometry (Gaussian blobs with means on a scaled
/// hypersphere), samples the labeled source set from source classes and
/// the continual target stream from target classes, one ShiftSpec per
/// contiguous, internally shuffled domain.
std::pair<SourceData, DomainStream> make_scenario(const ScenarioConfig& cfg);

Matrix apply_shift(const Matrix& points, const ShiftSpec& spec, std::mt19937_64& rng);

/// x + sigma_aug * eta; exact copy when sigma_aug is 0.
Matrix augment(const Matrix& inputs, double sigma_aug, std::mt19937_64& rng);

/// Cross-entropy training with label smoothing 0.1 until 95% train
/// accuracy or the epoch cap; throws if accuracy stays below 60%.
ParamSet pretrain_source(const Architecture& arch, const SourceData& data, int epochs, double lr,
                         std::mt19937_64& rng);

}  // namespace ctta

#pragma once

#include <map>
#include <unordered_set>
#include <vector>

namespace ctta {

enum class Scenario { PDA, ODA, OPDA };

struct BucketCounts {
  long known_total = 0;
  long known_correct = 0;
  long unknown_total = 0;
  long unknown_correct = 0;
};

/// Two-bucket accuracy bookkeeping per target domain. Ground-truth
/// labels enter only here, never the adaptation path.
struct MetricsAccumulator {
  std::unordered_set<int> known_set;
  int unknown_index = 0;  // prediction value meaning "unknown"
  std::map<int, BucketCounts> per_domain;
};

MetricsAccumulator make_accumulator(const std::vector<int>& known_classes, int unknown_index);

void record(MetricsAccumulator& acc, int prediction, int truth, int domain_id);

/// Harmonic mean of the two accuracies; h(a,a) == a exactly and
/// h(0,0) == 0 by the same branch.
double h_score(double acc_k, double acc_u);

struct DomainMetric {
  int domain_id = 0;
  BucketCounts counts;
  double acc_known = 0.0;
  double acc_unknown = 0.0;
  double value = 0.0;  // accuracy for PDA, H-score otherwise
};

/// Per-domain metric values plus their unweighted mean. PDA streams must
/// not contain unknown-bucket samples.
std::pair<std::vector<DomainMetric>, double> per_domain_average(const MetricsAccumulator& acc,
                                                                Scenario scenario);

}  // namespace ctta

#include "ctta/metrics.hpp"

#include <stdexcept>

namespace ctta {

MetricsAccumulator make_accumulator(const std::vector<int>& known_classes, int unknown_index) {
  MetricsAccumulator acc;
  acc.known_set.insert(known_classes.begin(), known_classes.end());
  acc.unknown_index = unknown_index;
  return acc;
}

void record(MetricsAccumulator& acc, int prediction, int truth, int domain_id) {
  BucketCounts& b = acc.per_domain[domain_id];
  if (acc.known_set.count(truth)) {
    b.known_total += 1;
    if (prediction == truth) b.known_correct += 1;
  } else {
    b.unknown_total += 1;
    if (prediction == acc.unknown_index) b.unknown_correct += 1;
  }
}

double h_score(double acc_k, double acc_u) {
  if (acc_k == acc_u) return acc_k;  // also settles 0/0 as 0
  return 2.0 * acc_k * acc_u / (acc_k + acc_u);
}

std::pair<std::vector<DomainMetric>, double> per_domain_average(const MetricsAccumulator& acc,
                                                                Scenario scenario) {
  if (acc.per_domain.empty())
    throw std::logic_error("per_domain_average: no domain recorded");
  std::vector<DomainMetric> out;
  double sum = 0.0;
  for (const auto& [domain_id, counts] : acc.per_domain) {
    DomainMetric m;
    m.domain_id = domain_id;
    m.counts = counts;
    if (scenario == Scenario::PDA && counts.unknown_total > 0)
      throw std::logic_error("per_domain_average: PDA stream contains unknown-class samples");
    m.acc_known =
        counts.known_total > 0 ? double(counts.known_correct) / double(counts.known_total) : 0.0;
    m.acc_unknown = counts.unknown_total > 0
                        ? double(counts.unknown_correct) / double(counts.unknown_total)
                        : 0.0;
    m.value = scenario == Scenario::PDA ? m.acc_known : h_score(m.acc_known, m.acc_unknown);
    sum += m.value;
    out.push_back(m);
  }
  return {out, sum / double(out.size())};
}

}  // namespace ctta

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctta/metrics.hpp"

#include <random>

using namespace ctta;

TEST_CASE("record routes samples into the right buckets") {
  MetricsAccumulator acc = make_accumulator({0, 1, 2}, 3);

  record(acc, 1, 1, 0);  // known, correct
  CHECK(acc.per_domain[0].known_total == 1);
  CHECK(acc.per_domain[0].known_correct == 1);

  record(acc, 3, 7, 0);  // target-private truth, rejected -> unknown correct
  CHECK(acc.per_domain[0].unknown_total == 1);
  CHECK(acc.per_domain[0].unknown_correct == 1);

  record(acc, 2, 7, 0);  // target-private truth, predicted known -> only total
  CHECK(acc.per_domain[0].unknown_total == 2);
  CHECK(acc.per_domain[0].unknown_correct == 1);

  record(acc, 0, 1, 0);  // known truth, wrong class
  CHECK(acc.per_domain[0].known_total == 2);
  CHECK(acc.per_domain[0].known_correct == 1);
}

TEST_CASE("h_score values and bounds") {
  CHECK(h_score(0.5, 0.5) == 0.5);
  CHECK(h_score(0.6, 0.0) == 0.0);
  CHECK(h_score(0.0, 0.0) == 0.0);
  CHECK(h_score(0.6, 0.4) == 0.48);
  for (double a : {0.0, 0.3, 0.7, 1.0}) CHECK(h_score(a, a) == a);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), b = u(rng);
    const double h = h_score(a, b);
    CHECK(h <= 2.0 * std::min(a, b) + 1e-12);
    CHECK(h <= 0.5 * (a + b) + 1e-12);
    CHECK(h >= -1e-12);
  }
}

TEST_CASE("per_domain_average is unweighted across domains") {
  MetricsAccumulator acc = make_accumulator({0, 1}, 2);
  // domain 0: acc_k = acc_u = 0.4 -> H = 0.4, few samples
  for (int i = 0; i < 2; ++i) record(acc, 0, 0, 0);
  for (int i = 0; i < 3; ++i) record(acc, 1, 0, 0);
  for (int i = 0; i < 2; ++i) record(acc, 2, 9, 0);
  for (int i = 0; i < 3; ++i) record(acc, 0, 9, 0);
  // domain 1: acc_k = acc_u = 0.6, many samples
  for (int i = 0; i < 6; ++i) record(acc, 1, 1, 1);
  for (int i = 0; i < 4; ++i) record(acc, 0, 1, 1);
  for (int i = 0; i < 6; ++i) record(acc, 2, 9, 1);
  for (int i = 0; i < 4; ++i) record(acc, 1, 9, 1);

  auto [domains, avg] = per_domain_average(acc, Scenario::OPDA);
  REQUIRE(domains.size() == 2);
  CHECK(domains[0].value == 0.4);
  CHECK(domains[1].value == 0.6);
  CHECK(avg == 0.5);
}

TEST_CASE("per_domain_average singleton and perfect runs") {
  MetricsAccumulator acc = make_accumulator({0, 1}, 2);
  record(acc, 0, 0, 5);
  record(acc, 2, 9, 5);
  auto [domains, avg] = per_domain_average(acc, Scenario::ODA);
  REQUIRE(domains.size() == 1);
  CHECK(domains[0].value == 1.0);
  CHECK(avg == 1.0);
}

TEST_CASE("per_domain_average PDA with unknown samples is a contract violation") {
  MetricsAccumulator acc = make_accumulator({0, 1}, 2);
  record(acc, 0, 0, 0);
  record(acc, 2, 9, 0);  // truth outside known set
  CHECK_THROWS_AS(per_domain_average(acc, Scenario::PDA), std::logic_error);
  CHECK_NOTHROW(per_domain_average(acc, Scenario::OPDA));
}

TEST_CASE("per_domain_average PDA uses plain accuracy") {
  MetricsAccumulator acc = make_accumulator({0, 1, 2}, 3);
  for (int i = 0; i < 3; ++i) record(acc, 1, 1, 0);
  record(acc, 0, 1, 0);
  auto [domains, avg] = per_domain_average(acc, Scenario::PDA);
  CHECK(domains[0].value == 0.75);
  CHECK(avg == 0.75);
}

TEST_CASE("duplicating batches within a domain leaves the average unchanged") {
  MetricsAccumulator acc = make_accumulator({0, 1}, 2);
  auto feed = [&](int times) {
    for (int t = 0; t < times; ++t) {
      record(acc, 0, 0, 0);
      record(acc, 1, 0, 0);
      record(acc, 2, 9, 0);
      record(acc, 2, 9, 1);
      record(acc, 0, 0, 1);
    }
  };
  feed(1);
  const double before = per_domain_average(acc, Scenario::OPDA).second;
  feed(3);
  const double after = per_domain_average(acc, Scenario::OPDA).second;
  CHECK(before == after);
}

TEST_CASE("per_domain_average requires at least one domain") {
  MetricsAccumulator acc = make_accumulator({0}, 1);
  CHECK_THROWS_AS(per_domain_average(acc, Scenario::ODA), std::logic_error);
}

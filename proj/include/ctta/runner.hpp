#pragma once

#include "ctta/config.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace ctta {

struct RunOutcome {
  std::string name;
  Scenario scenario = Scenario::OPDA;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunReport report;
};

std::string scenario_name(Scenario s);

/// Pretrains the source model for this (experiment, seed) and runs the
/// stream once. Deterministic in (experiment, seed).
RunOutcome run_experiment(const Experiment& exp, std::uint64_t seed);

nlohmann::json report_to_json(const RunReport& report);
nlohmann::json step_to_json(const StepLog& step);

std::string summary_csv(const std::vector<RunOutcome>& outcomes);

/// Executes every (experiment, seed) pair, writing
///   <out>/<name>.<seed>.report.json
///   <out>/<name>.<seed>.steps.jsonl
///   <out>/summary.csv
/// Failures land in the summary as rows with a non-ok status; the suite
/// keeps going. Returns 0 when every run succeeded.
int run_suite(const ExperimentSuite& suite, int jobs);

}  // namespace ctta

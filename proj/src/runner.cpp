#include "ctta/runner.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

namespace ctta {

namespace {

using nlohmann::json;

/// splitmix64, used to derive independent sub-seeds from the run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::PDA: return "pda";
    case Scenario::ODA: return "oda";
    case Scenario::OPDA: return "opda";
  }
  return "?";
}

RunOutcome run_experiment(const Experiment& exp, std::uint64_t seed) {
  RunOutcome out;
  out.name = exp.name;
  out.scenario = exp.scenario.scenario;
  out.seed = seed;
  try {
    ScenarioConfig scenario = exp.scenario;
    scenario.seed = mix_seed(seed, 0);
    auto [source_data, stream] = make_scenario(scenario);

    const Architecture arch = make_architecture(exp);
    std::mt19937_64 pretrain_rng(mix_seed(seed, 1));
    const ParamSet source = pretrain_source(arch, source_data, exp.model.pretrain_epochs,
                                            exp.model.pretrain_lr, pretrain_rng);

    out.report = run(exp.engine, arch, source, stream, scenario.scenario, mix_seed(seed, 2));
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

json step_to_json(const StepLog& step) {
  json j;
  j["batch_index"] = step.batch_index;
  j["domain_id"] = step.domain_id;
  j["known_counts"] = step.known_counts;
  j["unknown_count"] = step.unknown_count;
  j["ignored_count"] = step.ignored_count;
  j["loss"] = {{"contrastive", step.loss_contrastive},
               {"entropy", step.loss_entropy},
               {"consistency_src", step.loss_src},
               {"consistency_mt", step.loss_mt},
               {"total", step.loss_total}};
  j["score"] = {{"min", step.score_min}, {"median", step.score_median}, {"max", step.score_max}};
  j["predictions"] = step.predictions;
  j["skipped"] = step.skipped;
  return j;
}

json report_to_json(const RunReport& report) {
  json j;
  j["scenario"] = scenario_name(report.scenario);
  j["average_metric"] = report.average_metric;
  j["tau_l"] = report.tau_l;
  j["tau_u"] = report.tau_u;
  j["thresholds_frozen"] = report.thresholds_frozen;
  json domains = json::array();
  for (const auto& d : report.domains) {
    domains.push_back({{"domain_id", d.domain_id},
                       {"known_total", d.counts.known_total},
                       {"known_correct", d.counts.known_correct},
                       {"unknown_total", d.counts.unknown_total},
                       {"unknown_correct", d.counts.unknown_correct},
                       {"acc_known", d.acc_known},
                       {"acc_unknown", d.acc_unknown},
                       {"metric", d.value}});
  }
  j["domains"] = std::move(domains);
  return j;
}

std::string summary_csv(const std::vector<RunOutcome>& outcomes) {
  std::string csv = "name,scenario,seed,status,average_metric,per_domain_metrics,tau_l,tau_u\n";
  for (const auto& o : outcomes) {
    csv += o.name + "," + scenario_name(o.scenario) + "," + std::to_string(o.seed) + ",";
    if (!o.ok) {
      std::string msg = o.error;
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      csv += "error:" + msg + ",,,,\n";
      continue;
    }
    csv += "ok,";
    csv += fmt_double(o.report.average_metric) + ",";
    std::string per;
    for (size_t i = 0; i < o.report.domains.size(); ++i) {
      if (i) per += ";";
      per += fmt_double(o.report.domains[i].value);
    }
    csv += per + "," + fmt_double(o.report.tau_l) + "," + fmt_double(o.report.tau_u) + "\n";
  }
  return csv;
}

int run_suite(const ExperimentSuite& suite, int jobs) {
  namespace fs = std::filesystem;
  fs::create_directories(suite.output_dir);

  struct Unit {
    const Experiment* exp;
    std::uint64_t seed;
  };
  std::vector<Unit> units;
  for (const auto& exp : suite.experiments)
    for (auto seed : exp.seeds) units.push_back({&exp, seed});

  std::vector<RunOutcome> outcomes(units.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      RunOutcome out = run_experiment(*units[i].exp, units[i].seed);
      if (out.ok) {
        const std::string base =
            suite.output_dir + "/" + out.name + "." + std::to_string(out.seed);
        std::ofstream report(base + ".report.json");
        report << report_to_json(out.report).dump(2) << "\n";
        std::ofstream steps(base + ".steps.jsonl");
        for (const auto& s : out.report.steps) steps << step_to_json(s).dump() << "\n";
      }
      out.report.steps.clear();  // keep only what the summary needs
      outcomes[i] = std::move(out);
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, int(units.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ofstream summary(suite.output_dir + "/summary.csv");
  summary << summary_csv(outcomes);

  for (const auto& o : outcomes)
    if (!o.ok) return 1;
  return 0;
}

}  // namespace ctta

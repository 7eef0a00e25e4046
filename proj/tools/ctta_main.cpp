#include "ctta/config.hpp"
#include "ctta/runner.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  std::istringstream in(csv);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    seeds.push_back(std::stoull(token));
  }
  if (seeds.empty()) throw std::runtime_error("--seeds: no seeds given");
  return seeds;
}

void write_matrix_csv(const std::string& path, const ctta::Matrix& inputs,
                      const std::vector<int>& labels, const std::vector<int>& domain_ids) {
  std::ofstream out(path);
  out << "label";
  if (!domain_ids.empty()) out << ",domain_id";
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) out << ",x" << j;
  out << "\n";
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    out << labels[i];
    if (!domain_ids.empty()) out << "," << domain_ids[i];
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) out << "," << inputs(i, j);
    out << "\n";
  }
}

int dump_datasets(const ctta::ExperimentSuite& suite) {
  namespace fs = std::filesystem;
  fs::create_directories(suite.output_dir);
  for (const auto& exp : suite.experiments) {
    ctta::ScenarioConfig scenario = exp.scenario;
    scenario.seed = exp.seeds.front();
    auto [source, stream] = ctta::make_scenario(scenario);
    write_matrix_csv(suite.output_dir + "/" + exp.name + ".source.csv", source.inputs,
                     source.labels, {});
    ctta::Matrix all(0, scenario.input_dim);
    std::vector<int> labels, domains;
    while (auto batch = stream.next()) {
      const Eigen::Index base = all.rows();
      all.conservativeResize(base + batch->inputs.rows(), Eigen::NoChange);
      all.bottomRows(batch->inputs.rows()) = batch->inputs;
      labels.insert(labels.end(), batch->true_labels.begin(), batch->true_labels.end());
      domains.insert(domains.end(), batch->true_labels.size(), batch->domain_id);
    }
    write_matrix_csv(suite.output_dir + "/" + exp.name + ".stream.csv", all, labels, domains);
    std::cout << "dumped " << exp.name << " (" << all.rows() << " stream samples)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual test-time adaptation simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seeds_csv;
  int jobs = 1;

  CLI::App* run_cmd = app.add_subcommand("run", "Run an experiment suite");
  run_cmd->add_option("config", config_path, "Suite config file (JSON)")->required();
  run_cmd->add_option("--out", out_dir, "Output directory (overrides config)");
  run_cmd->add_option("--seeds", seeds_csv, "Comma-separated seed list (overrides config)");
  run_cmd->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

  CLI::App* dump_cmd = app.add_subcommand("dump", "Write the generated datasets as CSV");
  dump_cmd->add_option("config", config_path, "Suite config file (JSON)")->required();
  dump_cmd->add_option("--out", out_dir, "Output directory (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    ctta::ExperimentSuite suite = ctta::parse_config(config_path);
    if (!out_dir.empty()) suite.output_dir = out_dir;
    if (!seeds_csv.empty()) {
      const auto seeds = parse_seed_list(seeds_csv);
      for (auto& exp : suite.experiments) exp.seeds = seeds;
    }
    if (app.got_subcommand(dump_cmd)) return dump_datasets(suite);
    const int status = ctta::run_suite(suite, jobs);
    std::cout << "suite " << (status == 0 ? "completed" : "finished with failures") << ", outputs in "
              << suite.output_dir << "\n";
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

#include "ctta/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

namespace ctta {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::runtime_error("config: " + where + ": " + what);
}

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(where, "unknown key '" + key + "'");
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(where, std::string("bad value for '") + key + "'");
  }
}

void merge_into(json& base, const json& over) {
  for (const auto& [key, value] : over.items()) base[key] = value;
}

OodMetric parse_metric(const std::string& where, const std::string& s) {
  if (s == "mahalanobis") return OodMetric::Mahalanobis;
  if (s == "entropy") return OodMetric::NormalizedEntropy;
  fail(where, "ood_metric must be 'mahalanobis' or 'entropy', got '" + s + "'");
}

Scenario parse_scenario_kind(const std::string& where, const std::string& s) {
  if (s == "pda") return Scenario::PDA;
  if (s == "oda") return Scenario::ODA;
  if (s == "opda") return Scenario::OPDA;
  fail(where, "scenario must be 'pda', 'oda' or 'opda', got '" + s + "'");
}

EngineConfig parse_engine(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"lr", "momentum", "alpha_mt", "alpha_gmm", "reduced_dim", "n_init", "p_reject",
              "ood_metric", "lambda_entropy", "lambda_src", "lambda_mt", "temperature",
              "sigma_aug", "mean_teacher", "ensembling", "consistency_src", "consistency_mt",
              "adapt", "predict_pre_update", "shared_projection", "cov_eps", "s_min"});
  EngineConfig cfg;
  read(obj, where, "lr", cfg.lr);
  read(obj, where, "momentum", cfg.momentum);
  read(obj, where, "alpha_mt", cfg.alpha_mt);
  read(obj, where, "alpha_gmm", cfg.alpha_gmm);
  read(obj, where, "reduced_dim", cfg.reduced_dim);
  read(obj, where, "n_init", cfg.n_init);
  read(obj, where, "p_reject", cfg.p_reject);
  if (obj.contains("ood_metric"))
    cfg.metric = parse_metric(where, obj.at("ood_metric").get<std::string>());
  read(obj, where, "lambda_entropy", cfg.weights.lambda_entropy);
  read(obj, where, "lambda_src", cfg.weights.lambda_src);
  read(obj, where, "lambda_mt", cfg.weights.lambda_mt);
  read(obj, where, "temperature", cfg.weights.temperature);
  read(obj, where, "sigma_aug", cfg.sigma_aug);
  read(obj, where, "mean_teacher", cfg.ablation.mean_teacher);
  read(obj, where, "ensembling", cfg.ablation.ensembling);
  read(obj, where, "consistency_src", cfg.ablation.consistency_src);
  read(obj, where, "consistency_mt", cfg.ablation.consistency_mt);
  read(obj, where, "adapt", cfg.ablation.adapt);
  read(obj, where, "predict_pre_update", cfg.predict_pre_update);
  read(obj, where, "shared_projection", cfg.shared_projection);
  read(obj, where, "cov_eps", cfg.cov_eps);
  read(obj, where, "s_min", cfg.s_min);

  if (!(cfg.lr > 0.0)) fail(where, "lr must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail(where, "momentum must be in [0,1)");
  if (!(cfg.alpha_mt >= 0.0 && cfg.alpha_mt <= 1.0)) fail(where, "alpha_mt must be in [0,1]");
  if (!(cfg.alpha_gmm >= 0.0 && cfg.alpha_gmm <= 1.0)) fail(where, "alpha_gmm must be in [0,1]");
  if (cfg.reduced_dim < 1) fail(where, "reduced_dim must be >= 1");
  if (cfg.n_init < 1) fail(where, "n_init must be >= 1");
  if (!(cfg.p_reject > 0.0 && cfg.p_reject < 1.0)) fail(where, "p_reject must be in (0,1)");
  if (cfg.weights.lambda_entropy < 0.0) fail(where, "lambda_entropy must be >= 0");
  if (cfg.weights.lambda_src < 0.0) fail(where, "lambda_src must be >= 0");
  if (cfg.weights.lambda_mt < 0.0) fail(where, "lambda_mt must be >= 0");
  if (!(cfg.weights.temperature > 0.0)) fail(where, "temperature must be positive");
  if (cfg.sigma_aug < 0.0) fail(where, "sigma_aug must be >= 0");
  if (!(cfg.cov_eps > 0.0)) fail(where, "cov_eps must be positive");
  if (!(cfg.s_min > 0.0)) fail(where, "s_min must be positive");
  return cfg;
}

ShiftSpec parse_shift(const json& obj, const std::string& where, int input_dim) {
  check_keys(obj, where, {"rotation_deg", "translation", "scale", "noise_std"});
  ShiftSpec spec;
  double deg = 0.0;
  read(obj, where, "rotation_deg", deg);
  spec.rotation = deg * std::numbers::pi / 180.0;
  read(obj, where, "scale", spec.scale);
  read(obj, where, "noise_std", spec.noise_std);
  if (obj.contains("translation")) {
    const auto v = obj.at("translation").get<std::vector<double>>();
    if (int(v.size()) != input_dim) fail(where, "translation length must equal input_dim");
    spec.translation = Eigen::Map<const Vector>(v.data(), v.size());
  }
  return spec;
}

ScenarioConfig parse_scenario(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"input_dim", "shared", "source_private", "target_private", "scenario", "batch_size",
              "batches_per_domain", "domains", "source_samples_per_class", "class_radius"});
  ScenarioConfig cfg;
  read(obj, where, "input_dim", cfg.input_dim);
  read(obj, where, "shared", cfg.shared);
  read(obj, where, "source_private", cfg.source_private);
  read(obj, where, "target_private", cfg.target_private);
  if (obj.contains("scenario"))
    cfg.scenario = parse_scenario_kind(where, obj.at("scenario").get<std::string>());
  read(obj, where, "batch_size", cfg.batch_size);
  read(obj, where, "source_samples_per_class", cfg.source_samples_per_class);
  read(obj, where, "class_radius", cfg.class_radius);

  cfg.domains.clear();
  if (obj.contains("domains")) {
    const json& doms = obj.at("domains");
    if (!doms.is_array() || doms.empty()) fail(where, "domains must be a nonempty array");
    for (size_t i = 0; i < doms.size(); ++i)
      cfg.domains.push_back(
          parse_shift(doms[i], where + ".domains[" + std::to_string(i) + "]", cfg.input_dim));
  } else {
    // default desk-scale stream: four rotated domains
    for (double deg : {15.0, 30.0, 45.0, 60.0}) {
      ShiftSpec s;
      s.rotation = deg * std::numbers::pi / 180.0;
      cfg.domains.push_back(s);
    }
  }

  cfg.batches_per_domain.assign(cfg.domains.size(), 60);
  if (obj.contains("batches_per_domain")) {
    const json& bpd = obj.at("batches_per_domain");
    if (bpd.is_number_integer()) {
      cfg.batches_per_domain.assign(cfg.domains.size(), bpd.get<int>());
    } else if (bpd.is_array()) {
      const auto v = bpd.get<std::vector<int>>();
      if (v.size() != cfg.domains.size())
        fail(where, "batches_per_domain array must match domain count");
      cfg.batches_per_domain = v;
    } else {
      fail(where, "batches_per_domain must be an integer or an array");
    }
  }
  try {
    validate(cfg);
  } catch (const std::exception& e) {
    fail(where, e.what());
  }
  return cfg;
}

ModelConfig parse_model(const json& obj, const std::string& where) {
  check_keys(obj, where, {"feature_dim", "hidden", "pretrain_epochs", "pretrain_lr"});
  ModelConfig cfg;
  read(obj, where, "feature_dim", cfg.feature_dim);
  read(obj, where, "hidden", cfg.hidden);
  read(obj, where, "pretrain_epochs", cfg.pretrain_epochs);
  read(obj, where, "pretrain_lr", cfg.pretrain_lr);
  if (cfg.feature_dim < 1) fail(where, "feature_dim must be >= 1");
  for (int h : cfg.hidden)
    if (h < 1) fail(where, "hidden widths must be >= 1");
  if (cfg.pretrain_epochs < 1) fail(where, "pretrain_epochs must be >= 1");
  if (!(cfg.pretrain_lr > 0.0)) fail(where, "pretrain_lr must be positive");
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) fail(where, "seeds must be a nonempty array");
  std::vector<std::uint64_t> seeds;
  for (const auto& s : arr) {
    if (!s.is_number_unsigned() && !s.is_number_integer()) fail(where, "seeds must be integers");
    seeds.push_back(s.get<std::uint64_t>());
  }
  return seeds;
}

}  // namespace

ExperimentSuite parse_config_json(const json& root) {
  check_keys(root, "top level",
             {"config_version", "output_dir", "seeds", "defaults", "experiments"});
  if (!root.contains("config_version")) fail("top level", "missing config_version");
  const int version = root.at("config_version").get<int>();
  if (version != 1) fail("top level", "unsupported config_version " + std::to_string(version));

  ExperimentSuite suite;
  read(root, "top level", "output_dir", suite.output_dir);

  json def_engine = json::object();
  json def_scenario = json::object();
  json def_model = json::object();
  if (root.contains("defaults")) {
    const json& d = root.at("defaults");
    check_keys(d, "defaults", {"engine", "scenario", "model"});
    if (d.contains("engine")) def_engine = d.at("engine");
    if (d.contains("scenario")) def_scenario = d.at("scenario");
    if (d.contains("model")) def_model = d.at("model");
  }

  std::vector<std::uint64_t> default_seeds = {1};
  if (root.contains("seeds")) default_seeds = parse_seeds(root.at("seeds"), "top level");

  if (!root.contains("experiments")) fail("top level", "missing experiments");
  const json& exps = root.at("experiments");
  if (!exps.is_array() || exps.empty()) fail("top level", "experiments must be a nonempty array");

  std::set<std::string> names;
  for (size_t i = 0; i < exps.size(); ++i) {
    const std::string where = "experiments[" + std::to_string(i) + "]";
    const json& e = exps[i];
    check_keys(e, where, {"name", "engine", "scenario", "model", "seeds"});
    Experiment exp;
    if (!e.contains("name")) fail(where, "missing name");
    exp.name = e.at("name").get<std::string>();
    if (exp.name.empty()) fail(where, "name must be nonempty");
    if (!names.insert(exp.name).second) fail(where, "duplicate name '" + exp.name + "'");

    json eng = def_engine;
    if (e.contains("engine")) merge_into(eng, e.at("engine"));
    exp.engine = parse_engine(eng, where + ".engine");

    json sc = def_scenario;
    if (e.contains("scenario")) merge_into(sc, e.at("scenario"));
    exp.scenario = parse_scenario(sc, where + ".scenario");

    json mdl = def_model;
    if (e.contains("model")) merge_into(mdl, e.at("model"));
    exp.model = parse_model(mdl, where + ".model");

    exp.seeds = e.contains("seeds") ? parse_seeds(e.at("seeds"), where) : default_seeds;
    suite.experiments.push_back(std::move(exp));
  }
  return suite;
}

ExperimentSuite parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
  }
  return parse_config_json(root);
}

Architecture make_architecture(const Experiment& exp) {
  Architecture arch;
  arch.input_dim = exp.scenario.input_dim;
  arch.hidden = exp.model.hidden;
  arch.feature_dim = exp.model.feature_dim;
  arch.reduced_dim = exp.engine.reduced_dim;
  arch.num_classes = exp.scenario.num_source_classes();
  return arch;
}

}  // namespace ctta

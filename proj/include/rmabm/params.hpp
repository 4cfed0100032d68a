#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmabm/errors.hpp"

namespace rmabm {

using json = nlohmann::json;

// Structural constants of the economy. Population and learning values follow
// the experiment table; the remaining entries are documented calibration
// defaults and live in configs/default.json.
struct ModelParams {
  int num_workers = 1000;
  int num_cfirms = 100;
  int num_kfirms = 20;
  int num_capitalists = 50;
  int search_depth = 5;                   // z_c, consumption-market visits
  double labour_productivity = 0.5;       // alpha_N, goods per worker
  double capital_productivity = 1.0 / 3.0;  // alpha_K, goods per capital unit
  double quantity_adjustment = 0.9;       // rho
  double price_adjustment_max = 0.1;      // eta_bar
  double wage = 1.0;
  double propensity_income = 1.0;         // c_y
  double propensity_wealth = 0.02;        // c_w
  double interest_rate = 0.01;            // per step, on remaining principal
  double dividend_rate = 0.1;             // share of positive profits
  double capital_depreciation = 0.02;     // delta_K, per step
  double entrant_asset_fraction = 0.5;
  int loan_duration = 20;                 // steps, equal principal instalments
  int capital_search_depth = 2;           // z_k
  int labour_search_depth = 2;            // z_e

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid model params: " + msg); };
    if (num_workers <= 0) fail("num_workers must be > 0");
    if (num_cfirms <= 0) fail("num_cfirms must be > 0");
    if (num_kfirms <= 0) fail("num_kfirms must be > 0");
    if (num_capitalists <= 0) fail("num_capitalists must be > 0");
    if (search_depth <= 0) fail("search_depth must be > 0");
    if (search_depth > num_cfirms) fail("search_depth must be <= num_cfirms");
    if (labour_productivity <= 0) fail("labour_productivity must be > 0");
    if (capital_productivity <= 0) fail("capital_productivity must be > 0");
    if (quantity_adjustment <= 0 || quantity_adjustment > 1) fail("quantity_adjustment must be in (0,1]");
    if (price_adjustment_max <= 0 || price_adjustment_max >= 1) fail("price_adjustment_max must be in (0,1)");
    if (wage <= 0) fail("wage must be > 0");
    if (propensity_income <= 0 || propensity_income > 1) fail("propensity_income must be in (0,1]");
    if (propensity_wealth <= 0 || propensity_wealth > 1) fail("propensity_wealth must be in (0,1]");
    if (interest_rate < 0) fail("interest_rate must be >= 0");
    if (dividend_rate < 0 || dividend_rate > 1) fail("dividend_rate must be in [0,1]");
    if (capital_depreciation < 0 || capital_depreciation >= 1) fail("capital_depreciation must be in [0,1)");
    if (entrant_asset_fraction <= 0 || entrant_asset_fraction > 1) fail("entrant_asset_fraction must be in (0,1]");
    if (loan_duration <= 0) fail("loan_duration must be > 0");
    if (capital_search_depth <= 0 || capital_search_depth > num_kfirms) fail("capital_search_depth must be in [1, num_kfirms]");
    if (labour_search_depth <= 0) fail("labour_search_depth must be > 0");
  }
};

enum class PolicyMode { kShared, kIndependent };

inline std::string to_string(PolicyMode mode) {
  return mode == PolicyMode::kShared ? "shared" : "independent";
}

inline PolicyMode policy_mode_from_string(const std::string& s) {
  if (s == "shared") return PolicyMode::kShared;
  if (s == "independent") return PolicyMode::kIndependent;
  throw ConfigError("policy_mode must be \"shared\" or \"independent\", got \"" + s + "\"");
}

// Learning-agent configuration: observation/action grids, update constants,
// and the shared-vs-independent table wiring.
struct RLConfig {
  int n_states = 21;        // poles per observation dimension
  double obs_min = -1.0;    // log-units
  double obs_max = 1.0;
  int n_actions = 7;        // grid points per action dimension
  double act_min = -0.1;    // log-units
  double act_max = 0.1;
  double discount = 0.95;   // gamma
  double learning_rate = 0.1;  // alpha
  double bankruptcy_penalty = -100.0;
  PolicyMode policy_mode = PolicyMode::kIndependent;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid rl config: " + msg); };
    if (n_states < 2) fail("n_states must be >= 2");
    if (n_actions < 2) fail("n_actions must be >= 2");
    if (!(obs_min < obs_max)) fail("obs_min must be < obs_max");
    if (!(act_min < act_max)) fail("act_min must be < act_max");
    if (discount < 0 || discount >= 1) fail("discount must be in [0,1)");
    if (learning_rate <= 0 || learning_rate > 1) fail("learning_rate must be in (0,1]");
  }
};

// A full experiment: model + learner + episode protocol.
struct ExperimentConfig {
  ModelParams model;
  RLConfig rl;
  int num_rl_agents = 0;    // N; firms 0..N-1 switch to RL control
  int T_train = 100;        // training episodes
  int T_test = 20;          // test episodes
  int t_sim = 5000;         // post-burn-in steps per episode
  int t_burn_in = 300;      // heuristic-only steps per episode
  std::uint64_t base_seed = 0;
  bool fixed_episode_seed = false;    // reuse one economy seed across training episodes
  bool shuffle_update_order = false;  // shuffle per-step agent update order

  void validate() const {
    model.validate();
    rl.validate();
    auto fail = [](const std::string& msg) { throw ConfigError("invalid experiment config: " + msg); };
    if (num_rl_agents < 0) fail("num_rl_agents must be >= 0");
    if (num_rl_agents > model.num_cfirms) fail("num_rl_agents must be <= num_cfirms");
    if (T_train <= 0) fail("T_train must be > 0");
    if (T_test <= 0) fail("T_test must be > 0");
    if (t_sim <= 0) fail("t_sim must be > 0");
    if (t_burn_in <= 0) fail("t_burn_in must be > 0");
  }
};

namespace detail {

inline const json& require_key(const json& j, const std::string& scope, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ConfigError("missing required config key: " + (scope.empty() ? key : scope + "." + key));
  }
  return *it;
}

template <typename T>
T require(const json& j, const std::string& scope, const std::string& key) {
  const json& v = require_key(j, scope, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key has wrong type: " + (scope.empty() ? key : scope + "." + key));
  }
}

inline void reject_unknown(const json& j, const std::string& scope, const std::set<std::string>& known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown config key: " + (scope.empty() ? it.key() : scope + "." + it.key()));
    }
  }
}

}  // namespace detail

inline json to_json(const ModelParams& p) {
  return json{{"num_workers", p.num_workers},
              {"num_cfirms", p.num_cfirms},
              {"num_kfirms", p.num_kfirms},
              {"num_capitalists", p.num_capitalists},
              {"search_depth", p.search_depth},
              {"labour_productivity", p.labour_productivity},
              {"capital_productivity", p.capital_productivity},
              {"quantity_adjustment", p.quantity_adjustment},
              {"price_adjustment_max", p.price_adjustment_max},
              {"wage", p.wage},
              {"propensity_income", p.propensity_income},
              {"propensity_wealth", p.propensity_wealth},
              {"interest_rate", p.interest_rate},
              {"dividend_rate", p.dividend_rate},
              {"capital_depreciation", p.capital_depreciation},
              {"entrant_asset_fraction", p.entrant_asset_fraction},
              {"loan_duration", p.loan_duration},
              {"capital_search_depth", p.capital_search_depth},
              {"labour_search_depth", p.labour_search_depth}};
}

inline ModelParams model_params_from_json(const json& j, const std::string& scope = "model") {
  using detail::require;
  detail::reject_unknown(j, scope,
                         {"num_workers", "num_cfirms", "num_kfirms", "num_capitalists",
                          "search_depth", "labour_productivity", "capital_productivity",
                          "quantity_adjustment", "price_adjustment_max", "wage",
                          "propensity_income", "propensity_wealth", "interest_rate",
                          "dividend_rate", "capital_depreciation", "entrant_asset_fraction",
                          "loan_duration", "capital_search_depth", "labour_search_depth"});
  ModelParams p;
  p.num_workers = require<int>(j, scope, "num_workers");
  p.num_cfirms = require<int>(j, scope, "num_cfirms");
  p.num_kfirms = require<int>(j, scope, "num_kfirms");
  p.num_capitalists = require<int>(j, scope, "num_capitalists");
  p.search_depth = require<int>(j, scope, "search_depth");
  p.labour_productivity = require<double>(j, scope, "labour_productivity");
  p.capital_productivity = require<double>(j, scope, "capital_productivity");
  p.quantity_adjustment = require<double>(j, scope, "quantity_adjustment");
  p.price_adjustment_max = require<double>(j, scope, "price_adjustment_max");
  p.wage = require<double>(j, scope, "wage");
  p.propensity_income = require<double>(j, scope, "propensity_income");
  p.propensity_wealth = require<double>(j, scope, "propensity_wealth");
  p.interest_rate = require<double>(j, scope, "interest_rate");
  p.dividend_rate = require<double>(j, scope, "dividend_rate");
  p.capital_depreciation = require<double>(j, scope, "capital_depreciation");
  p.entrant_asset_fraction = require<double>(j, scope, "entrant_asset_fraction");
  p.loan_duration = require<int>(j, scope, "loan_duration");
  p.capital_search_depth = require<int>(j, scope, "capital_search_depth");
  p.labour_search_depth = require<int>(j, scope, "labour_search_depth");
  return p;
}

inline json to_json(const RLConfig& c) {
  return json{{"n_states", c.n_states},
              {"obs_min", c.obs_min},
              {"obs_max", c.obs_max},
              {"n_actions", c.n_actions},
              {"act_min", c.act_min},
              {"act_max", c.act_max},
              {"discount", c.discount},
              {"learning_rate", c.learning_rate},
              {"bankruptcy_penalty", c.bankruptcy_penalty},
              {"policy_mode", to_string(c.policy_mode)}};
}

inline RLConfig rl_config_from_json(const json& j, const std::string& scope = "rl") {
  using detail::require;
  detail::reject_unknown(j, scope,
                         {"n_states", "obs_min", "obs_max", "n_actions", "act_min", "act_max",
                          "discount", "learning_rate", "bankruptcy_penalty", "policy_mode"});
  RLConfig c;
  c.n_states = require<int>(j, scope, "n_states");
  c.obs_min = require<double>(j, scope, "obs_min");
  c.obs_max = require<double>(j, scope, "obs_max");
  c.n_actions = require<int>(j, scope, "n_actions");
  c.act_min = require<double>(j, scope, "act_min");
  c.act_max = require<double>(j, scope, "act_max");
  c.discount = require<double>(j, scope, "discount");
  c.learning_rate = require<double>(j, scope, "learning_rate");
  c.bankruptcy_penalty = require<double>(j, scope, "bankruptcy_penalty");
  c.policy_mode = policy_mode_from_string(require<std::string>(j, scope, "policy_mode"));
  return c;
}

inline json to_json(const ExperimentConfig& cfg) {
  return json{{"model", to_json(cfg.model)},
              {"rl", to_json(cfg.rl)},
              {"num_rl_agents", cfg.num_rl_agents},
              {"T_train", cfg.T_train},
              {"T_test", cfg.T_test},
              {"t_sim", cfg.t_sim},
              {"t_burn_in", cfg.t_burn_in},
              {"base_seed", cfg.base_seed},
              {"fixed_episode_seed", cfg.fixed_episode_seed},
              {"shuffle_update_order", cfg.shuffle_update_order}};
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  using detail::require;
  detail::reject_unknown(j, "",
                         {"model", "rl", "num_rl_agents", "T_train", "T_test", "t_sim",
                          "t_burn_in", "base_seed", "fixed_episode_seed",
                          "shuffle_update_order"});
  ExperimentConfig cfg;
  cfg.model = model_params_from_json(detail::require_key(j, "", "model"));
  cfg.rl = rl_config_from_json(detail::require_key(j, "", "rl"));
  cfg.num_rl_agents = require<int>(j, "", "num_rl_agents");
  cfg.T_train = require<int>(j, "", "T_train");
  cfg.T_test = require<int>(j, "", "T_test");
  cfg.t_sim = require<int>(j, "", "t_sim");
  cfg.t_burn_in = require<int>(j, "", "t_burn_in");
  cfg.base_seed = require<std::uint64_t>(j, "", "base_seed");
  // Optional experiment flags.
  cfg.fixed_episode_seed = j.value("fixed_episode_seed", false);
  cfg.shuffle_update_order = j.value("shuffle_update_order", false);
  return cfg;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("cannot parse JSON in " + path + ": " + e.what());
  }
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  ExperimentConfig cfg = experiment_config_from_json(load_json_file(path));
  cfg.validate();
  return cfg;
}

// Applies one `--set key=value` override onto a config JSON tree. Accepts
// dotted paths ("model.search_depth") plus the conventional short symbols.
inline void apply_config_override(json& j, const std::string& key, const std::string& value) {
  static const std::set<std::string> kModelKeys = {
      "num_workers", "num_cfirms", "num_kfirms", "num_capitalists", "search_depth",
      "labour_productivity", "capital_productivity", "quantity_adjustment",
      "price_adjustment_max", "wage", "propensity_income", "propensity_wealth",
      "interest_rate", "dividend_rate", "capital_depreciation", "entrant_asset_fraction",
      "loan_duration", "capital_search_depth", "labour_search_depth"};
  static const std::set<std::string> kRlKeys = {
      "n_states", "obs_min", "obs_max", "n_actions", "act_min", "act_max",
      "discount", "learning_rate", "bankruptcy_penalty", "policy_mode"};

  std::string path = key;
  if (key == "N") {
    path = "num_rl_agents";
  } else if (key == "z_c") {
    path = "model.search_depth";
  } else if (key == "policy_mode") {
    path = "rl.policy_mode";
  } else if (kModelKeys.count(key)) {
    path = "model." + key;
  } else if (kRlKeys.count(key)) {
    path = "rl." + key;
  }

  json* node = &j;
  std::size_t start = 0;
  for (std::size_t dot = path.find('.'); dot != std::string::npos;
       dot = path.find('.', start)) {
    const std::string part = path.substr(start, dot - start);
    if (!node->contains(part)) throw ConfigError("unknown config key in --set: " + key);
    node = &(*node)[part];
    start = dot + 1;
  }
  const std::string leaf = path.substr(start);
  if (!node->contains(leaf)) throw ConfigError("unknown config key in --set: " + key);

  json& slot = (*node)[leaf];
  try {
    if (slot.is_string()) {
      slot = value;
    } else if (slot.is_boolean()) {
      if (value == "true" || value == "1") slot = true;
      else if (value == "false" || value == "0") slot = false;
      else throw ConfigError("expected boolean for --set " + key);
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      slot = static_cast<std::int64_t>(std::stoll(value));
    } else {
      slot = std::stod(value);
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("cannot parse value for --set " + key + "=" + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for --set " + key + "=" + value);
  }
}

}  // namespace rmabm

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmabm/economy.hpp"
#include "rmabm/errors.hpp"
#include "rmabm/metrics.hpp"
#include "rmabm/params.hpp"
#include "rmabm/qlearning.hpp"
#include "rmabm/util.hpp"

namespace rmabm {

// Seed offsets keep training, test and impulse-response streams disjoint.
inline constexpr std::uint64_t kTestSeedOffset = 1'000'000;
inline constexpr std::uint64_t kIrfSeedOffset = 2'000'000;

// Exploration schedule over training episodes (tau starts at 1):
//   epsilon = max(0.9^(tau-1), 0.01)
inline double epsilon_schedule(int tau) {
  return std::max(std::pow(0.9, tau - 1), 0.01);
}

// The trained artifact: one table in shared mode, one per agent otherwise.
struct TrainedPolicySet {
  PolicyMode mode = PolicyMode::kIndependent;
  std::vector<QTable> tables;
  json config_echo;
  double final_epsilon = 0.0;

  QTable& table_for(int agent) {
    return tables[mode == PolicyMode::kShared ? 0 : static_cast<std::size_t>(agent)];
  }
  const QTable& table_for(int agent) const {
    return tables[mode == PolicyMode::kShared ? 0 : static_cast<std::size_t>(agent)];
  }
};

inline TrainedPolicySet make_policy_set(const ExperimentConfig& cfg) {
  TrainedPolicySet ps;
  ps.mode = cfg.rl.policy_mode;
  ps.config_echo = to_json(cfg);
  ps.final_epsilon = 1.0;
  const int n_tables =
      cfg.num_rl_agents == 0 ? 0 : (ps.mode == PolicyMode::kShared ? 1 : cfg.num_rl_agents);
  ps.tables.assign(static_cast<std::size_t>(n_tables), QTable(cfg.rl));
  return ps;
}

// One-off budget shock: household budgets are multiplied by (1 + size) for
// steps in [t_start, t_start + duration).
struct ShockSpec {
  double size = 0.0;
  long long t_start = 0;
  int duration = 1;
};

namespace detail {

inline void check_policies(const ExperimentConfig& cfg, const TrainedPolicySet& policies) {
  if (cfg.num_rl_agents == 0) return;
  const std::size_t expected = cfg.rl.policy_mode == PolicyMode::kShared
                                   ? 1u
                                   : static_cast<std::size_t>(cfg.num_rl_agents);
  if (policies.mode != cfg.rl.policy_mode) {
    throw ConfigError("policy set mode does not match the experiment config");
  }
  if (policies.tables.size() != expected) {
    throw ConfigError("policy set has " + std::to_string(policies.tables.size()) +
                      " tables, expected " + std::to_string(expected));
  }
  for (const auto& q : policies.tables) {
    if (q.n_states != cfg.rl.n_states || q.n_actions != cfg.rl.n_actions) {
      throw ConfigError("policy table shape does not match the experiment config");
    }
  }
}

}  // namespace detail

// Runs one episode: t_burn_in heuristic-only steps, then firms 0..N-1 switch
// to RL control for t_sim further steps. When learning, every agent performs
// one epsilon-greedy selection and one Bellman update per step; otherwise
// selection is greedy (epsilon forced to 0) and tables stay untouched.
inline std::vector<MetricsFrame> run_episode(const ExperimentConfig& cfg,
                                             TrainedPolicySet& policies, double epsilon,
                                             std::uint64_t seed, bool learning,
                                             const ShockSpec* shock = nullptr) {
  cfg.validate();
  detail::check_policies(cfg, policies);
  const int n_agents = cfg.num_rl_agents;
  const double eps = learning ? epsilon : 0.0;

  EconomyState econ = init_economy(cfg.model, seed);
  const int n_cfirms = cfg.model.num_cfirms;
  const long long total_steps = cfg.t_burn_in + cfg.t_sim;
  std::vector<MetricsFrame> frames;
  frames.reserve(static_cast<std::size_t>(total_steps));
  std::vector<FirmDecision> decisions(static_cast<std::size_t>(n_cfirms));

  auto heuristic_for = [&](const CFirmState& f) {
    HeuristicInputs in;
    in.price = f.price;
    in.output = f.output;
    in.target = f.target_output;
    in.firm_stock = f.output - f.demand;
    in.price_delta = f.price - econ.avg_price;
    return heuristic_decide(in, cfg.model.quantity_adjustment, cfg.model.price_adjustment_max,
                            econ.rng);
  };
  auto shock_boost = [&](long long t) {
    if (shock == nullptr) return 1.0;
    return (t >= shock->t_start && t < shock->t_start + shock->duration) ? 1.0 + shock->size : 1.0;
  };

  for (long long t = 1; t <= cfg.t_burn_in; ++t) {
    for (int i = 0; i < n_cfirms; ++i) decisions[static_cast<std::size_t>(i)] = heuristic_for(econ.cfirms[static_cast<std::size_t>(i)]);
    econ.consumption_boost = shock_boost(t);
    frames.push_back(step_economy(econ, decisions));
  }
  econ.rebase_price_index();

  struct AgentRuntime {
    DiscreteState state;
    int a_price = 0;
    int a_quantity = 0;
  };
  std::vector<AgentRuntime> agents(static_cast<std::size_t>(n_agents));
  for (int a = 0; a < n_agents; ++a) {
    const auto& q = policies.table_for(a);
    agents[static_cast<std::size_t>(a)].state =
        discretize_observation(observe(econ.cfirms[static_cast<std::size_t>(a)], econ.avg_price), q);
  }
  std::vector<int> update_order(static_cast<std::size_t>(n_agents));
  std::iota(update_order.begin(), update_order.end(), 0);
  std::vector<double> step_rewards(static_cast<std::size_t>(n_agents));
  std::vector<DiscreteState> next_states(static_cast<std::size_t>(n_agents));

  for (long long t = cfg.t_burn_in + 1; t <= total_steps; ++t) {
    for (int a = 0; a < n_agents; ++a) {
      auto& rt = agents[static_cast<std::size_t>(a)];
      const auto& q = policies.table_for(a);
      const auto [ap, ay] = select_action(q, rt.state, eps, econ.rng);
      rt.a_price = ap;
      rt.a_quantity = ay;
      const auto& firm = econ.cfirms[static_cast<std::size_t>(a)];
      decisions[static_cast<std::size_t>(a)] =
          apply_action(firm.price, firm.target_output, make_action(q, ap, ay));
    }
    for (int i = n_agents; i < n_cfirms; ++i) {
      decisions[static_cast<std::size_t>(i)] = heuristic_for(econ.cfirms[static_cast<std::size_t>(i)]);
    }
    econ.consumption_boost = shock_boost(t);
    MetricsFrame frame = step_economy(econ, decisions);

    if (n_agents > 0) {
      for (int a = 0; a < n_agents; ++a) {
        const std::size_t ai = static_cast<std::size_t>(a);
        step_rewards[ai] = compute_reward(frame.profit[ai], frame.assets[ai],
                                          cfg.rl.bankruptcy_penalty);
        frame.reward[ai] = step_rewards[ai];
        next_states[ai] = discretize_observation(
            observe(econ.cfirms[ai], econ.avg_price), policies.table_for(a));
      }
      if (learning) {
        if (cfg.shuffle_update_order && n_agents > 1) econ.rng.shuffle(update_order);
        for (int a : update_order) {
          const auto& rt = agents[static_cast<std::size_t>(a)];
          q_update(policies.table_for(a), rt.state, rt.a_price, rt.a_quantity,
                   step_rewards[static_cast<std::size_t>(a)],
                   next_states[static_cast<std::size_t>(a)], cfg.rl.learning_rate,
                   cfg.rl.discount);
        }
      }
      for (int a = 0; a < n_agents; ++a) {
        agents[static_cast<std::size_t>(a)].state = next_states[static_cast<std::size_t>(a)];
      }
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

// Per-episode training diagnostics.
struct TrainingCurvePoint {
  int episode = 0;
  double epsilon = 0.0;
  double mean_rl_reward = 0.0;         // per step, averaged over RL agents
  double mean_heuristic_profit = 0.0;  // per step, averaged over heuristic firms
};

struct TrainResult {
  TrainedPolicySet policies;
  std::vector<TrainingCurvePoint> curve;
};

namespace detail {

// Post-burn-in per-step means over a firm-id range.
inline double window_mean(const std::vector<MetricsFrame>& frames, int t_burn_in, int id_begin,
                          int id_end, bool use_reward) {
  if (id_begin >= id_end) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  long long n = 0;
  for (const auto& f : frames) {
    if (f.t <= t_burn_in) continue;
    for (int i = id_begin; i < id_end; ++i) {
      const double v = use_reward ? f.reward[static_cast<std::size_t>(i)]
                                  : f.profit[static_cast<std::size_t>(i)];
      if (std::isnan(v)) continue;
      total += v;
      ++n;
    }
  }
  return n > 0 ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

// Trains for T_train episodes with fresh economies and persistent Q-tables.
inline TrainResult train(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainResult result{make_policy_set(cfg), {}};
  result.curve.reserve(static_cast<std::size_t>(cfg.T_train));
  for (int tau = 1; tau <= cfg.T_train; ++tau) {
    const double eps = epsilon_schedule(tau);
    const std::uint64_t seed =
        cfg.fixed_episode_seed ? cfg.base_seed + 1 : cfg.base_seed + static_cast<std::uint64_t>(tau);
    const auto frames = run_episode(cfg, result.policies, eps, seed, /*learning=*/true);
    TrainingCurvePoint point;
    point.episode = tau;
    point.epsilon = eps;
    point.mean_rl_reward =
        detail::window_mean(frames, cfg.t_burn_in, 0, cfg.num_rl_agents, /*use_reward=*/true);
    point.mean_heuristic_profit = detail::window_mean(frames, cfg.t_burn_in, cfg.num_rl_agents,
                                                      cfg.model.num_cfirms, /*use_reward=*/false);
    result.curve.push_back(point);
    result.policies.final_epsilon = eps;
  }
  return result;
}

// Cross-episode aggregates of greedy test runs. Per-firm entries are the
// mean across episodes of per-episode statistics; *_std entries are one
// standard deviation across episodes.
struct EvalReport {
  int episodes = 0;
  int gdp_window = 0;
  std::vector<std::uint8_t> is_rl;
  std::vector<double> median_log_price_delta, median_log_price_delta_std;
  std::vector<double> median_sales, median_sales_std;
  std::vector<double> mean_profit, mean_profit_std;
  std::vector<double> mean_reward, mean_reward_std;                // RL firms only, NaN otherwise
  std::vector<double> cumulative_return, cumulative_return_std;    // RL firms only, NaN otherwise
  std::vector<double> gdp_mean_per_episode;   // real GDP mean over the window
  std::vector<double> gdp_std_per_episode;    // real GDP std over the window
  std::vector<double> rl_mean_reward_per_episode;        // NaN when N = 0
  std::vector<double> heuristic_mean_profit_per_episode; // NaN when N = F_c
  std::vector<std::uint64_t> episode_seeds;
  double gdp_mean = 0.0, gdp_mean_std = 0.0;
  double gdp_std = 0.0, gdp_std_std = 0.0;
};

// Holds one episode's per-firm statistics while aggregating.
struct EpisodeFirmStats {
  std::vector<double> median_log_price_delta;
  std::vector<double> median_sales;
  std::vector<double> mean_profit;
  std::vector<double> mean_reward;
  std::vector<double> cumulative_return;
  double gdp_mean = 0.0;
  double gdp_std = 0.0;
  double rl_mean_reward = 0.0;
  double heuristic_mean_profit = 0.0;
};

inline EpisodeFirmStats episode_firm_stats(const std::vector<MetricsFrame>& frames, int t_burn_in,
                                           int n_rl, double gamma, int gdp_window) {
  const std::size_t n = frames.empty() ? 0 : frames.front().price.size();
  EpisodeFirmStats st;
  st.median_log_price_delta.assign(n, std::numeric_limits<double>::quiet_NaN());
  st.median_sales.assign(n, std::numeric_limits<double>::quiet_NaN());
  st.mean_profit.assign(n, std::numeric_limits<double>::quiet_NaN());
  st.mean_reward.assign(n, std::numeric_limits<double>::quiet_NaN());
  st.cumulative_return.assign(n, std::numeric_limits<double>::quiet_NaN());

  std::vector<double> scratch;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < n; ++i) {
    scratch.clear();
    for (const auto& f : frames) {
      if (f.t <= t_burn_in) continue;
      scratch.push_back(std::log(f.price[i] / f.avg_price));
    }
    st.median_log_price_delta[i] = median_inplace(scratch);
    scratch.clear();
    for (const auto& f : frames) {
      if (f.t <= t_burn_in) continue;
      scratch.push_back(f.sales[i]);
    }
    st.median_sales[i] = median_inplace(scratch);
    scratch.clear();
    for (const auto& f : frames) {
      if (f.t <= t_burn_in) continue;
      scratch.push_back(f.profit[i]);
    }
    st.mean_profit[i] = mean_of(scratch);
    if (static_cast<int>(i) < n_rl) {
      rewards.clear();
      for (const auto& f : frames) {
        if (f.t <= t_burn_in) continue;
        rewards.push_back(f.reward[i]);
      }
      st.mean_reward[i] = mean_of(rewards);
      st.cumulative_return[i] = cumulative_return(rewards, gamma);
    }
  }

  if (gdp_window > static_cast<int>(frames.size())) {
    throw ConfigError("gdp window larger than the episode length");
  }
  std::vector<double> tail;
  tail.reserve(static_cast<std::size_t>(gdp_window));
  for (std::size_t i = frames.size() - static_cast<std::size_t>(gdp_window); i < frames.size(); ++i) {
    tail.push_back(frames[i].real_gdp);
  }
  st.gdp_mean = mean_of(tail);
  st.gdp_std = stdev_of(tail);
  st.rl_mean_reward = detail::window_mean(frames, t_burn_in, 0, n_rl, /*use_reward=*/true);
  st.heuristic_mean_profit = detail::window_mean(frames, t_burn_in, n_rl,
                                                 static_cast<int>(n), /*use_reward=*/false);
  return st;
}

// Optional per-episode frame sink for callers that persist raw streams.
using FrameSink = std::function<void(int episode_index, const std::vector<MetricsFrame>&)>;

// Runs T_test greedy episodes on distinct seeds and aggregates. Never
// mutates the policy tables.
inline EvalReport evaluate(const ExperimentConfig& cfg, const TrainedPolicySet& policies,
                           int jobs = 1, const FrameSink& sink = nullptr,
                           int gdp_window = 1000) {
  cfg.validate();
  detail::check_policies(cfg, policies);
  const int episodes = cfg.T_test;
  const int window = std::min<long long>(gdp_window, cfg.t_burn_in + cfg.t_sim);
  std::vector<EpisodeFirmStats> per_episode(static_cast<std::size_t>(episodes));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(episodes));
  for (int k = 0; k < episodes; ++k) {
    seeds[static_cast<std::size_t>(k)] = cfg.base_seed + kTestSeedOffset + static_cast<std::uint64_t>(k);
  }

  // Greedy episodes never write to the tables, so sharing the set across
  // threads is safe; the const_cast only satisfies run_episode's signature.
  auto& mutable_policies = const_cast<TrainedPolicySet&>(policies);
  std::mutex sink_mutex;
  parallel_for(jobs, episodes, [&](int k) {
    const auto frames = run_episode(cfg, mutable_policies, 0.0, seeds[static_cast<std::size_t>(k)],
                                    /*learning=*/false);
    per_episode[static_cast<std::size_t>(k)] = episode_firm_stats(
        frames, cfg.t_burn_in, cfg.num_rl_agents, cfg.rl.discount, window);
    if (sink) {
      std::scoped_lock lock(sink_mutex);
      sink(k, frames);
    }
  });

  const std::size_t n = static_cast<std::size_t>(cfg.model.num_cfirms);
  EvalReport report;
  report.episodes = episodes;
  report.gdp_window = window;
  report.episode_seeds = seeds;
  report.is_rl.assign(n, 0);
  for (int i = 0; i < cfg.num_rl_agents; ++i) report.is_rl[static_cast<std::size_t>(i)] = 1;

  auto reduce = [&](auto member, std::vector<double>& out_mean, std::vector<double>& out_std) {
    out_mean.assign(n, std::numeric_limits<double>::quiet_NaN());
    out_std.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> column(static_cast<std::size_t>(episodes));
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < episodes; ++k) {
        column[static_cast<std::size_t>(k)] = (per_episode[static_cast<std::size_t>(k)].*member)[i];
      }
      out_mean[i] = mean_of(column);
      out_std[i] = stdev_of(column);
    }
  };
  reduce(&EpisodeFirmStats::median_log_price_delta, report.median_log_price_delta,
         report.median_log_price_delta_std);
  reduce(&EpisodeFirmStats::median_sales, report.median_sales, report.median_sales_std);
  reduce(&EpisodeFirmStats::mean_profit, report.mean_profit, report.mean_profit_std);
  reduce(&EpisodeFirmStats::mean_reward, report.mean_reward, report.mean_reward_std);
  reduce(&EpisodeFirmStats::cumulative_return, report.cumulative_return,
         report.cumulative_return_std);

  report.gdp_mean_per_episode.resize(static_cast<std::size_t>(episodes));
  report.gdp_std_per_episode.resize(static_cast<std::size_t>(episodes));
  report.rl_mean_reward_per_episode.resize(static_cast<std::size_t>(episodes));
  report.heuristic_mean_profit_per_episode.resize(static_cast<std::size_t>(episodes));
  for (int k = 0; k < episodes; ++k) {
    const auto& ep = per_episode[static_cast<std::size_t>(k)];
    report.gdp_mean_per_episode[static_cast<std::size_t>(k)] = ep.gdp_mean;
    report.gdp_std_per_episode[static_cast<std::size_t>(k)] = ep.gdp_std;
    report.rl_mean_reward_per_episode[static_cast<std::size_t>(k)] = ep.rl_mean_reward;
    report.heuristic_mean_profit_per_episode[static_cast<std::size_t>(k)] = ep.heuristic_mean_profit;
  }
  report.gdp_mean = mean_of(report.gdp_mean_per_episode);
  report.gdp_mean_std = stdev_of(report.gdp_mean_per_episode);
  report.gdp_std = mean_of(report.gdp_std_per_episode);
  report.gdp_std_std = stdev_of(report.gdp_std_per_episode);
  return report;
}

// --- TrainedPolicySet persistence -------------------------------------------

inline constexpr char kPolicySetMagic[4] = {'R', 'M', 'P', 'S'};
inline constexpr std::uint32_t kPolicySetVersion = 1;

inline void write_policy_set(const std::string& path, const TrainedPolicySet& ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  detail::write_bytes(out, kPolicySetMagic, 4);
  detail::write_pod<std::uint32_t>(out, kPolicySetVersion);
  detail::write_pod<std::uint8_t>(out, ps.mode == PolicyMode::kShared ? 0 : 1);
  detail::write_pod<double>(out, ps.final_epsilon);
  const std::string echo = ps.config_echo.dump();
  detail::write_pod<std::uint64_t>(out, echo.size());
  detail::write_bytes(out, echo.data(), echo.size());
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ps.tables.size()));
  for (const auto& q : ps.tables) write_qtable(out, q);
  if (!out) throw IoError("write failed: " + path);
}

inline TrainedPolicySet read_policy_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open policy file: " + path);
  try {
    char magic[4];
    detail::read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kPolicySetMagic, 4) != 0) throw IoError("bad magic");
    const auto version = detail::read_pod<std::uint32_t>(in, "version");
    if (version != kPolicySetVersion) throw IoError("unsupported version");
    TrainedPolicySet ps;
    ps.mode = detail::read_pod<std::uint8_t>(in, "mode") == 0 ? PolicyMode::kShared
                                                              : PolicyMode::kIndependent;
    ps.final_epsilon = detail::read_pod<double>(in, "final_epsilon");
    const auto echo_len = detail::read_pod<std::uint64_t>(in, "config echo length");
    if (echo_len > (1u << 26)) throw IoError("config echo too large");
    std::string echo(echo_len, '\0');
    detail::read_bytes(in, echo.data(), echo_len, "config echo");
    ps.config_echo = json::parse(echo, nullptr, /*allow_exceptions=*/false);
    if (ps.config_echo.is_discarded()) throw IoError("corrupt config echo");
    const auto n_tables = detail::read_pod<std::uint32_t>(in, "table count");
    if (n_tables > 100000) throw IoError("implausible table count");
    ps.tables.reserve(n_tables);
    for (std::uint32_t i = 0; i < n_tables; ++i) ps.tables.push_back(read_qtable(in));
    return ps;
  } catch (const IoError& e) {
    throw IoError("corrupt policy file " + path + ": " + e.what());
  }
}

}  // namespace rmabm

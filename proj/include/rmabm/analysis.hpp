#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rmabm/errors.hpp"
#include "rmabm/harness.hpp"
#include "rmabm/metrics.hpp"
#include "rmabm/util.hpp"

namespace rmabm {

// Post-burn-in behaviour of one firm within one episode.
struct FirmSummary {
  int firm_id = 0;
  double median_log_price_delta = 0.0;  // log-units vs the market average
  double median_sales = 0.0;            // goods per step
  double mean_reward = 0.0;             // NaN for firms never under RL control
};

enum class StrategyLabel { kMarketPower, kDumping, kPerfectCompetition };

inline std::string to_string(StrategyLabel label) {
  switch (label) {
    case StrategyLabel::kMarketPower: return "market_power";
    case StrategyLabel::kDumping: return "dumping";
    default: return "perfect_competition";
  }
}

// Configurable decision boundaries for the three observed regimes.
struct StrategyThresholds {
  double market_power_min_log_price_delta = 0.25;
  double market_power_max_sales_ratio = 0.5;  // vs market median sales
  double dumping_max_log_price_delta = -0.05;
  double dumping_min_sales_ratio = 1.5;
};

inline FirmSummary summarize_firm(std::span<const MetricsFrame> frames, int firm_id,
                                  int t_burn_in) {
  FirmSummary s;
  s.firm_id = firm_id;
  const std::size_t i = static_cast<std::size_t>(firm_id);
  std::vector<double> scratch;
  for (const auto& f : frames) {
    if (f.t <= t_burn_in) continue;
    scratch.push_back(std::log(f.price[i] / f.avg_price));
  }
  s.median_log_price_delta = median_inplace(scratch);
  scratch.clear();
  for (const auto& f : frames) {
    if (f.t <= t_burn_in) continue;
    scratch.push_back(f.sales[i]);
  }
  s.median_sales = median_inplace(scratch);
  scratch.clear();
  for (const auto& f : frames) {
    if (f.t <= t_burn_in) continue;
    if (!std::isnan(f.reward[i])) scratch.push_back(f.reward[i]);
  }
  s.mean_reward = mean_of(scratch);
  return s;
}

// Total and deterministic: every summary gets exactly one label.
inline StrategyLabel classify_strategy(const FirmSummary& s, double market_median_sales,
                                       const StrategyThresholds& th = {}) {
  if (s.median_log_price_delta > th.market_power_min_log_price_delta &&
      s.median_sales < th.market_power_max_sales_ratio * market_median_sales) {
    return StrategyLabel::kMarketPower;
  }
  if (s.median_log_price_delta < th.dumping_max_log_price_delta &&
      s.median_sales > th.dumping_min_sales_ratio * market_median_sales) {
    return StrategyLabel::kDumping;
  }
  return StrategyLabel::kPerfectCompetition;
}

struct GdpStats {
  double mean = 0.0;
  double std = 0.0;
};

// Mean and population std of real GDP over the final `window` steps of one
// episode.
inline GdpStats gdp_stats(std::span<const MetricsFrame> frames, int window = 1000) {
  if (window <= 0 || static_cast<std::size_t>(window) > frames.size()) {
    throw ConfigError("gdp_stats: window must be in [1, episode length]");
  }
  std::vector<double> tail;
  tail.reserve(static_cast<std::size_t>(window));
  for (std::size_t i = frames.size() - static_cast<std::size_t>(window); i < frames.size(); ++i) {
    tail.push_back(frames[i].real_gdp);
  }
  return GdpStats{mean_of(tail), stdev_of(tail)};
}

struct GdpStatsAggregate {
  int episodes = 0;
  double mean = 0.0, mean_se = 0.0;  // cross-episode mean and standard error
  double std = 0.0, std_se = 0.0;
};

inline GdpStatsAggregate aggregate_gdp_stats(std::span<const GdpStats> per_episode) {
  GdpStatsAggregate agg;
  agg.episodes = static_cast<int>(per_episode.size());
  std::vector<double> means, stds;
  for (const auto& g : per_episode) {
    means.push_back(g.mean);
    stds.push_back(g.std);
  }
  agg.mean = mean_of(means);
  agg.mean_se = standard_error_of(means);
  agg.std = mean_of(stds);
  agg.std_se = standard_error_of(stds);
  return agg;
}

// Impulse response via paired runs: for each seed, a shocked and an
// unshocked episode share the seed (common random numbers), and per-step
// percentage deviations are averaged across seeds.
struct IRFResult {
  long long t_shock = 0;
  int shock_duration = 1;
  double shock_size = 0.0;
  int seeds = 0;
  std::vector<long long> t;
  std::vector<double> consumption_mean, consumption_se;  // real consumption, % deviation
  std::vector<double> real_gdp_mean, real_gdp_se;
  std::vector<double> deflator_mean, deflator_se;
};

inline IRFResult impulse_response(const ExperimentConfig& cfg, const TrainedPolicySet& policies,
                                  double shock_size, long long t_shock, int num_seeds,
                                  int shock_duration = 1, int jobs = 1) {
  cfg.validate();
  if (t_shock <= cfg.t_burn_in) {
    throw ConfigError("impulse_response: t_shock must be greater than t_burn_in");
  }
  if (t_shock + shock_duration - 1 > cfg.t_burn_in + cfg.t_sim) {
    throw ConfigError("impulse_response: shock window extends past the episode");
  }
  if (num_seeds <= 0) throw ConfigError("impulse_response: num_seeds must be > 0");

  const std::size_t total = static_cast<std::size_t>(cfg.t_burn_in + cfg.t_sim);
  // deviations[var][seed][step]
  std::vector<std::vector<std::vector<double>>> dev(
      3, std::vector<std::vector<double>>(static_cast<std::size_t>(num_seeds)));

  auto& mutable_policies = const_cast<TrainedPolicySet&>(policies);
  parallel_for(jobs, num_seeds, [&](int k) {
    const std::uint64_t seed = cfg.base_seed + kIrfSeedOffset + static_cast<std::uint64_t>(k);
    const auto base = run_episode(cfg, mutable_policies, 0.0, seed, /*learning=*/false);
    ShockSpec shock{shock_size, t_shock, shock_duration};
    const auto shocked = run_episode(cfg, mutable_policies, 0.0, seed, /*learning=*/false, &shock);
    auto pct = [](double shocked_v, double base_v) {
      const double diff = shocked_v - base_v;
      if (diff == 0.0) return 0.0;
      return 100.0 * diff / std::max(std::abs(base_v), 1e-9);
    };
    for (int v = 0; v < 3; ++v) dev[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)].resize(total);
    for (std::size_t i = 0; i < total; ++i) {
      const auto& b = base[i];
      const auto& s = shocked[i];
      dev[0][static_cast<std::size_t>(k)][i] =
          pct(s.consumption_spending / s.price_index, b.consumption_spending / b.price_index);
      dev[1][static_cast<std::size_t>(k)][i] = pct(s.real_gdp, b.real_gdp);
      dev[2][static_cast<std::size_t>(k)][i] = pct(s.nominal_gdp / std::max(s.real_gdp, 1e-9),
                                                   b.nominal_gdp / std::max(b.real_gdp, 1e-9));
    }
  });

  IRFResult res;
  res.t_shock = t_shock;
  res.shock_duration = shock_duration;
  res.shock_size = shock_size;
  res.seeds = num_seeds;
  res.t.resize(total);
  for (std::size_t i = 0; i < total; ++i) res.t[i] = static_cast<long long>(i) + 1;
  auto reduce = [&](int v, std::vector<double>& out_mean, std::vector<double>& out_se) {
    out_mean.resize(total);
    out_se.resize(total);
    std::vector<double> column(static_cast<std::size_t>(num_seeds));
    for (std::size_t i = 0; i < total; ++i) {
      for (int k = 0; k < num_seeds; ++k) {
        column[static_cast<std::size_t>(k)] = dev[static_cast<std::size_t>(v)][static_cast<std::size_t>(k)][i];
      }
      out_mean[i] = mean_of(column);
      out_se[i] = standard_error_of(column);
    }
  };
  reduce(0, res.consumption_mean, res.consumption_se);
  reduce(1, res.real_gdp_mean, res.real_gdp_se);
  reduce(2, res.deflator_mean, res.deflator_se);
  return res;
}

// --- plot-ready columnar outputs ---------------------------------------------

inline void write_training_curve_csv(const std::string& path,
                                     std::span<const TrainingCurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "episode,epsilon,mean_rl_reward,mean_heuristic_profit\n";
  for (const auto& p : curve) {
    out << p.episode << ',' << p.epsilon << ',' << p.mean_rl_reward << ','
        << p.mean_heuristic_profit << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

// Per-firm evaluation summary with strategy labels and both raw and
// market-normalized sales.
inline void write_firm_summary_csv(const std::string& path, const EvalReport& report,
                                   const StrategyThresholds& th = {}) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  std::vector<double> sales = report.median_sales;
  const double market_median = median_inplace(sales);
  out << "firm_id,is_rl,median_log_price_delta,median_log_price_delta_std,median_sales,"
         "median_sales_std,median_sales_over_market,mean_profit,mean_profit_std,mean_reward,"
         "mean_reward_std,cumulative_return,cumulative_return_std,strategy\n";
  for (std::size_t i = 0; i < report.median_sales.size(); ++i) {
    FirmSummary s;
    s.firm_id = static_cast<int>(i);
    s.median_log_price_delta = report.median_log_price_delta[i];
    s.median_sales = report.median_sales[i];
    s.mean_reward = report.mean_reward[i];
    const auto label = classify_strategy(s, market_median, th);
    out << i << ',' << int(report.is_rl[i]) << ',' << report.median_log_price_delta[i] << ','
        << report.median_log_price_delta_std[i] << ',' << report.median_sales[i] << ','
        << report.median_sales_std[i] << ','
        << (market_median > 0 ? report.median_sales[i] / market_median
                              : std::numeric_limits<double>::quiet_NaN())
        << ',' << report.mean_profit[i] << ',' << report.mean_profit_std[i] << ','
        << report.mean_reward[i] << ',' << report.mean_reward_std[i] << ','
        << report.cumulative_return[i] << ',' << report.cumulative_return_std[i] << ','
        << to_string(label) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_gdp_stats_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "episode,seed,gdp_mean,gdp_std\n";
  for (std::size_t k = 0; k < report.gdp_mean_per_episode.size(); ++k) {
    out << k << ',' << report.episode_seeds[k] << ',' << report.gdp_mean_per_episode[k] << ','
        << report.gdp_std_per_episode[k] << "\n";
  }
  out << "# aggregate,gdp_mean," << report.gdp_mean << ",std_across_episodes,"
      << report.gdp_mean_std << "\n";
  out << "# aggregate,gdp_std," << report.gdp_std << ",std_across_episodes," << report.gdp_std_std
      << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline void write_irf_csv(const std::string& path, const IRFResult& irf) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "t,consumption_dev_pct,consumption_se,real_gdp_dev_pct,real_gdp_se,deflator_dev_pct,"
         "deflator_se\n";
  for (std::size_t i = 0; i < irf.t.size(); ++i) {
    out << irf.t[i] << ',' << irf.consumption_mean[i] << ',' << irf.consumption_se[i] << ','
        << irf.real_gdp_mean[i] << ',' << irf.real_gdp_se[i] << ',' << irf.deflator_mean[i] << ','
        << irf.deflator_se[i] << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rmabm

#include "rmabm/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

namespace rmabm {
namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.model.num_workers = 40;
  cfg.model.num_cfirms = 8;
  cfg.model.num_kfirms = 3;
  cfg.model.num_capitalists = 4;
  cfg.model.search_depth = 3;
  cfg.rl.n_states = 7;
  cfg.rl.n_actions = 3;
  cfg.num_rl_agents = 2;
  cfg.T_train = 3;
  cfg.T_test = 2;
  cfg.t_sim = 25;
  cfg.t_burn_in = 6;
  cfg.base_seed = 42;
  return cfg;
}

bool frames_equal(const MetricsFrame& a, const MetricsFrame& b) {
  auto nan_eq = [](const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::isnan(x[i]) != std::isnan(y[i])) return false;
      if (!std::isnan(x[i]) && x[i] != y[i]) return false;
    }
    return true;
  };
  return a.t == b.t && a.price == b.price && a.sales == b.sales && a.output == b.output &&
         a.demand == b.demand && a.profit == b.profit && nan_eq(a.reward, b.reward) &&
         a.assets == b.assets && a.bankrupt == b.bankrupt && a.avg_price == b.avg_price &&
         a.nominal_gdp == b.nominal_gdp && a.real_gdp == b.real_gdp &&
         a.price_index == b.price_index && a.employment == b.employment &&
         a.consumption_spending == b.consumption_spending;
}

bool tables_equal(const TrainedPolicySet& a, const TrainedPolicySet& b) {
  if (a.tables.size() != b.tables.size()) return false;
  for (std::size_t i = 0; i < a.tables.size(); ++i) {
    if (a.tables[i].values != b.tables[i].values) return false;
    if (a.tables[i].update_count != b.tables[i].update_count) return false;
  }
  return true;
}

TEST(EpsilonSchedule, PaperFormula) {
  EXPECT_EQ(epsilon_schedule(1), 1.0);
  EXPECT_EQ(epsilon_schedule(2), 0.9);
  EXPECT_EQ(epsilon_schedule(100), 0.01);  // 0.9^99 < 0.01
  EXPECT_NEAR(epsilon_schedule(3), 0.81, 1e-12);
}

TEST(RunEpisode, ZeroAgentsIsPureBasisModel) {
  ExperimentConfig cfg = tiny_config();
  cfg.num_rl_agents = 0;
  auto ps = make_policy_set(cfg);
  EXPECT_TRUE(ps.tables.empty());
  const auto frames = run_episode(cfg, ps, 1.0, 1, true);
  EXPECT_EQ(frames.size(), static_cast<std::size_t>(cfg.t_burn_in + cfg.t_sim));
  for (const auto& f : frames) {
    for (double r : f.reward) EXPECT_TRUE(std::isnan(r));
  }
}

TEST(RunEpisode, GreedyRunsAreDeterministic) {
  ExperimentConfig cfg = tiny_config();
  auto trained = train(cfg).policies;
  auto a = run_episode(cfg, trained, 0.0, 777, false);
  auto b = run_episode(cfg, trained, 0.0, 777, false);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_TRUE(frames_equal(a[i], b[i]));
}

TEST(RunEpisode, TableScaleFrameCount) {
  ExperimentConfig cfg;  // table-scale defaults
  cfg.num_rl_agents = 1;
  cfg.base_seed = 5;
  auto ps = make_policy_set(cfg);
  const auto frames = run_episode(cfg, ps, 1.0, 9, true);
  EXPECT_EQ(frames.size(), 5300u);  // 300 burn-in + 5000 controlled
}

TEST(RunEpisode, CurriculumBoundary) {
  ExperimentConfig cfg = tiny_config();
  auto ps = make_policy_set(cfg);
  const auto frames = run_episode(cfg, ps, 0.5, 3, true);
  for (const auto& f : frames) {
    if (f.t <= cfg.t_burn_in) {
      for (double r : f.reward) EXPECT_TRUE(std::isnan(r));  // no RL before takeover
    } else {
      for (int a = 0; a < cfg.num_rl_agents; ++a) EXPECT_FALSE(std::isnan(f.reward[a]));
    }
  }
  // exactly one update per agent per post-burn-in step
  std::uint64_t updates = 0;
  for (const auto& q : ps.tables) {
    updates += std::accumulate(q.update_count.begin(), q.update_count.end(), std::uint64_t{0});
  }
  EXPECT_EQ(updates, static_cast<std::uint64_t>(cfg.num_rl_agents) * cfg.t_sim);
}

TEST(RunEpisode, RejectsTooManyAgents) {
  ExperimentConfig cfg = tiny_config();
  cfg.num_rl_agents = cfg.model.num_cfirms + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, SingleEpisodeUsesFullExploration) {
  ExperimentConfig cfg = tiny_config();
  cfg.T_train = 1;
  const auto result = train(cfg);
  ASSERT_EQ(result.curve.size(), 1u);
  EXPECT_EQ(result.curve[0].epsilon, 1.0);
  EXPECT_EQ(result.policies.final_epsilon, 1.0);
}

TEST(Train, DeterministicAcrossRuns) {
  const ExperimentConfig cfg = tiny_config();
  const auto a = train(cfg);
  const auto b = train(cfg);
  EXPECT_TRUE(tables_equal(a.policies, b.policies));
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].mean_rl_reward, b.curve[i].mean_rl_reward);
  }
}

TEST(Train, SeedIsolation) {
  ExperimentConfig cfg = tiny_config();
  const auto a = train(cfg);
  cfg.base_seed += 1;
  const auto b = train(cfg);
  EXPECT_FALSE(tables_equal(a.policies, b.policies));
}

TEST(Train, SharedModeUsesOneTable) {
  ExperimentConfig cfg = tiny_config();
  cfg.rl.policy_mode = PolicyMode::kShared;
  cfg.num_rl_agents = 3;
  const auto result = train(cfg);
  EXPECT_EQ(result.policies.tables.size(), 1u);
  // all agents read the same table object
  auto& ps = const_cast<TrainedPolicySet&>(result.policies);
  EXPECT_EQ(&ps.table_for(0), &ps.table_for(2));
}

TEST(Train, IndependentUpdatesDoNotLeakAcrossAgents) {
  ExperimentConfig cfg = tiny_config();
  cfg.rl.policy_mode = PolicyMode::kIndependent;
  cfg.num_rl_agents = 2;
  auto ps = make_policy_set(cfg);
  ASSERT_EQ(ps.tables.size(), 2u);
  q_update(ps.table_for(0), DiscreteState{0, 0}, 0, 0, 5.0, DiscreteState{0, 0}, 0.5, 0.9);
  for (double v : ps.table_for(1).values) EXPECT_EQ(v, 0.0);
  EXPECT_NE(ps.table_for(0).values[0], 0.0);
}

TEST(Evaluate, NeverMutatesTables) {
  ExperimentConfig cfg = tiny_config();
  const auto trained = train(cfg);
  const TrainedPolicySet before = trained.policies;
  const auto report = evaluate(cfg, trained.policies, /*jobs=*/2);
  EXPECT_TRUE(tables_equal(before, trained.policies));
  EXPECT_EQ(report.episodes, cfg.T_test);
}

TEST(Evaluate, SingleEpisodeHasZeroStd) {
  ExperimentConfig cfg = tiny_config();
  cfg.T_test = 1;
  const auto trained = train(cfg);
  const auto report = evaluate(cfg, trained.policies);
  EXPECT_EQ(report.gdp_mean_std, 0.0);
  for (std::size_t i = 0; i < report.median_sales_std.size(); ++i) {
    EXPECT_EQ(report.median_sales_std[i], 0.0);
  }
}

TEST(Evaluate, AggregatesRecomputableFromPersistedFrames) {
  ExperimentConfig cfg = tiny_config();
  cfg.T_test = 2;
  const auto trained = train(cfg);
  std::vector<std::vector<MetricsFrame>> dumped(static_cast<std::size_t>(cfg.T_test));
  const auto report = evaluate(cfg, trained.policies, 1,
                               [&](int k, const std::vector<MetricsFrame>& frames) {
                                 dumped[static_cast<std::size_t>(k)] = frames;
                               });
  // round-trip one episode through the columnar format and recompute stats
  const std::string path = std::filesystem::temp_directory_path() / "rmabm_frames_test.csv";
  write_frames_csv(path, dumped[0]);
  const auto loaded = read_frames_csv(path);
  ASSERT_EQ(loaded.size(), dumped[0].size());
  const auto direct = episode_firm_stats(dumped[0], cfg.t_burn_in, cfg.num_rl_agents,
                                         cfg.rl.discount, report.gdp_window);
  const auto from_disk = episode_firm_stats(loaded, cfg.t_burn_in, cfg.num_rl_agents,
                                            cfg.rl.discount, report.gdp_window);
  for (std::size_t i = 0; i < direct.median_sales.size(); ++i) {
    EXPECT_NEAR(from_disk.median_sales[i], direct.median_sales[i], 1e-12);
    EXPECT_NEAR(from_disk.median_log_price_delta[i], direct.median_log_price_delta[i], 1e-12);
  }
  EXPECT_NEAR(from_disk.gdp_mean, direct.gdp_mean, 1e-12);
  std::remove(path.c_str());
}

TEST(Evaluate, BaselineControlHasNoRlColumns) {
  ExperimentConfig cfg = tiny_config();
  cfg.num_rl_agents = 0;
  auto ps = make_policy_set(cfg);
  const auto report = evaluate(cfg, ps);
  for (double r : report.mean_reward) EXPECT_TRUE(std::isnan(r));
  EXPECT_GT(report.gdp_mean, 0.0);
}

TEST(PolicySetIo, RoundTrip) {
  ExperimentConfig cfg = tiny_config();
  const auto trained = train(cfg);
  const std::string path = std::filesystem::temp_directory_path() / "rmabm_ps_test.rmps";
  write_policy_set(path, trained.policies);
  const auto loaded = read_policy_set(path);
  EXPECT_EQ(loaded.mode, trained.policies.mode);
  EXPECT_EQ(loaded.final_epsilon, trained.policies.final_epsilon);
  EXPECT_TRUE(tables_equal(loaded, trained.policies));
  EXPECT_EQ(loaded.config_echo.dump(), trained.policies.config_echo.dump());
  std::remove(path.c_str());
}

TEST(PolicySetIo, CorruptFileNamesThePath) {
  const std::string path = std::filesystem::temp_directory_path() / "rmabm_bad.rmps";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a policy file at all";
  }
  try {
    read_policy_set(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("rmabm_bad.rmps"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(RunEpisode, EpisodeIndependence) {
  // Back-to-back training episodes must differ from fresh runs only through
  // the tables: a second train() starting from the first's tables reproduces
  // episodes 2..T of a longer run.
  ExperimentConfig cfg = tiny_config();
  cfg.T_train = 2;
  const auto two = train(cfg);

  ExperimentConfig one = cfg;
  one.T_train = 1;
  auto first = train(one);
  const double eps2 = epsilon_schedule(2);
  const auto frames =
      run_episode(cfg, first.policies, eps2, cfg.base_seed + 2, /*learning=*/true);
  EXPECT_TRUE(tables_equal(first.policies, two.policies));
  EXPECT_EQ(frames.size(), static_cast<std::size_t>(cfg.t_burn_in + cfg.t_sim));
}

}  // namespace
}  // namespace rmabm

// Command-line front end: train, evaluate, sweep, irf.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmabm/rmabm.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // --set key=value
  std::int64_t seed = -1;              // --seed, overrides base_seed when >= 0
  std::string out_root;
  std::string name;  // experiment name; defaults to the config file stem
  int jobs = 2;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "Experiment config file (JSON)")->required();
  cmd->add_option("--set", o.overrides, "Override a config key, key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "Override base_seed");
  cmd->add_option("--out", o.out_root, "Output root directory (default: $RMABM_OUT or ./out)");
  cmd->add_option("--name", o.name, "Experiment name (default: config file stem)");
  cmd->add_option("--jobs", o.jobs, "Worker threads for parallel sections");
}

struct ResolvedRun {
  rmabm::json config_json;
  rmabm::ExperimentConfig cfg;
  fs::path out_dir;       // <root>/<name>/<cell>
  fs::path exp_dir;       // <root>/<name>
  std::string cell;
};

std::string cell_name(const rmabm::ExperimentConfig& cfg) {
  return "zc" + std::to_string(cfg.model.search_depth) + "_N" +
         std::to_string(cfg.num_rl_agents) + "_" + rmabm::to_string(cfg.rl.policy_mode);
}

ResolvedRun resolve(const CommonOpts& o) {
  ResolvedRun run;
  run.config_json = rmabm::load_json_file(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw rmabm::ConfigError("--set expects key=value, got: " + kv);
    }
    rmabm::apply_config_override(run.config_json, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed >= 0) run.config_json["base_seed"] = static_cast<std::uint64_t>(o.seed);
  run.cfg = rmabm::experiment_config_from_json(run.config_json);
  run.cfg.validate();
  run.config_json = rmabm::to_json(run.cfg);  // fully resolved echo

  std::string root = o.out_root;
  if (root.empty()) {
    const char* env = std::getenv("RMABM_OUT");
    root = env != nullptr && *env != '\0' ? env : "out";
  }
  std::string name = o.name;
  if (name.empty()) name = fs::path(o.config_path).stem().string();
  run.cell = cell_name(run.cfg);
  run.exp_dir = fs::path(root) / name;
  run.out_dir = run.exp_dir / run.cell;
  return run;
}

// Collects output files so a failed command can remove its partial outputs,
// and so the manifest can checksum everything that was written.
class ArtifactSet {
 public:
  explicit ArtifactSet(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path path_of(const std::string& rel) const { return dir_ / rel; }

  void track(const std::string& rel) { files_.push_back(rel); }

  void write_text(const std::string& rel, const std::string& content) {
    std::ofstream out(path_of(rel));
    if (!out) throw rmabm::IoError("cannot open for writing: " + path_of(rel).string());
    out << content;
    if (!out) throw rmabm::IoError("write failed: " + path_of(rel).string());
    track(rel);
  }

  void finalize_manifest(rmabm::RunManifest& manifest) {
    for (const auto& rel : files_) {
      const fs::path p = path_of(rel);
      if (!fs::exists(p)) throw rmabm::IoError("expected artifact missing: " + p.string());
      rmabm::RunManifest::Artifact a;
      a.path = rel;
      a.bytes = fs::file_size(p);
      a.checksum_fnv1a64 = rmabm::fnv1a64_file(p.string());
      manifest.artifacts.push_back(a);
    }
    manifest.output_dir = dir_.string();
    rmabm::write_manifest((dir_ / "manifest.json").string(), manifest);
  }

  void remove_partial_outputs() {
    for (const auto& rel : files_) {
      std::error_code ec;
      fs::remove(path_of(rel), ec);
    }
    std::error_code ec;
    fs::remove(dir_ / "manifest.json", ec);
    if (fs::is_empty(dir_, ec) && !ec) fs::remove(dir_, ec);
  }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::vector<std::uint64_t> training_seeds(const rmabm::ExperimentConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int tau = 1; tau <= cfg.T_train; ++tau) {
    seeds.push_back(cfg.fixed_episode_seed ? cfg.base_seed + 1
                                           : cfg.base_seed + static_cast<std::uint64_t>(tau));
  }
  return seeds;
}

void run_train_into(const ResolvedRun& run, ArtifactSet& artifacts, rmabm::TrainedPolicySet* out_ps) {
  const auto started = std::chrono::steady_clock::now();
  rmabm::RunManifest manifest;
  manifest.command = "train";
  manifest.resolved_config = run.config_json;
  manifest.seeds = training_seeds(run.cfg);
  manifest.started_at_utc = rmabm::utc_timestamp();

  auto result = rmabm::train(run.cfg);
  rmabm::write_policy_set(artifacts.path_of("policy.rmps").string(), result.policies);
  artifacts.track("policy.rmps");
  rmabm::write_training_curve_csv(artifacts.path_of("training_curve.csv").string(), result.curve);
  artifacts.track("training_curve.csv");
  artifacts.write_text("config.json", run.config_json.dump(2) + "\n");

  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  artifacts.finalize_manifest(manifest);
  if (out_ps != nullptr) *out_ps = std::move(result.policies);
}

void run_evaluate_into(const ResolvedRun& run, const rmabm::TrainedPolicySet& ps,
                       ArtifactSet& artifacts, bool write_frames, int jobs,
                       rmabm::EvalReport* out_report) {
  const auto started = std::chrono::steady_clock::now();
  rmabm::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.resolved_config = run.config_json;
  manifest.started_at_utc = rmabm::utc_timestamp();

  rmabm::FrameSink sink = nullptr;
  if (write_frames) {
    sink = [&](int episode, const std::vector<rmabm::MetricsFrame>& frames) {
      const std::string rel = "frames_ep" + std::to_string(episode) + ".csv";
      rmabm::write_frames_csv(artifacts.path_of(rel).string(), frames);
      artifacts.track(rel);
    };
  }
  const auto report = rmabm::evaluate(run.cfg, ps, jobs, sink);
  manifest.seeds = report.episode_seeds;
  rmabm::write_firm_summary_csv(artifacts.path_of("firm_summary.csv").string(), report);
  artifacts.track("firm_summary.csv");
  rmabm::write_gdp_stats_csv(artifacts.path_of("gdp_stats.csv").string(), report);
  artifacts.track("gdp_stats.csv");
  artifacts.write_text("config.json", run.config_json.dump(2) + "\n");

  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  artifacts.finalize_manifest(manifest);
  if (out_report != nullptr) *out_report = report;
}

int cmd_train(const CommonOpts& opts) {
  const ResolvedRun run = resolve(opts);
  ArtifactSet artifacts(run.out_dir);
  try {
    run_train_into(run, artifacts, nullptr);
  } catch (...) {
    artifacts.remove_partial_outputs();
    throw;
  }
  std::cout << "train: wrote " << run.out_dir.string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& policy_path, bool no_frames) {
  const ResolvedRun run = resolve(opts);
  const auto ps = rmabm::read_policy_set(policy_path);
  ArtifactSet artifacts(run.out_dir);
  try {
    run_evaluate_into(run, ps, artifacts, !no_frames, opts.jobs, nullptr);
  } catch (...) {
    artifacts.remove_partial_outputs();
    throw;
  }
  std::cout << "evaluate: wrote " << run.out_dir.string() << "\n";
  return 0;
}

struct SweepCell {
  std::string name;
  rmabm::ExperimentConfig cfg;
  rmabm::json config_json;
  rmabm::EvalReport report;
  bool done = false;
};

int cmd_sweep(const CommonOpts& opts, const std::vector<std::string>& grid_specs,
              bool no_frames) {
  // Grid axes: z_c, N, policy_mode. Values are comma-separated lists.
  std::vector<int> zc_values, n_values;
  std::vector<std::string> mode_values;
  for (const auto& spec : grid_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw rmabm::ConfigError("--grid expects key=v1,v2,... got: " + spec);
    const std::string key = spec.substr(0, eq);
    std::vector<std::string> parts;
    std::string rest = spec.substr(eq + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto comma = rest.find(',', start);
      parts.push_back(rest.substr(start, comma == std::string::npos ? std::string::npos
                                                                    : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (key == "z_c" || key == "search_depth") {
      for (const auto& p : parts) zc_values.push_back(std::stoi(p));
    } else if (key == "N" || key == "num_rl_agents") {
      for (const auto& p : parts) n_values.push_back(std::stoi(p));
    } else if (key == "policy_mode") {
      for (const auto& p : parts) mode_values.push_back(p);
    } else {
      throw rmabm::ConfigError("--grid axis must be z_c, N or policy_mode, got: " + key);
    }
  }
  if (zc_values.empty()) zc_values.push_back(-1);      // -1: keep config value
  if (n_values.empty()) n_values.push_back(-1);
  if (mode_values.empty()) mode_values.push_back("");  // "": keep config value

  const ResolvedRun base = resolve(opts);
  std::vector<SweepCell> cells;
  for (int zc : zc_values) {
    for (int n : n_values) {
      for (const auto& mode : mode_values) {
        SweepCell cell;
        cell.config_json = base.config_json;
        if (zc >= 0) cell.config_json["model"]["search_depth"] = zc;
        if (n >= 0) cell.config_json["num_rl_agents"] = n;
        if (!mode.empty()) cell.config_json["rl"]["policy_mode"] = mode;
        cell.cfg = rmabm::experiment_config_from_json(cell.config_json);
        cell.cfg.validate();
        cell.name = cell_name(cell.cfg);
        cells.push_back(std::move(cell));
      }
    }
  }

  const auto started = std::chrono::steady_clock::now();
  rmabm::parallel_for(opts.jobs, static_cast<int>(cells.size()), [&](int i) {
    auto& cell = cells[static_cast<std::size_t>(i)];
    ResolvedRun run;
    run.cfg = cell.cfg;
    run.config_json = cell.config_json;
    run.cell = cell.name;
    run.exp_dir = base.exp_dir;
    run.out_dir = base.exp_dir / cell.name;
    ArtifactSet artifacts(run.out_dir);
    try {
      rmabm::TrainedPolicySet ps;
      run_train_into(run, artifacts, &ps);
      run_evaluate_into(run, ps, artifacts, !no_frames, /*jobs=*/1, &cell.report);
      cell.done = true;
    } catch (...) {
      artifacts.remove_partial_outputs();
      throw;
    }
  });

  // Combined summary: one row per (cell, test episode).
  fs::create_directories(base.exp_dir);
  const fs::path combined = base.exp_dir / "combined_summary.csv";
  {
    std::ofstream out(combined);
    if (!out) throw rmabm::IoError("cannot open for writing: " + combined.string());
    out << "cell,z_c,N,policy_mode,episode,seed,gdp_mean,gdp_std,rl_mean_reward,"
           "heuristic_mean_profit\n";
    for (const auto& cell : cells) {
      for (int k = 0; k < cell.report.episodes; ++k) {
        const auto ki = static_cast<std::size_t>(k);
        out << cell.name << ',' << cell.cfg.model.search_depth << ',' << cell.cfg.num_rl_agents
            << ',' << rmabm::to_string(cell.cfg.rl.policy_mode) << ',' << k << ','
            << cell.report.episode_seeds[ki] << ',' << cell.report.gdp_mean_per_episode[ki] << ','
            << cell.report.gdp_std_per_episode[ki] << ','
            << cell.report.rl_mean_reward_per_episode[ki] << ','
            << cell.report.heuristic_mean_profit_per_episode[ki] << "\n";
      }
    }
    if (!out) throw rmabm::IoError("write failed: " + combined.string());
  }

  rmabm::RunManifest manifest;
  manifest.command = "sweep";
  manifest.resolved_config = base.config_json;
  manifest.started_at_utc = rmabm::utc_timestamp();
  manifest.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest.output_dir = base.exp_dir.string();
  rmabm::RunManifest::Artifact a;
  a.path = "combined_summary.csv";
  a.bytes = fs::file_size(combined);
  a.checksum_fnv1a64 = rmabm::fnv1a64_file(combined.string());
  manifest.artifacts.push_back(a);
  rmabm::write_manifest((base.exp_dir / "manifest.json").string(), manifest);

  std::cout << "sweep: " << cells.size() << " cells under " << base.exp_dir.string() << "\n";
  return 0;
}

int cmd_irf(const CommonOpts& opts, const std::string& policy_path, double shock_size,
            int shock_duration, std::int64_t shock_step, int num_seeds) {
  const ResolvedRun run = resolve(opts);
  rmabm::TrainedPolicySet ps;
  if (run.cfg.num_rl_agents > 0) {
    if (policy_path.empty()) {
      throw rmabm::ConfigError("irf: --policy is required when num_rl_agents > 0");
    }
    ps = rmabm::read_policy_set(policy_path);
  }
  const long long t_shock =
      shock_step > 0 ? shock_step : run.cfg.t_burn_in + run.cfg.t_sim / 2;

  ArtifactSet artifacts(run.out_dir);
  try {
    const auto started = std::chrono::steady_clock::now();
    const auto irf = rmabm::impulse_response(run.cfg, ps, shock_size, t_shock, num_seeds,
                                             shock_duration, opts.jobs);
    rmabm::write_irf_csv(artifacts.path_of("irf.csv").string(), irf);
    artifacts.track("irf.csv");
    artifacts.write_text("config.json", run.config_json.dump(2) + "\n");

    rmabm::RunManifest manifest;
    manifest.command = "irf";
    manifest.resolved_config = run.config_json;
    for (int k = 0; k < num_seeds; ++k) {
      manifest.seeds.push_back(run.cfg.base_seed + rmabm::kIrfSeedOffset +
                               static_cast<std::uint64_t>(k));
    }
    manifest.started_at_utc = rmabm::utc_timestamp();
    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    artifacts.finalize_manifest(manifest);
  } catch (...) {
    artifacts.remove_partial_outputs();
    throw;
  }
  std::cout << "irf: wrote " << run.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Macro agent-based economy simulator with Q-learning firms"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, sweep_opts, irf_opts;
  std::string eval_policy, irf_policy;
  bool eval_no_frames = false, sweep_no_frames = false;
  std::vector<std::string> grid_specs;
  double shock_size = 0.30;
  int shock_duration = 1;
  std::int64_t shock_step = -1;
  int irf_seeds = 10;

  auto* train_cmd = app.add_subcommand("train", "Train RL policies and write the policy set");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("evaluate", "Run greedy test episodes on a trained policy");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--policy", eval_policy, "Trained policy-set file")->required();
  eval_cmd->add_flag("--no-frames", eval_no_frames, "Skip per-episode frame dumps");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train+evaluate a grid of configurations");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--grid", grid_specs,
                        "Grid axis, key=v1,v2,... for z_c, N or policy_mode (repeatable)");
  sweep_cmd->add_flag("--no-frames", sweep_no_frames, "Skip per-episode frame dumps");

  auto* irf_cmd = app.add_subcommand("irf", "Impulse response to a consumption shock");
  add_common(irf_cmd, irf_opts);
  irf_cmd->add_option("--policy", irf_policy, "Trained policy-set file (required when N > 0)");
  irf_cmd->add_option("--shock-size", shock_size, "Budget shock size (0.30 = +30%)");
  irf_cmd->add_option("--shock-duration", shock_duration, "Shock duration in steps");
  irf_cmd->add_option("--shock-step", shock_step, "Shock step (default: t_burn_in + t_sim/2)");
  irf_cmd->add_option("--num-seeds", irf_seeds, "Paired seeds to average over");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_opts, eval_policy, eval_no_frames);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, grid_specs, sweep_no_frames);
    if (irf_cmd->parsed()) return cmd_irf(irf_opts, irf_policy, shock_size, shock_duration,
                                          shock_step, irf_seeds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

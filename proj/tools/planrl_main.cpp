// planrl command line: train / eval / bench-mc / render-frame.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "planrl/config.hpp"
#include "planrl/env.hpp"
#include "planrl/eval.hpp"
#include "planrl/image.hpp"
#include "planrl/metrics.hpp"
#include "planrl/trainer.hpp"

namespace {

using namespace planrl;

std::string output_root() {
  const char* env = std::getenv("PLANRL_OUT");
  return env ? std::string(env) : std::string("runs");
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_override, const std::string& resume) {
  RunConfig run;
  if (!config_path.empty()) run = RunConfig::from_file(config_path);
  for (const std::string& ov : overrides) run.apply_override(ov);

  std::string out_dir = !out_override.empty() ? out_override : run.out_dir();
  if (out_dir.empty())
    out_dir = output_root() + "/run_" + std::to_string(run.seed());

  EnvConfig env_cfg = run.env_config();
  PPOConfig ppo_cfg = run.ppo_config();
  PolicyConfig policy_cfg = run.policy_config();

  Trainer trainer(ppo_cfg, policy_cfg, [env_cfg](int) {
    return std::make_unique<DrivingEnv>(env_cfg);
  });
  if (!resume.empty()) trainer.load_checkpoint(resume);
  trainer.set_output_dir(out_dir);
  trainer.set_checkpoint_every(run.checkpoint_every());
  trainer.set_log_stream(&std::cout);

  // provenance: the fully resolved configuration
  {
    std::ofstream f(out_dir + "/config_resolved.json");
    f << run.tree.dump(2) << "\n";
  }

  std::cout << "training: " << ppo_cfg.num_iterations() << " iterations, batch "
            << ppo_cfg.batch_size() << ", policy parameters "
            << trainer.policy().param_count() << "\n";
  TrainStats last = trainer.run();
  trainer.save_checkpoint(out_dir + "/checkpoint_final.ck");

  nlohmann::json meta;
  meta["run_config"] = run.tree;
  meta["policy_config"] = policy_cfg.to_json();
  meta["samples"] = trainer.samples_seen();
  save_policy(out_dir + "/policy_final.ck", trainer.policy(), meta);

  nlohmann::json report;
  report["iterations"] = trainer.iteration();
  report["samples"] = trainer.samples_seen();
  report["mean_episode_return"] = last.mean_episode_return;
  report["mean_sum_rc"] = last.mean_sum_rc;
  std::ofstream rf(out_dir + "/final_report.json");
  rf << report.dump(2) << "\n";
  std::cout << "done: " << trainer.samples_seen() << " samples, mean sumRC "
            << last.mean_sum_rc << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& benchmark_path, int routes,
             int repeats, uint64_t seed, const std::string& action_stat,
             const std::string& out_path) {
  nlohmann::json meta;
  PolicyNet policy = load_policy(checkpoint, &meta);

  EnvConfig env_cfg;
  if (meta.contains("run_config") && meta["run_config"].contains("env")) {
    RunConfig run;
    run.tree = RunConfig::defaults(meta["run_config"].value("profile", "carla-like"));
    run.merge(meta["run_config"], "");
    env_cfg = run.env_config();
  }
  if (!benchmark_path.empty()) {
    std::ifstream f(benchmark_path);
    if (!f) throw ConfigError("cannot open benchmark spec: " + benchmark_path);
    nlohmann::json spec = nlohmann::json::parse(f);
    if (spec.contains("env")) env_cfg = EnvConfig::from_json(spec["env"]);
    routes = spec.value("routes", routes);
    repeats = spec.value("repeats", repeats);
    seed = spec.value("seed", seed);
  }

  DrivingEnv env(env_cfg);
  ActionStat stat = action_stat == "mode" ? ActionStat::Mode : ActionStat::Mean;
  EvalReport report = run_eval(env, policy, routes, repeats, seed, stat);

  std::string out = out_path.empty() ? "eval_report.csv" : out_path;
  std::ofstream csv(out);
  write_eval_csv(report, csv);
  std::cout << report.aggregate_json().dump(2) << "\n";
  std::cout << "per-route rows written to " << out << "\n";
  return 0;
}

int cmd_bench_mc(int scenarios, double success_rate, double penalty, int trials, uint64_t seed) {
  RngStream rng = RngStream::derive(seed, "bench_mc");
  MonteCarloDs mc = monte_carlo_ds(scenarios, success_rate, penalty, trials, rng);
  double closed = expected_ds(scenarios, success_rate, penalty);
  double expected_inf = expected_infractions(scenarios, success_rate);
  std::cout << "mean DS: " << mc.mean_ds << "\n";
  std::cout << "mean infractions: " << mc.mean_infractions << "\n";
  std::cout << "closed form: DS " << closed << ", infractions " << expected_inf << "\n";
  return 0;
}

int cmd_render_frame(const std::string& replay_path, int step, const std::string& out_path) {
  std::ifstream f(replay_path);
  if (!f) throw std::runtime_error("cannot open replay file: " + replay_path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("replay file is empty");
  nlohmann::json header = nlohmann::json::parse(line);
  EnvConfig cfg = EnvConfig::from_json(header.at("config"));
  uint64_t seed = header.at("seed");

  std::vector<std::array<double, 2>> actions;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    actions.push_back({j["action"][0].get<double>(), j["action"][1].get<double>()});
  }
  if (step < 0 || step > static_cast<int>(actions.size()))
    throw std::out_of_range("render-frame: step " + std::to_string(step) +
                            " out of range (replay has " + std::to_string(actions.size()) +
                            " steps)");

  DrivingEnv env(cfg);
  env.reset(seed);
  for (int t = 0; t < step; ++t) {
    StepOut out = env.step(actions[t]);
    if (out.episode_end() && t + 1 < step)
      throw std::out_of_range("render-frame: episode ended before step " + std::to_string(step));
  }
  BevRaster raster = env.render_frame();
  write_raster_pgm(raster, out_path);
  std::cout << "wrote " << out_path << " (" << raster.channels << " channels, "
            << raster.height << "x" << raster.width << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planrl: closed-loop 2D driving RL stack"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run PPO training");
  std::string config_path, out_dir, resume;
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--set", overrides, "dotted-key override, e.g. ppo.lr0=1e-4");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--resume", resume, "checkpoint to resume from");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over routes x repeats");
  std::string checkpoint, benchmark, action_stat = "mean", eval_out;
  int routes = 5, repeats = 3;
  uint64_t eval_seed = 7;
  eval->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
  eval->add_option("--benchmark", benchmark, "benchmark spec JSON");
  eval->add_option("--routes", routes, "number of routes");
  eval->add_option("--repeats", repeats, "repeats per route");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--action-stat", action_stat, "mean|mode");
  eval->add_option("--out", eval_out, "report CSV path");

  // bench-mc
  auto* bench = app.add_subcommand("bench-mc", "Monte-Carlo driving-score estimate");
  int scenarios = 90, trials = 10000;
  double success_rate = 0.84, penalty = 0.65;
  uint64_t bench_seed = 1;
  bench->add_option("--scenarios", scenarios, "scenarios per route");
  bench->add_option("--success-rate", success_rate, "per-scenario success rate");
  bench->add_option("--penalty", penalty, "penalty factor per infraction");
  bench->add_option("--trials", trials, "Monte-Carlo trials");
  bench->add_option("--seed", bench_seed, "RNG seed");

  // render-frame
  auto* render = app.add_subcommand("render-frame", "render a replay step as a PGM tile grid");
  std::string replay_path, image_out = "frame.pgm";
  int step_index = 0;
  render->add_option("--replay", replay_path, "replay file")->required();
  render->add_option("--step", step_index, "step index");
  render->add_option("--out", image_out, "output image path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, overrides, out_dir, resume);
    if (eval->parsed())
      return cmd_eval(checkpoint, benchmark, routes, repeats, eval_seed, action_stat, eval_out);
    if (bench->parsed())
      return cmd_bench_mc(scenarios, success_rate, penalty, trials, bench_seed);
    if (render->parsed()) return cmd_render_frame(replay_path, step_index, image_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "planrl/env.hpp"
#include "planrl/policy.hpp"
#include "planrl/ppo.hpp"

namespace planrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Layered run configuration: profile defaults, then the config file, then
/// dotted-key command line overrides. The fully resolved tree is written
/// into the run directory for provenance.
struct RunConfig {
  nlohmann::json tree;

  RunConfig() { tree = defaults("carla-like"); }

  static nlohmann::json defaults(const std::string& profile) {
    bool nuplan = profile == "nuplan-like";
    nlohmann::json j;
    j["profile"] = profile;
    j["seed"] = 1;
    j["out_dir"] = "";
    j["checkpoint_every"] = 50;
    j["network"] = {{"preset", "desk"}};
    EnvConfig env = nuplan ? EnvConfig::nuplan_like() : EnvConfig::carla_like();
    j["env"] = env.to_json();
    j["reward"] = {{"profile", nuplan ? "nuplan" : "carla"},
                   {"survival", {{"s", 0.6}, {"n", 150}}}};
    j["ppo"] = {{"lr0", 2.5e-4},
                {"anneal_lr", true},
                {"num_envs", 8},
                {"steps_per_iteration", 256},
                {"epochs", nuplan ? 4 : 3},
                {"mini_batch_size", 256},
                {"clip_coef", 0.1},
                {"entropy_coef", 0.01},
                {"value_coef", 0.5},
                {"gamma", 0.99},
                {"gae_lambda", 0.95},
                {"max_grad_norm", 0.5},
                {"norm_adv", true},
                {"clip_vloss", true},
                {"total_samples", 500000},
                {"async_collection", false},
                {"num_workers", 0}};
    return j;
  }

  static RunConfig from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config parse error in ") + path + ": " + e.what());
    }
    RunConfig cfg;
    std::string profile = file.value("profile", "carla-like");
    if (profile != "carla-like" && profile != "nuplan-like")
      throw ConfigError("config error at profile: expected carla-like or nuplan-like, got `" +
                        profile + "`");
    cfg.tree = defaults(profile);
    cfg.merge(file, "");
    return cfg;
  }

  /// Deep-merge `patch` into the tree, rejecting keys the schema does not
  /// know (the error names the offending path).
  void merge(const nlohmann::json& patch, const std::string& prefix) {
    merge_into(tree, patch, prefix);
  }

  /// Apply a `dotted.key=value` override; the value parses as JSON when
  /// possible and falls back to a string.
  void apply_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override `" + assignment + "`: expected key=value");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    nlohmann::json jv;
    try {
      jv = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      jv = value;  // plain string
    }
    nlohmann::json patch;
    nlohmann::json* cur = &patch;
    size_t pos = 0;
    std::string remaining = key;
    while (true) {
      auto dot = remaining.find('.');
      if (dot == std::string::npos) {
        (*cur)[remaining] = jv;
        break;
      }
      std::string head = remaining.substr(0, dot);
      (*cur)[head] = nlohmann::json::object();
      cur = &(*cur)[head];
      remaining = remaining.substr(dot + 1);
    }
    (void)pos;
    merge(patch, "");
  }

  uint64_t seed() const { return tree.at("seed").get<uint64_t>(); }
  std::string out_dir() const { return tree.value("out_dir", ""); }
  int checkpoint_every() const { return tree.value("checkpoint_every", 50); }

  EnvConfig env_config() const {
    EnvConfig env = EnvConfig::from_json(tree.at("env"));
    // the reward block is authoritative for the reward profile + survival
    std::string rp = tree.at("reward").value("profile", "carla");
    if (rp == "carla")
      env.reward_profile = RewardProfile::Carla;
    else if (rp == "nuplan")
      env.reward_profile = RewardProfile::Nuplan;
    else if (rp == "shaped")
      env.reward_profile = RewardProfile::Shaped;
    else
      throw ConfigError("config error at reward.profile: expected carla|nuplan|shaped, got `" +
                        rp + "`");
    if (tree.at("reward").contains("survival")) {
      env.survival.s = tree["reward"]["survival"].value("s", 0.6);
      env.survival.n = tree["reward"]["survival"].value("n", 150);
      if (env.survival.s < 0.0 || env.survival.s > 1.0)
        throw ConfigError("config error at reward.survival.s: must be in [0, 1]");
      if (env.survival.n < 1) throw ConfigError("config error at reward.survival.n: must be >= 1");
    }
    return env;
  }

  PPOConfig ppo_config() const {
    const auto& j = tree.at("ppo");
    PPOConfig c;
    c.lr0 = j.value("lr0", 2.5e-4);
    c.anneal_lr = j.value("anneal_lr", true);
    c.num_envs = j.value("num_envs", 8);
    c.steps_per_iteration = j.value("steps_per_iteration", 256);
    c.epochs = j.value("epochs", 3);
    c.mini_batch_size = j.value("mini_batch_size", 256);
    c.clip_coef = j.value("clip_coef", 0.1);
    c.ent_coef = j.value("entropy_coef", 0.01);
    c.value_coef = j.value("value_coef", 0.5);
    c.gamma = j.value("gamma", 0.99);
    c.gae_lambda = j.value("gae_lambda", 0.95);
    c.max_grad_norm = j.value("max_grad_norm", 0.5);
    c.norm_adv = j.value("norm_adv", true);
    c.clip_vloss = j.value("clip_vloss", true);
    c.total_samples = j.value("total_samples", 500000L);
    c.async_collection = j.value("async_collection", false);
    c.num_workers = j.value("num_workers", 0);
    c.seed = seed();
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config error at ppo: ") + e.what());
    }
    return c;
  }

  PolicyConfig policy_config() const {
    EnvConfig env = env_config();
    int channels = env.bev.channels();
    int meas = measurement_dim(env.reward_profile);
    std::string preset = tree.at("network").value("preset", "desk");
    PolicyConfig c;
    if (preset == "desk")
      c = PolicyConfig::desk(channels, meas);
    else if (preset == "paper")
      c = PolicyConfig::paper(channels, meas);
    else if (preset == "micro")
      c = PolicyConfig::micro(channels, env.bev.height, env.bev.width, meas);
    else
      throw ConfigError("config error at network.preset: expected desk|paper|micro, got `" +
                        preset + "`");
    c.raster_channels = channels;
    c.raster_h = env.bev.height;
    c.raster_w = env.bev.width;
    c.meas_dim = meas;
    return c;
  }

 private:
  static void merge_into(nlohmann::json& base, const nlohmann::json& patch,
                         const std::string& prefix) {
    if (!patch.is_object())
      throw ConfigError("config error at " + (prefix.empty() ? "<root>" : prefix) +
                        ": expected object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
      std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!base.contains(it.key()))
        throw ConfigError("config error at " + path + ": unknown key");
      if (base[it.key()].is_object() && it.value().is_object())
        merge_into(base[it.key()], it.value(), path);
      else if (base[it.key()].is_object() != it.value().is_object())
        throw ConfigError("config error at " + path + ": type mismatch");
      else
        base[it.key()] = it.value();
    }
  }
};

}  // namespace planrl

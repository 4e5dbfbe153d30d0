#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "planrl/env.hpp"
#include "planrl/policy.hpp"
#include "planrl/ppo.hpp"

namespace planrl {

/// Training orchestration: collection (sync or async), GAE, the PPO update,
/// a CSV metrics stream and periodic checkpoints with full resume state
/// (parameters, Adam moments, iteration and schedule position).
class Trainer {
 public:
  using EnvFactory = std::function<std::unique_ptr<RolloutEnv>(int env_index)>;
  /// Called after each iteration; returning true stops training early.
  using StopPredicate = std::function<bool(const TrainStats&, long iteration)>;

  Trainer(PPOConfig cfg, PolicyConfig policy_cfg, EnvFactory factory)
      : cfg_(cfg),
        policy_(policy_cfg, RngStream::derive(cfg.seed, "policy_init")),
        opt_(policy_.params(), cfg.adam_eps) {
    cfg_.validate();
    for (int e = 0; e < cfg_.num_envs; ++e) envs_.push_back(factory(e));
  }

  PolicyNet& policy() { return policy_; }
  const PPOConfig& config() const { return cfg_; }
  long iteration() const { return iteration_; }
  long samples_seen() const { return samples_seen_; }
  const std::vector<TrainStats>& history() const { return history_; }

  void set_output_dir(const std::string& dir) {
    out_dir_ = dir;
    if (!out_dir_.empty()) {
      std::filesystem::create_directories(out_dir_);
      metrics_.open(out_dir_ + "/metrics.csv", resumed_ ? std::ios::app : std::ios::out);
      if (!resumed_)
        metrics_ << "iteration,samples,fps,policy_loss,value_loss,entropy,clip_fraction,"
                    "approx_kl,lr,grad_norm,mean_episode_return,mean_sum_rc,episodes,"
                    "env_faults\n";
    }
  }
  void set_checkpoint_every(int k) { checkpoint_every_ = k; }
  void set_stop_predicate(StopPredicate p) { stop_ = std::move(p); }
  void set_log_stream(std::ostream* os) { log_ = os; }

  /// Rolling means over the most recent completed episodes.
  double mean_episode_return() const { return mean_of(recent_returns_); }
  double mean_sum_rc() const { return mean_of(recent_rc_); }

  TrainStats run_iteration() {
    if (!state_.initialized) state_.initialize(envs_, cfg_.seed);
    auto t0 = std::chrono::steady_clock::now();
    RolloutBuffer buf = cfg_.async_collection
                            ? collect_async(envs_, policy_, cfg_.steps_per_iteration, state_)
                            : collect_sync(envs_, policy_, cfg_.steps_per_iteration, state_);
    std::vector<float> tails = tail_values(policy_, state_, buf.dims);
    compute_gae(buf, cfg_.gamma, cfg_.gae_lambda, tails);
    TrainStats stats = ppo_update(policy_, opt_, buf, cfg_, iteration_);
    auto t1 = std::chrono::steady_clock::now();

    for (const EpisodeInfo& info : buf.episode_infos) {
      push_recent(recent_returns_, info.episode_return);
      push_recent(recent_rc_, info.sum_rc);
    }
    stats.episodes = static_cast<int>(buf.episode_infos.size());
    stats.mean_episode_return = mean_episode_return();
    stats.mean_sum_rc = mean_sum_rc();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    stats.fps = secs > 0 ? buf.num_envs * buf.steps / secs : 0.0;

    samples_seen_ += static_cast<long>(buf.num_envs) * buf.steps;
    ++iteration_;
    history_.push_back(stats);

    if (metrics_.is_open()) {
      metrics_ << iteration_ << ',' << samples_seen_ << ',' << stats.fps << ','
               << stats.policy_loss << ',' << stats.value_loss << ',' << stats.entropy << ','
               << stats.clip_fraction << ',' << stats.approx_kl << ',' << stats.lr << ','
               << stats.grad_norm << ',' << stats.mean_episode_return << ','
               << stats.mean_sum_rc << ',' << stats.episodes << ',' << buf.env_faults << "\n";
      metrics_.flush();
    }
    if (log_) {
      (*log_) << "iter " << iteration_ << " samples " << samples_seen_ << " fps "
              << static_cast<long>(stats.fps) << " return " << stats.mean_episode_return
              << " sumRC " << stats.mean_sum_rc << " pi_loss " << stats.policy_loss << " v_loss "
              << stats.value_loss << " ent " << stats.entropy << "\n";
      log_->flush();
    }
    if (checkpoint_every_ > 0 && !out_dir_.empty() && iteration_ % checkpoint_every_ == 0)
      save_checkpoint(out_dir_ + "/checkpoint_latest.ck");
    return stats;
  }

  /// Train until total_samples (or the stop predicate fires). Returns the
  /// last iteration stats.
  TrainStats run() {
    TrainStats last;
    long total_iters = cfg_.num_iterations();
    while (iteration_ < total_iters) {
      last = run_iteration();
      if (stop_ && stop_(last, iteration_)) break;
    }
    if (!out_dir_.empty()) save_checkpoint(out_dir_ + "/checkpoint_final.ck");
    return last;
  }

  void save_checkpoint(const std::string& path) const {
    nlohmann::json meta;
    meta["policy_config"] = policy_.config().to_json();
    meta["iteration"] = iteration_;
    meta["samples_seen"] = samples_seen_;
    meta["adam_step"] = opt_.step_count();
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (size_t i = 0; i < policy_.params().size(); ++i)
      tensors.emplace_back(policy_.param_names()[i], &policy_.params()[i]);
    for (size_t i = 0; i < policy_.params().size(); ++i)
      tensors.emplace_back("adam.m." + policy_.param_names()[i], &const_cast<Trainer*>(this)->opt_.m()[i]);
    for (size_t i = 0; i < policy_.params().size(); ++i)
      tensors.emplace_back("adam.v." + policy_.param_names()[i], &const_cast<Trainer*>(this)->opt_.v()[i]);
    save_tensors(path, tensors, meta);
  }

  void load_checkpoint(const std::string& path) {
    LoadedCheckpoint ck = load_tensors(path);
    for (size_t i = 0; i < policy_.params().size(); ++i) {
      const std::string& name = policy_.param_names()[i];
      const Tensor* t = ck.find(name);
      if (!t) throw CheckpointError("checkpoint missing tensor " + name);
      if (t->shape != policy_.params()[i].shape)
        throw CheckpointError("checkpoint shape mismatch for " + name);
      policy_.params()[i] = *t;
      if (const Tensor* m = ck.find("adam.m." + name)) opt_.m()[i] = *m;
      if (const Tensor* v = ck.find("adam.v." + name)) opt_.v()[i] = *v;
    }
    iteration_ = ck.meta.value("iteration", 0L);
    samples_seen_ = ck.meta.value("samples_seen", 0L);
    opt_.set_step_count(ck.meta.value("adam_step", 0L));
    resumed_ = true;
  }

 private:
  static void push_recent(std::deque<double>& q, double v) {
    q.push_back(v);
    while (q.size() > 20) q.pop_front();
  }
  static double mean_of(const std::deque<double>& q) {
    if (q.empty()) return 0.0;
    double s = 0.0;
    for (double v : q) s += v;
    return s / q.size();
  }

  PPOConfig cfg_;
  PolicyNet policy_;
  AdamOptimizer opt_;
  std::vector<std::unique_ptr<RolloutEnv>> envs_;
  CollectorState state_;
  long iteration_ = 0;
  long samples_seen_ = 0;
  std::vector<TrainStats> history_;
  std::deque<double> recent_returns_, recent_rc_;
  std::string out_dir_;
  std::ofstream metrics_;
  int checkpoint_every_ = 50;
  StopPredicate stop_;
  std::ostream* log_ = nullptr;
  bool resumed_ = false;
};

}  // namespace planrl

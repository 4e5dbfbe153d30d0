#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "planrl/policy.hpp"
#include "planrl/reward.hpp"
#include "planrl/rng.hpp"
#include "planrl/special_math.hpp"

namespace planrl {

// ---------------------------------------------------------------------------
// Environment interface used by the collector. Environments auto-reset via
// their own deterministic seed sequence, so trajectories do not depend on
// the collection mode.
// ---------------------------------------------------------------------------

struct ObsDims {
  int channels = 0, height = 0, width = 0;
  int meas_dim = 0;
  int extras_dim = 0;
  size_t raster_size() const { return static_cast<size_t>(channels) * height * width; }
};

struct EnvObs {
  std::vector<uint8_t> raster;  // quantized [0,1] values
  std::vector<float> meas;
  std::vector<float> extras;
};

struct EpisodeInfo {
  double episode_return = 0.0;
  double sum_rc = 0.0;
  int length = 0;
  std::optional<InfractionKind> terminal;
};

struct StepOut {
  EnvObs obs;  // true next observation, also on episode end (pre-reset)
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  std::optional<EpisodeInfo> info;  // present when the episode ended
  bool episode_end() const { return terminated || truncated; }
};

class RolloutEnv {
 public:
  virtual ~RolloutEnv() = default;
  virtual ObsDims dims() const = 0;
  virtual EnvObs reset(uint64_t seed) = 0;
  virtual EnvObs auto_reset() = 0;  // next episode from the env's seed stream
  virtual StepOut step(const std::array<double, 2>& action01) = 0;
};

// ---------------------------------------------------------------------------
// Hyperparameters (Atari-lineage defaults; profiles override epochs etc.)
// ---------------------------------------------------------------------------

struct PPOConfig {
  double lr0 = 2.5e-4;
  bool anneal_lr = true;
  int num_envs = 8;
  int steps_per_iteration = 128;
  int epochs = 3;
  int mini_batch_size = 256;
  double clip_coef = 0.1;
  double ent_coef = 0.01;
  double value_coef = 0.5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double max_grad_norm = 0.5;
  bool norm_adv = true;
  bool clip_vloss = true;
  long total_samples = 1'000'000;
  double adam_eps = 1e-5;
  int num_workers = 0;  // gradient worker threads; 0 = hardware concurrency
  bool async_collection = false;
  uint64_t seed = 1;

  int batch_size() const { return num_envs * steps_per_iteration; }
  long num_iterations() const { return std::max<long>(1, total_samples / batch_size()); }

  void validate() const {
    if (batch_size() % mini_batch_size != 0)
      throw std::invalid_argument("ppo: batch size " + std::to_string(batch_size()) +
                                  " not divisible by mini_batch_size " +
                                  std::to_string(mini_batch_size));
    if (lr0 <= 0 || clip_coef <= 0 || value_coef <= 0 || ent_coef < 0 || gamma <= 0 ||
        gae_lambda < 0 || max_grad_norm <= 0)
      throw std::invalid_argument("ppo: coefficients must be positive");
  }
};

/// Gradient steps taken beyond the first per iteration:
/// (batch / mini_batch) * epochs - 1.
inline long off_policy_steps(const PPOConfig& cfg) {
  long steps_per_epoch = cfg.batch_size() / cfg.mini_batch_size;
  return steps_per_epoch * cfg.epochs - 1;
}

inline long off_policy_steps(long grad_steps_per_epoch, long epochs) {
  return grad_steps_per_epoch * epochs - 1;
}

/// Linear decay to zero over the run.
inline double lr_at(long iteration, const PPOConfig& cfg) {
  if (!cfg.anneal_lr) return cfg.lr0;
  double frac = 1.0 - static_cast<double>(iteration) / static_cast<double>(cfg.num_iterations());
  return cfg.lr0 * frac;
}

// ---------------------------------------------------------------------------
// Rollout storage, env-major [env][step].
// ---------------------------------------------------------------------------

struct RolloutBuffer {
  ObsDims dims;
  int num_envs = 0, steps = 0;

  std::vector<uint8_t> rasters;       // [E*T*raster]
  std::vector<float> meas;            // [E*T*meas_dim]
  std::vector<float> extras;          // [E*T*extras_dim]
  std::vector<std::array<double, 2>> actions;  // beta draws in (0,1)
  std::vector<float> logprobs;
  std::vector<float> values;
  std::vector<double> rewards;
  std::vector<uint8_t> terminals;
  std::vector<uint8_t> truncations;
  std::vector<float> bootstrap_values;  // value of the true next obs at truncation
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<EpisodeInfo> episode_infos;
  int env_faults = 0;

  void init(const ObsDims& d, int envs, int t) {
    dims = d;
    num_envs = envs;
    steps = t;
    size_t n = static_cast<size_t>(envs) * t;
    rasters.assign(n * d.raster_size(), 0);
    meas.assign(n * d.meas_dim, 0.0f);
    extras.assign(n * d.extras_dim, 0.0f);
    actions.assign(n, {0.0, 0.0});
    logprobs.assign(n, 0.0f);
    values.assign(n, 0.0f);
    rewards.assign(n, 0.0);
    terminals.assign(n, 0);
    truncations.assign(n, 0);
    bootstrap_values.assign(n, 0.0f);
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    episode_infos.clear();
    env_faults = 0;
  }

  size_t flat(int env, int step) const { return static_cast<size_t>(env) * steps + step; }

  uint8_t* raster_at(int env, int step) { return rasters.data() + flat(env, step) * dims.raster_size(); }
  const uint8_t* raster_at(int env, int step) const {
    return rasters.data() + flat(env, step) * dims.raster_size();
  }
  float* meas_at(int env, int step) { return meas.data() + flat(env, step) * dims.meas_dim; }
  float* extras_at(int env, int step) { return extras.data() + flat(env, step) * dims.extras_dim; }
};

// ---------------------------------------------------------------------------
// GAE. Terminal boundaries zero the bootstrap; time-limit truncation
// bootstraps with the value of the true next observation. Both cut the
// advantage chain.
// ---------------------------------------------------------------------------

inline void compute_gae(RolloutBuffer& buf, double gamma, double lam,
                        const std::vector<float>& final_values) {
  for (int e = 0; e < buf.num_envs; ++e) {
    double gae = 0.0;
    for (int t = buf.steps - 1; t >= 0; --t) {
      size_t i = buf.flat(e, t);
      bool term = buf.terminals[i] != 0;
      bool trunc = buf.truncations[i] != 0;
      double next_v;
      if (term) {
        next_v = 0.0;
      } else if (trunc) {
        next_v = buf.bootstrap_values[i];
      } else if (t == buf.steps - 1) {
        next_v = final_values[e];
      } else {
        next_v = buf.values[buf.flat(e, t + 1)];
      }
      double delta = buf.rewards[i] + gamma * next_v - buf.values[i];
      double nonterminal = (term || trunc) ? 0.0 : 1.0;
      gae = delta + gamma * lam * nonterminal * gae;
      buf.advantages[i] = gae;
      buf.returns[i] = gae + buf.values[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Collection. Per-env action streams and single-sample forwards make the
// synchronous and asynchronous collectors produce bit-identical buffers for
// deterministic environments; async merely removes the per-step barrier.
// ---------------------------------------------------------------------------

struct CollectorState {
  std::vector<EnvObs> next_obs;
  std::vector<RngStream> action_rngs;
  bool initialized = false;

  void initialize(std::vector<std::unique_ptr<RolloutEnv>>& envs, uint64_t seed) {
    next_obs.clear();
    action_rngs.clear();
    for (size_t e = 0; e < envs.size(); ++e) {
      next_obs.push_back(envs[e]->reset(RngStream::derive(seed, "env", e).next_u64()));
      action_rngs.push_back(RngStream::derive(seed, "action", e));
    }
    initialized = true;
  }
};

namespace collect_detail {

struct SampleResult {
  std::array<double, 2> action;
  float logprob = 0.0f;
  float value = 0.0f;
};

inline Tensor raster_to_tensor(const std::vector<uint8_t>& raster, const ObsDims& d) {
  Tensor t({d.channels, d.height, d.width});
  for (size_t i = 0; i < raster.size(); ++i) t.data[i] = raster[i] * (1.0f / 255.0f);
  return t;
}

inline SampleResult sample_action(const PolicyNet& policy, const EnvObs& obs, const ObsDims& d,
                                  RngStream& rng) {
  Tensor raster = raster_to_tensor(obs.raster, d);
  Tensor meas({d.meas_dim}, std::vector<float>(obs.meas.begin(), obs.meas.end()));
  Tensor extras({d.extras_dim}, std::vector<float>(obs.extras.begin(), obs.extras.end()));
  auto out = policy.forward(raster, meas, extras);
  SampleResult r;
  double lp = 0.0;
  for (size_t k = 0; k < out.alpha.size(); ++k) {
    r.action[k] = beta_sample(rng, out.alpha[k], out.beta[k]);
    lp += beta_log_prob(out.alpha[k], out.beta[k], r.action[k]);
  }
  r.logprob = static_cast<float>(lp);
  r.value = static_cast<float>(out.value);
  return r;
}

inline float value_of(const PolicyNet& policy, const EnvObs& obs, const ObsDims& d) {
  Tensor raster = raster_to_tensor(obs.raster, d);
  Tensor meas({d.meas_dim}, std::vector<float>(obs.meas.begin(), obs.meas.end()));
  Tensor extras({d.extras_dim}, std::vector<float>(obs.extras.begin(), obs.extras.end()));
  return static_cast<float>(policy.forward(raster, meas, extras).value);
}

/// Advance one environment by `steps` transitions, writing its slice of the
/// buffer. Shared by both collectors; this is the entire async task body.
inline void run_env(RolloutEnv& env, const PolicyNet& policy, RolloutBuffer& buf, int e,
                    int step_begin, int step_end, EnvObs& next_obs, RngStream& rng,
                    std::vector<EpisodeInfo>& infos, int& faults) {
  const ObsDims d = buf.dims;
  int consecutive_faults = 0;
  for (int t = step_begin; t < step_end; ++t) {
    size_t i = buf.flat(e, t);
    std::copy(next_obs.raster.begin(), next_obs.raster.end(), buf.raster_at(e, t));
    std::copy(next_obs.meas.begin(), next_obs.meas.end(), buf.meas_at(e, t));
    std::copy(next_obs.extras.begin(), next_obs.extras.end(), buf.extras_at(e, t));

    SampleResult s = sample_action(policy, next_obs, d, rng);
    buf.actions[i] = s.action;
    buf.logprobs[i] = s.logprob;
    buf.values[i] = s.value;

    StepOut out;
    try {
      out = env.step(s.action);
      consecutive_faults = 0;
    } catch (const std::exception&) {
      // environment fault: restart it and retry this slot with a fresh episode
      ++faults;
      if (++consecutive_faults > 100) throw;
      next_obs = env.auto_reset();
      --t;
      continue;
    }
    buf.rewards[i] = out.reward;
    buf.terminals[i] = out.terminated ? 1 : 0;
    buf.truncations[i] = out.truncated && !out.terminated ? 1 : 0;
    if (out.info) infos.push_back(*out.info);
    if (out.episode_end()) {
      if (buf.truncations[i]) buf.bootstrap_values[i] = value_of(policy, out.obs, d);
      next_obs = env.auto_reset();
    } else {
      next_obs = std::move(out.obs);
    }
  }
}

}  // namespace collect_detail

/// Lockstep collection: every environment advances one step per round.
inline RolloutBuffer collect_sync(std::vector<std::unique_ptr<RolloutEnv>>& envs,
                                  const PolicyNet& policy, int steps, CollectorState& state) {
  RolloutBuffer buf;
  buf.init(envs[0]->dims(), static_cast<int>(envs.size()), steps);
  std::vector<std::vector<EpisodeInfo>> infos(envs.size());
  std::vector<int> faults(envs.size(), 0);
  for (int t = 0; t < steps; ++t) {
    for (size_t e = 0; e < envs.size(); ++e) {
      collect_detail::run_env(*envs[e], policy, buf, static_cast<int>(e), t, t + 1,
                              state.next_obs[e], state.action_rngs[e], infos[e], faults[e]);
    }
  }
  for (size_t e = 0; e < envs.size(); ++e) {
    for (auto& info : infos[e]) buf.episode_infos.push_back(info);
    buf.env_faults += faults[e];
  }
  return buf;
}

/// Asynchronous collection: each environment advances independently on its
/// own thread until it has contributed exactly `steps` transitions; the
/// caller proceeds only after all environments finish (synchronized
/// backward, no policy lag).
inline RolloutBuffer collect_async(std::vector<std::unique_ptr<RolloutEnv>>& envs,
                                   const PolicyNet& policy, int steps, CollectorState& state) {
  RolloutBuffer buf;
  buf.init(envs[0]->dims(), static_cast<int>(envs.size()), steps);
  std::vector<std::vector<EpisodeInfo>> infos(envs.size());
  std::vector<int> faults(envs.size(), 0);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(envs.size());
  threads.reserve(envs.size());
  for (size_t e = 0; e < envs.size(); ++e) {
    threads.emplace_back([&, e] {
      try {
        collect_detail::run_env(*envs[e], policy, buf, static_cast<int>(e), 0, steps,
                                state.next_obs[e], state.action_rngs[e], infos[e], faults[e]);
      } catch (...) {
        errors[e] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  for (size_t e = 0; e < envs.size(); ++e) {
    for (auto& info : infos[e]) buf.episode_infos.push_back(info);
    buf.env_faults += faults[e];
  }
  return buf;
}

/// Values of the per-env observations following the rollout (GAE tail
/// bootstrap).
inline std::vector<float> tail_values(const PolicyNet& policy, const CollectorState& state,
                                      const ObsDims& d) {
  std::vector<float> out;
  out.reserve(state.next_obs.size());
  for (const EnvObs& obs : state.next_obs)
    out.push_back(collect_detail::value_of(policy, obs, d));
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class AdamOptimizer {
 public:
  AdamOptimizer(const std::vector<Tensor>& params, double eps = 1e-5, double beta1 = 0.9,
                double beta2 = 0.999)
      : eps_(eps), beta1_(beta1), beta2_(beta2) {
    for (const Tensor& p : params) {
      m_.push_back(Tensor(p.shape));
      v_.push_back(Tensor(p.shape));
    }
  }

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t p = 0; p < params.size(); ++p) {
      float* w = params[p].ptr();
      const float* g = grads[p].ptr();
      float* m = m_[p].ptr();
      float* v = v_[p].ptr();
      int64_t n = params[p].numel();
      for (int64_t i = 0; i < n; ++i) {
        m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
        v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * double(g[i]) * g[i]);
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }
  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }

 private:
  double eps_, beta1_, beta2_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// ---------------------------------------------------------------------------
// PPO update: shuffled mini-batches, clipped surrogate + clipped value loss,
// entropy bonus, global grad-norm clipping. Per-sample tapes run on worker
// threads over fixed-size chunks; chunk gradients reduce in index order, so
// results do not depend on thread count or timing.
// ---------------------------------------------------------------------------

struct TrainStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm, last minibatch
  double lr = 0.0;
  double first_minibatch_loss = 0.0;  // objective before the first update
  long samples = 0;
  double fps = 0.0;
  double mean_episode_return = 0.0;
  double mean_sum_rc = 0.0;
  int episodes = 0;
  int minibatches = 0;
};

struct PPOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Scale gradients so their global L2 norm does not exceed max_norm.
/// Returns the pre-clip norm (accumulated in double).
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double norm2 = 0.0;
  for (const Tensor& g : grads)
    for (float v : g.data) norm2 += static_cast<double>(v) * v;
  double norm = std::sqrt(norm2);
  if (norm > max_norm) {
    double scale = max_norm / (norm + 1e-12);
    for (Tensor& g : grads)
      for (float& v : g.data) v = static_cast<float>(v * scale);
  }
  return norm;
}

namespace update_detail {

constexpr int kGradChunk = 64;  // fixed so reductions are thread-count independent

struct ChunkAccum {
  std::vector<Tensor> grads;
  double loss_sum = 0.0;
  double pg_sum = 0.0, v_sum = 0.0, ent_sum = 0.0, kl_sum = 0.0;
  long clip_hits = 0;
};

}  // namespace update_detail

inline TrainStats ppo_update(PolicyNet& policy, AdamOptimizer& opt, const RolloutBuffer& buf,
                             const PPOConfig& cfg, long iteration) {
  cfg.validate();
  const int batch = buf.num_envs * buf.steps;
  const int mb_size = cfg.mini_batch_size;
  if (batch % mb_size != 0)
    throw PPOError("collected batch not divisible by mini_batch_size");
  const ObsDims d = buf.dims;
  double lr = lr_at(iteration, cfg);

  std::vector<int> indices(batch);
  for (int i = 0; i < batch; ++i) indices[i] = i;
  RngStream shuffle_rng = RngStream::derive(cfg.seed, "shuffle", static_cast<uint64_t>(iteration));

  int n_workers = cfg.num_workers > 0 ? cfg.num_workers
                                      : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, n_workers);

  TrainStats stats;
  stats.lr = lr;
  stats.samples = batch;
  bool first_minibatch = true;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's shuffle stream
    for (int i = batch - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.next_below(static_cast<uint64_t>(i) + 1));
      std::swap(indices[i], indices[j]);
    }
    for (int start = 0; start < batch; start += mb_size) {
      // per-minibatch advantage normalization (population std)
      std::vector<double> adv(mb_size);
      double mean = 0.0;
      for (int k = 0; k < mb_size; ++k) {
        adv[k] = buf.advantages[indices[start + k]];
        mean += adv[k];
      }
      mean /= mb_size;
      if (cfg.norm_adv) {
        double var = 0.0;
        for (int k = 0; k < mb_size; ++k) var += (adv[k] - mean) * (adv[k] - mean);
        double std = std::sqrt(var / mb_size);
        for (int k = 0; k < mb_size; ++k) adv[k] = (adv[k] - mean) / (std + 1e-8);
      }

      const int n_chunks = (mb_size + update_detail::kGradChunk - 1) / update_detail::kGradChunk;
      std::vector<update_detail::ChunkAccum> accums(n_chunks);
      std::atomic<int> next_chunk{0};
      std::vector<std::exception_ptr> worker_errors(std::max(1, n_workers));

      auto worker_body = [&]() {
        for (;;) {
          int c = next_chunk.fetch_add(1);
          if (c >= n_chunks) break;
          update_detail::ChunkAccum& acc = accums[c];
          auto leaves = policy.make_param_leaves();
          TapeT<float> tape;
          int k0 = c * update_detail::kGradChunk;
          int k1 = std::min(mb_size, k0 + update_detail::kGradChunk);
          for (int k = k0; k < k1; ++k) {
            int idx = indices[start + k];
            int e = idx / buf.steps, t = idx % buf.steps;
            Tensor raster({d.channels, d.height, d.width});
            const uint8_t* src = buf.raster_at(e, t);
            for (size_t i = 0; i < d.raster_size(); ++i)
              raster.data[i] = src[i] * (1.0f / 255.0f);
            Tensor meas({d.meas_dim});
            std::copy(buf.meas.begin() + idx * d.meas_dim,
                      buf.meas.begin() + (idx + 1) * d.meas_dim, meas.data.begin());
            Tensor extras({d.extras_dim});
            std::copy(buf.extras.begin() + idx * d.extras_dim,
                      buf.extras.begin() + (idx + 1) * d.extras_dim, extras.data.begin());

            auto out = policy.forward_train(tape, leaves, raster, meas, extras);
            std::vector<double> action(buf.actions[idx].begin(), buf.actions[idx].end());
            VarT<float> lp_new = ad::beta_log_prob(tape, out.alpha, out.beta, action);
            VarT<float> logratio = ad::add_const(tape, lp_new, -double(buf.logprobs[idx]));
            VarT<float> ratio = ad::vexp(tape, logratio);

            double a_k = adv[k];
            VarT<float> pg1 = ad::scale(tape, ratio, -a_k);
            VarT<float> pg2 = ad::scale(
                tape, ad::clamp(tape, ratio, 1.0 - cfg.clip_coef, 1.0 + cfg.clip_coef), -a_k);
            VarT<float> pg = ad::maximum(tape, pg1, pg2);

            double ret = buf.returns[idx];
            VarT<float> vdiff = ad::add_const(tape, out.value, -ret);
            VarT<float> v_unclipped = ad::square(tape, vdiff);
            VarT<float> v_loss;
            if (cfg.clip_vloss) {
              double v_old = buf.values[idx];
              VarT<float> dv = ad::add_const(tape, out.value, -v_old);
              VarT<float> dv_c = ad::clamp(tape, dv, -cfg.clip_coef, cfg.clip_coef);
              VarT<float> v_clip_diff = ad::add_const(tape, dv_c, v_old - ret);
              VarT<float> v_clipped = ad::square(tape, v_clip_diff);
              v_loss = ad::scale(tape, ad::maximum(tape, v_unclipped, v_clipped), 0.5);
            } else {
              v_loss = ad::scale(tape, v_unclipped, 0.5);
            }
            VarT<float> ent = ad::beta_entropy(tape, out.alpha, out.beta);

            VarT<float> loss =
                ad::add(tape, pg,
                        ad::add(tape, ad::scale(tape, v_loss, cfg.value_coef),
                                ad::scale(tape, ent, -cfg.ent_coef)));
            double loss_val = static_cast<double>(loss->val.item());
            if (!std::isfinite(loss_val))
              throw PPOError("non-finite loss in ppo_update (sample " + std::to_string(idx) +
                             ")");
            tape.backward(loss, 1.0f / static_cast<float>(mb_size));
            tape.clear();

            acc.loss_sum += loss_val;
            acc.pg_sum += static_cast<double>(pg->val.item());
            acc.v_sum += static_cast<double>(v_loss->val.item());
            acc.ent_sum += static_cast<double>(ent->val.item());
            double r = static_cast<double>(ratio->val.item());
            double lr_ = static_cast<double>(logratio->val.item());
            acc.kl_sum += (r - 1.0) - lr_;
            if (std::abs(r - 1.0) > cfg.clip_coef) ++acc.clip_hits;
          }
          // move accumulated leaf grads out
          acc.grads.reserve(leaves.size());
          for (auto& leaf : leaves) acc.grads.push_back(std::move(leaf->grad));
        }
      };
      auto worker = [&](int w) {
        try {
          worker_body();
        } catch (...) {
          worker_errors[w] = std::current_exception();
        }
      };

      if (n_workers == 1 || n_chunks == 1) {
        worker(0);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < std::min(n_workers, n_chunks); ++w) pool.emplace_back(worker, w);
        for (auto& th : pool) th.join();
      }
      for (auto& err : worker_errors)
        if (err) std::rethrow_exception(err);

      // deterministic reduction in chunk order
      std::vector<Tensor> grads;
      grads.reserve(policy.params().size());
      for (const Tensor& p : policy.params()) grads.push_back(Tensor(p.shape));
      double loss_sum = 0.0, pg_sum = 0.0, v_sum = 0.0, ent_sum = 0.0, kl_sum = 0.0;
      long clip_hits = 0;
      for (const auto& acc : accums) {
        for (size_t p = 0; p < grads.size(); ++p)
          for (int64_t i = 0; i < grads[p].numel(); ++i)
            grads[p].data[i] += acc.grads[p].data[i];
        loss_sum += acc.loss_sum;
        pg_sum += acc.pg_sum;
        v_sum += acc.v_sum;
        ent_sum += acc.ent_sum;
        kl_sum += acc.kl_sum;
        clip_hits += acc.clip_hits;
      }

      if (first_minibatch) {
        stats.first_minibatch_loss = loss_sum / mb_size;
        first_minibatch = false;
      }
      stats.policy_loss += pg_sum / mb_size;
      stats.value_loss += v_sum / mb_size;
      stats.entropy += ent_sum / mb_size;
      stats.approx_kl += kl_sum / mb_size;
      stats.clip_fraction += static_cast<double>(clip_hits) / mb_size;
      ++stats.minibatches;

      stats.grad_norm = clip_global_norm(grads, cfg.max_grad_norm);
      opt.step(policy.params(), grads, lr);
    }
  }

  double n_mb = std::max(1, stats.minibatches);
  stats.policy_loss /= n_mb;
  stats.value_loss /= n_mb;
  stats.entropy /= n_mb;
  stats.approx_kl /= n_mb;
  stats.clip_fraction /= n_mb;
  return stats;
}

}  // namespace planrl

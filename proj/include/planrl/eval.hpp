#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "planrl/env.hpp"
#include "planrl/metrics.hpp"
#include "planrl/policy.hpp"
#include "planrl/ppo.hpp"
#include "planrl/special_math.hpp"

namespace planrl {

enum class ActionStat { Mean, Mode };

/// One evaluation episode with a deterministic action statistic instead of
/// sampling. Returns the episode record plus the per-step counters needed
/// for the CLS mapping.
struct EvalEpisode {
  int route = 0;
  int repeat = 0;
  uint64_t seed = 0;
  double sum_rc = 0.0;
  double episode_return = 0.0;
  int steps = 0;
  std::optional<InfractionKind> terminal;
  double mean_speed = 0.0;
  double ds = 0.0;
  double cls_score = 0.0;
};

struct EvalReport {
  std::vector<EvalEpisode> rows;
  double mean_ds = 0.0, std_ds = 0.0;
  double mean_rc = 0.0, std_rc = 0.0;
  double mean_cls = 0.0;
  DsPenaltyTable penalty_table;

  nlohmann::json aggregate_json() const {
    nlohmann::json j;
    j["episodes"] = rows.size();
    j["mean_ds"] = mean_ds;
    j["std_ds"] = std_ds;
    j["mean_rc"] = mean_rc;
    j["std_rc"] = std_rc;
    j["mean_cls"] = mean_cls;
    nlohmann::json table;
    for (const auto& [kind, factor] : penalty_table.factor) table[to_string(kind)] = factor;
    j["ds_penalty_table"] = table;
    return j;
  }
};

inline EvalEpisode eval_episode(DrivingEnv& env, const PolicyNet& policy, uint64_t route_seed,
                                uint64_t variation_seed, ActionStat stat = ActionStat::Mean,
                                int max_steps = 100000) {
  EvalEpisode ep;
  ep.seed = route_seed;
  EnvObs obs = env.reset_split(route_seed, variation_seed);
  ObsDims d = env.dims();

  int ttc_steps = 0, comfort_steps = 0, speeding_steps = 0, opposing_steps = 0;
  double speed_sum = 0.0;

  for (int t = 0; t < max_steps; ++t) {
    Tensor raster({d.channels, d.height, d.width});
    for (size_t i = 0; i < obs.raster.size(); ++i) raster.data[i] = obs.raster[i] / 255.0f;
    Tensor meas({d.meas_dim}, std::vector<float>(obs.meas.begin(), obs.meas.end()));
    Tensor extras({d.extras_dim}, std::vector<float>(obs.extras.begin(), obs.extras.end()));
    auto out = policy.forward(raster, meas, extras);
    std::array<double, 2> action;
    for (int k = 0; k < 2; ++k)
      action[k] = stat == ActionStat::Mean ? beta_mean(out.alpha[k], out.beta[k])
                                           : beta_mode(out.alpha[k], out.beta[k]);
    StepOut so = env.step(action);
    obs = std::move(so.obs);
    ep.episode_return += so.reward;
    ++ep.steps;
    const auto& snap = env.debug().snapshot;
    speed_sum += snap.speed;
    if (snap.ttc_violation) ++ttc_steps;
    if (snap.comfort_violations > 0) ++comfort_steps;
    if (snap.speed > snap.speed_limit) ++speeding_steps;
    if (snap.on_opposing_lane) ++opposing_steps;
    if (so.episode_end()) {
      if (so.info) {
        ep.sum_rc = so.info->sum_rc;
        ep.terminal = so.info->terminal;
      }
      break;
    }
  }
  ep.mean_speed = ep.steps > 0 ? speed_sum / ep.steps : 0.0;

  EpisodeResult res;
  res.rc = ep.sum_rc;
  if (ep.terminal) res.infractions[*ep.terminal] = 1;
  res.route_length_km = env.route().total_length / 1000.0;
  res.duration_s = ep.steps * env.config().dt;
  res.mean_speed = ep.mean_speed;
  ep.ds = driving_score(res);

  // CLS mapping from the episode log: hard multipliers drop to zero on their
  // terminal infractions; weighted scores are violation-free step fractions.
  ClsInput ci;
  ci.no_at_fault_collisions = ep.terminal == InfractionKind::Collision ? 0.0 : 1.0;
  ci.drivable_area = ep.terminal == InfractionKind::OffRoad ? 0.0 : 1.0;
  double frac = ep.steps > 0 ? static_cast<double>(opposing_steps) / ep.steps : 0.0;
  ci.driving_direction = frac > 0.1 ? 0.0 : 1.0;
  ci.making_progress = ep.sum_rc > 2.0 ? 1.0 : 0.0;
  ci.ttc = ep.steps > 0 ? 100.0 * (1.0 - static_cast<double>(ttc_steps) / ep.steps) : 100.0;
  ci.rc = ep.sum_rc;
  ci.speed_limit =
      ep.steps > 0 ? 100.0 * (1.0 - static_cast<double>(speeding_steps) / ep.steps) : 100.0;
  ci.comfort =
      ep.steps > 0 ? 100.0 * (1.0 - static_cast<double>(comfort_steps) / ep.steps) : 100.0;
  ep.cls_score = cls(ci);
  return ep;
}

/// N routes x R repeats with the chosen action statistic; repeats share the
/// route and vary traffic/spawn.
inline EvalReport run_eval(DrivingEnv& env, const PolicyNet& policy, int n_routes, int repeats,
                           uint64_t base_seed, ActionStat stat = ActionStat::Mean) {
  EvalReport report;
  for (int r = 0; r < n_routes; ++r) {
    uint64_t route_seed = RngStream::derive(base_seed, "eval_route", r).next_u64();
    for (int rep = 0; rep < repeats; ++rep) {
      uint64_t var_seed = RngStream::derive(route_seed, "eval_rep", rep).next_u64();
      EvalEpisode ep = eval_episode(env, policy, route_seed, var_seed, stat);
      ep.route = r;
      ep.repeat = rep;
      report.rows.push_back(ep);
    }
  }
  auto mean_std = [](const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= xs.empty() ? 1 : xs.size();
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    double sd = xs.size() > 1 ? std::sqrt(v / xs.size()) : 0.0;
    return std::make_pair(m, sd);
  };
  std::vector<double> dss, rcs, clss;
  for (const auto& ep : report.rows) {
    dss.push_back(ep.ds);
    rcs.push_back(ep.sum_rc);
    clss.push_back(ep.cls_score);
  }
  std::tie(report.mean_ds, report.std_ds) = mean_std(dss);
  std::tie(report.mean_rc, report.std_rc) = mean_std(rcs);
  report.mean_cls = mean_std(clss).first;
  return report;
}

inline void write_eval_csv(const EvalReport& report, std::ostream& os) {
  os << "route,repeat,seed,sum_rc,ds,cls,steps,return,mean_speed,terminal\n";
  for (const auto& ep : report.rows) {
    os << ep.route << ',' << ep.repeat << ',' << ep.seed << ',' << ep.sum_rc << ',' << ep.ds
       << ',' << ep.cls_score << ',' << ep.steps << ',' << ep.episode_return << ','
       << ep.mean_speed << ',' << (ep.terminal ? to_string(*ep.terminal) : "none") << "\n";
  }
}

}  // namespace planrl

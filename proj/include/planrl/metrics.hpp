#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrl/reward.hpp"
#include "planrl/rng.hpp"

namespace planrl {

// ---------------------------------------------------------------------------
// Driving Score: route completion multiplied by a per-infraction penalty
// factor for every recorded infraction.
// ---------------------------------------------------------------------------

struct EpisodeResult {
  double rc = 0.0;  // percent, [0, 100]
  std::map<InfractionKind, int> infractions;
  double route_length_km = 0.0;
  double duration_s = 0.0;
  double mean_speed = 0.0;
};

/// Leaderboard-style penalty factors per infraction kind. These defaults are
/// configuration, not measured values; reports always print the table used.
struct DsPenaltyTable {
  std::map<InfractionKind, double> factor = {
      {InfractionKind::Collision, 0.60},     {InfractionKind::OffRoad, 0.65},
      {InfractionKind::RunRedLight, 0.70},   {InfractionKind::RunStopSign, 0.80},
      {InfractionKind::RouteDeviation, 0.70}, {InfractionKind::Blocked, 0.70},
  };
};

inline double driving_score(const EpisodeResult& res, const DsPenaltyTable& table = {}) {
  double ds = res.rc;
  for (const auto& [kind, count] : res.infractions) {
    auto it = table.factor.find(kind);
    if (it == table.factor.end()) continue;
    ds *= std::pow(it->second, count);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// nuPlan closed-loop score: hard multipliers times a weighted average of the
// soft scores (TTC, RC, speed-limit, comfort weighted 5:5:4:2).
// ---------------------------------------------------------------------------

struct ClsInput {
  // multiplier scores in [0, 1]
  double no_at_fault_collisions = 1.0;
  double drivable_area = 1.0;
  double driving_direction = 1.0;
  double making_progress = 1.0;
  // weighted scores in [0, 100]
  double ttc = 100.0;
  double rc = 100.0;
  double speed_limit = 100.0;
  double comfort = 100.0;

  static constexpr double kWeightTtc = 5.0;
  static constexpr double kWeightRc = 5.0;
  static constexpr double kWeightSpeed = 4.0;
  static constexpr double kWeightComfort = 2.0;
};

inline double cls(const ClsInput& in) {
  double mult = in.no_at_fault_collisions * in.drivable_area * in.driving_direction *
                in.making_progress;
  double wsum = ClsInput::kWeightTtc + ClsInput::kWeightRc + ClsInput::kWeightSpeed +
                ClsInput::kWeightComfort;
  double weighted = (ClsInput::kWeightTtc * in.ttc + ClsInput::kWeightRc * in.rc +
                     ClsInput::kWeightSpeed * in.speed_limit +
                     ClsInput::kWeightComfort * in.comfort) /
                    wsum;
  return mult * weighted;
}

// ---------------------------------------------------------------------------
// Expected Driving Score when clearing n scenarios consecutively with an
// individual success rate s and a per-failure penalty factor p:
// X ~ Binomial(n, 1 - s), DS = 100 p^X, so E[DS] = 100 (s + (1-s) p)^n.
// ---------------------------------------------------------------------------

inline double expected_ds(int n_scenarios, double success_rate, double penalty) {
  if (success_rate < 0.0 || success_rate > 1.0 || penalty < 0.0 || penalty > 1.0)
    throw std::invalid_argument("expected_ds: rates must be within [0, 1]");
  return 100.0 * std::pow(success_rate + (1.0 - success_rate) * penalty, n_scenarios);
}

inline double expected_infractions(int n_scenarios, double success_rate) {
  return n_scenarios * (1.0 - success_rate);
}

struct MonteCarloDs {
  double mean_ds = 0.0;
  double mean_infractions = 0.0;
};

/// Monte-Carlo estimate of the same quantity; converges to expected_ds.
inline MonteCarloDs monte_carlo_ds(int n_scenarios, double success_rate, double penalty,
                                   int trials, RngStream rng) {
  if (trials < 1) throw std::invalid_argument("monte_carlo_ds: trials >= 1 required");
  double sum_ds = 0.0;
  long sum_inf = 0;
  for (int trial = 0; trial < trials; ++trial) {
    int infractions = 0;
    for (int k = 0; k < n_scenarios; ++k)
      if (!rng.bernoulli(success_rate)) ++infractions;
    sum_ds += 100.0 * std::pow(penalty, infractions);
    sum_inf += infractions;
  }
  return {sum_ds / trials, static_cast<double>(sum_inf) / trials};
}

// ---------------------------------------------------------------------------
// Auxiliary per-kilometer infraction statistics from episode logs. The
// min-speed (MS) metric is a reconstruction: the fraction of steps driven
// below half of a rolling reference speed (the recent 95th-percentile-ish
// mean of the ego speed capped by the limit).
// ---------------------------------------------------------------------------

struct InfractionStats {
  double ped_collisions_per_km = 0.0;
  double veh_collisions_per_km = 0.0;
  double min_speed_fraction = 0.0;
};

inline InfractionStats infraction_stats(const std::vector<EpisodeResult>& episodes,
                                        const std::vector<double>& speed_samples = {},
                                        double reference_speed = 8.0) {
  InfractionStats st;
  double km = 0.0;
  int collisions = 0;
  for (const auto& ep : episodes) {
    km += ep.route_length_km * ep.rc / 100.0;
    auto it = ep.infractions.find(InfractionKind::Collision);
    if (it != ep.infractions.end()) collisions += it->second;
  }
  if (km > 0.0) st.veh_collisions_per_km = collisions / km;
  if (!speed_samples.empty()) {
    int slow = 0;
    for (double v : speed_samples)
      if (v < 0.5 * reference_speed) ++slow;
    st.min_speed_fraction = static_cast<double>(slow) / speed_samples.size();
  }
  return st;
}

}  // namespace planrl

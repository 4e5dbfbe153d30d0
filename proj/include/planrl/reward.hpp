#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "planrl/dynamics.hpp"

namespace planrl {

// ---------------------------------------------------------------------------
// Infractions. The first six are terminal (end the episode), the rest are
// soft penalties that multiplicatively reduce the route-completion reward.
// ---------------------------------------------------------------------------

enum class InfractionKind : int {
  Collision = 0,
  OffRoad = 1,
  RunRedLight = 2,
  RunStopSign = 3,
  RouteDeviation = 4,
  Blocked = 5,
  // soft
  OutsideLanes = 6,
  LaneCenter = 7,
  Speeding = 8,
  Ttc = 9,
  Comfort = 10,
};

inline bool is_terminal_kind(InfractionKind k) { return static_cast<int>(k) <= 5; }

inline const char* to_string(InfractionKind k) {
  switch (k) {
    case InfractionKind::Collision: return "collision";
    case InfractionKind::OffRoad: return "off_road";
    case InfractionKind::RunRedLight: return "run_red_light";
    case InfractionKind::RunStopSign: return "run_stop_sign";
    case InfractionKind::RouteDeviation: return "route_deviation";
    case InfractionKind::Blocked: return "blocked";
    case InfractionKind::OutsideLanes: return "outside_lanes";
    case InfractionKind::LaneCenter: return "lane_center";
    case InfractionKind::Speeding: return "speeding";
    case InfractionKind::Ttc: return "ttc";
    case InfractionKind::Comfort: return "comfort";
  }
  return "?";
}

enum class RewardProfile { Carla, Nuplan, Shaped };

inline const char* to_string(RewardProfile p) {
  switch (p) {
    case RewardProfile::Carla: return "carla";
    case RewardProfile::Nuplan: return "nuplan";
    case RewardProfile::Shaped: return "shaped";
  }
  return "?";
}

/// Persistence of a triggered TTC/comfort penalty in simulator steps.
constexpr int kCarlaPenaltyPersistence = 500;
constexpr int kPersistUntilEpisodeEnd = -1;

// ---------------------------------------------------------------------------
// Per-step world view consumed by the reward rules. The environment fills
// this from the map, dynamics and traffic modules; tests fabricate it
// directly.
// ---------------------------------------------------------------------------

struct RewardSnapshot {
  // ego
  double speed = 0.0;            // m/s after the step
  double prev_speed = 0.0;
  double steer = 0.0;
  double prev_steer = 0.0;
  double meters_traveled = 0.0;  // distance covered this step

  // route
  double route_lateral = 0.0;    // signed offset from the route
  bool reached_route_end = false;

  // terminal conditions, detected by the environment
  bool collision = false;
  bool off_road = false;
  bool crossed_red_light = false;
  bool crossed_stop_uncleared = false;
  double blocked_duration_s = 0.0;  // time below 0.1 m/s so far

  // soft-penalty inputs
  bool on_sidewalk = false;
  bool on_opposing_lane = false;
  bool in_intersection = false;
  double lane_center_offset = 0.0;  // |lateral| to nearest own-direction lane center
  double lane_half_width = 1.75;
  double speed_limit = 13.89;       // m/s
  bool ttc_violation = false;
  int comfort_violations = 0;       // of 6

  // shaped-reward inputs: distances to the governing obstruction, if any
  std::optional<double> red_light_distance;
  std::optional<double> stop_sign_distance;
  std::optional<double> lead_vehicle_distance;
  double route_distance = 0.0;  // euclidean distance to nearest route point
};

// ---------------------------------------------------------------------------
// Terminal penalties
// ---------------------------------------------------------------------------

struct TerminalResult {
  InfractionKind kind;
  double T = 0.0;  // terminal penalty subtracted from the reward
};

constexpr double kRouteDeviationLimit = 30.0;  // m
constexpr double kBlockedSpeed = 0.1;          // m/s
constexpr double kBlockedDuration = 90.0;      // s
constexpr double kNuplanStationarySpeed = 0.05;  // collisions below this are ignored

/// First violated terminal condition in fixed priority order. The nuPlan
/// profile only terminates on collision (above the stationary speed) and
/// off-road.
inline std::optional<TerminalResult> terminal_check(const RewardSnapshot& s,
                                                    RewardProfile profile) {
  bool nuplan = profile == RewardProfile::Nuplan;
  if (s.collision && !(nuplan && s.speed < kNuplanStationarySpeed))
    return TerminalResult{InfractionKind::Collision, 1.0};
  if (s.off_road) return TerminalResult{InfractionKind::OffRoad, 0.0};
  if (!nuplan) {
    if (s.crossed_red_light) return TerminalResult{InfractionKind::RunRedLight, 1.0};
    if (s.crossed_stop_uncleared) return TerminalResult{InfractionKind::RunStopSign, 0.0};
    if (std::abs(s.route_lateral) > kRouteDeviationLimit)
      return TerminalResult{InfractionKind::RouteDeviation, 0.0};
    if (s.blocked_duration_s > kBlockedDuration)
      return TerminalResult{InfractionKind::Blocked, 0.0};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Soft penalties and the penalty ledger
// ---------------------------------------------------------------------------

struct PenaltyLedger {
  struct Entry {
    InfractionKind kind;
    double p = 1.0;
    int remaining = 0;  // kPersistUntilEpisodeEnd means until reset
  };
  std::vector<Entry> entries;
  RewardProfile profile = RewardProfile::Carla;

  void clear() { entries.clear(); }

  /// Insert or refresh a persistent penalty. Re-triggering resets the
  /// remaining duration instead of stacking.
  void trigger(InfractionKind kind, double p) {
    int persistence = profile == RewardProfile::Nuplan ? kPersistUntilEpisodeEnd
                                                       : kCarlaPenaltyPersistence;
    for (Entry& e : entries) {
      if (e.kind == kind) {
        e.p = p;
        e.remaining = persistence;
        return;
      }
    }
    entries.push_back({kind, p, persistence});
  }

  double product() const {
    double prod = 1.0;
    for (const Entry& e : entries) prod *= e.p;
    return prod;
  }

  /// Advance one simulator step: persistent entries count down and expire.
  void tick() {
    for (Entry& e : entries)
      if (e.remaining > 0) --e.remaining;
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [](const Entry& e) { return e.remaining == 0; }),
                  entries.end());
  }

  int remaining_steps(InfractionKind kind) const {
    for (const Entry& e : entries)
      if (e.kind == kind) return e.remaining;
    return 0;
  }
};

/// Factor in [0, 1] for the lateral offset from the nearest own-direction
/// lane center: 1 on the centerline, 0 on the lane marking. The nuPlan
/// profile tolerates a 0.5 m dead-band before the ramp starts.
inline double lane_center_factor(double offset, double half_width, RewardProfile profile) {
  double dead = profile == RewardProfile::Nuplan ? 0.5 : 0.0;
  if (half_width <= dead) return 1.0;
  double x = (std::abs(offset) - dead) / (half_width - dead);
  return std::clamp(1.0 - x, 0.0, 1.0);
}

/// Factor in [0, 1] for exceeding the speed limit, ramping 1 -> 0 over the
/// first 8 km/h of excess.
inline double speeding_factor(double speed, double speed_limit) {
  double excess_kmh = std::max(0.0, (speed - speed_limit) * 3.6);
  return std::clamp(1.0 - excess_kmh / 8.0, 0.0, 1.0);
}

inline double comfort_factor(int num_violated) {
  return 1.0 - 0.5 * static_cast<double>(num_violated) / 6.0;
}

/// Product of all active soft penalties for this step. Instantaneous factors
/// (outside lanes, lane centering, speeding) apply for one step; TTC and
/// comfort write ledger entries with profile-dependent persistence and are
/// included in the returned product from the trigger step on. The caller
/// advances the ledger with tick() once per simulator step (after building
/// observations), so a TTC hit reduces exactly 500 consecutive step rewards
/// in the carla profile.
inline double soft_penalty_product(const RewardSnapshot& s, PenaltyLedger& ledger) {
  double inst = 1.0;
  if (s.on_sidewalk || s.on_opposing_lane) inst *= 0.0;
  if (!s.in_intersection)
    inst *= lane_center_factor(s.lane_center_offset, s.lane_half_width, ledger.profile);
  inst *= speeding_factor(s.speed, s.speed_limit);

  if (s.ttc_violation) ledger.trigger(InfractionKind::Ttc, 0.5);
  if (s.comfort_violations > 0)
    ledger.trigger(InfractionKind::Comfort, comfort_factor(s.comfort_violations));

  return inst * ledger.product();
}

// ---------------------------------------------------------------------------
// The route-completion reward (and the nuPlan survival blend)
// ---------------------------------------------------------------------------

struct RewardOutput {
  double r = 0.0;
  bool terminated = false;
  std::optional<InfractionKind> terminal_kind;
  double T = 0.0;
  double rc = 0.0;              // percent route completed this step
  double penalty_product = 1.0;
};

/// r_t = RC_t * prod(p_t) - T
inline RewardOutput rc_reward(double rc_t, double penalty_product,
                              const std::optional<TerminalResult>& terminal) {
  RewardOutput out;
  out.rc = rc_t;
  out.penalty_product = penalty_product;
  if (terminal) {
    out.terminated = true;
    out.terminal_kind = terminal->kind;
    out.T = terminal->T;
  }
  out.r = rc_t * penalty_product - out.T;
  return out;
}

struct SurvivalConfig {
  double s = 0.6;  // survival ratio
  int n = 150;     // total simulation iterations
};

/// Fixed-horizon blend r* = (1-s) r + s*100/N. Terminal steps get no bonus;
/// the blend keeps episode returns within 0-100.
inline double survival_adjusted(double r, const SurvivalConfig& cfg, bool terminated) {
  if (terminated) return r;
  return (1.0 - cfg.s) * r + cfg.s * 100.0 / static_cast<double>(cfg.n);
}

// ---------------------------------------------------------------------------
// Shaped-reward baseline: additive speed/travel/deviation/steering terms with
// rule-computed target speeds.
// ---------------------------------------------------------------------------

struct ShapedRewardConfig {
  double w_speed = 1.0;
  double w_travel = 1.0;
  double w_deviation = 2.0;
  double w_steer = 0.5;
  double speed_norm = 7.5;
  double margin_vehicle = 8.0;
  double margin_red_light = 4.0;
  double margin_stop_sign = 2.5;
  double clip_distance = 12.5;
  double deviation_norm = 8.0;
  double terminal_deviation_limit = 15.0;
};

/// Target speed from distance to an obstruction: 80% of the limit scaled
/// down linearly inside the clip window past the safety margin.
inline double shaped_target_speed(double v_limit, double distance, double margin,
                                  const ShapedRewardConfig& cfg = {}) {
  double d = std::clamp(distance - margin, 0.0, cfg.clip_distance);
  return 0.8 * v_limit * d / cfg.clip_distance;
}

struct ShapedRewardOutput {
  double r = 0.0;
  double v_target = 0.0;
  bool terminated = false;
};

inline ShapedRewardOutput shaped_reward(const RewardSnapshot& s,
                                        const ShapedRewardConfig& cfg = {}) {
  ShapedRewardOutput out;
  double v_target = 0.8 * s.speed_limit;
  if (s.red_light_distance)
    v_target = std::min(v_target, shaped_target_speed(s.speed_limit, *s.red_light_distance,
                                                      cfg.margin_red_light, cfg));
  if (s.stop_sign_distance)
    v_target = std::min(v_target, shaped_target_speed(s.speed_limit, *s.stop_sign_distance,
                                                      cfg.margin_stop_sign, cfg));
  if (s.lead_vehicle_distance)
    v_target = std::min(v_target, shaped_target_speed(s.speed_limit, *s.lead_vehicle_distance,
                                                      cfg.margin_vehicle, cfg));
  out.v_target = v_target;

  // terminal rewards replace the shaped sum
  if (s.collision || s.crossed_red_light || s.crossed_stop_uncleared) {
    out.r = -1.0 - s.speed;
    out.terminated = true;
    return out;
  }
  if (std::abs(s.route_lateral) > cfg.terminal_deviation_limit) {
    out.r = -1.0;
    out.terminated = true;
    return out;
  }
  if (s.reached_route_end) {
    out.r = 1.0;
    out.terminated = true;
    return out;
  }

  double r_speed = 1.0 - std::abs(s.speed - v_target) / cfg.speed_norm;
  double r_travel = s.meters_traveled;
  double p_deviation = -s.route_distance / cfg.deviation_norm;
  // steering smoothness: negative absolute steering change per step
  double c_steer = -std::abs(s.steer - s.prev_steer);
  out.r = cfg.w_speed * r_speed + cfg.w_travel * r_travel + cfg.w_deviation * p_deviation +
          cfg.w_steer * c_steer;
  return out;
}

}  // namespace planrl

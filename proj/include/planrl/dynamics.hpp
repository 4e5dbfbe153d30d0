#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "planrl/geometry.hpp"

namespace planrl {

/// Kinematic bicycle state. Speed is longitudinal and never negative
/// (reverse driving is clipped away).
struct EgoState {
  double x = 0.0, y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  double accel = 0.0;       // realized longitudinal acceleration
  double steer = 0.0;       // current steering angle
  double steer_rate = 0.0;
  double yaw_rate = 0.0;
  double accel_lat = 0.0;
  double wheelbase = 2.7;

  Vec2 position() const { return {x, y}; }
};

/// Policy action, both components in [-1, 1]. Throttle and brake share one
/// axis; positive means accelerate.
struct Action {
  double accel_brake = 0.0;
  double steer_cmd = 0.0;
};

struct ActionLimits {
  double accel_lo = -3.2;       // m/s^2
  double accel_hi = 2.4;        // m/s^2
  double steer_max = 0.84;      // rad
  double steer_rate_max = 1.2;  // rad/s

  static ActionLimits nuplan() { return {-3.2, 2.4, 0.84, 1.2}; }
  // same acceleration-interface model with wider bounds stands in for the
  // throttle/brake vehicle
  static ActionLimits carla() { return {-8.0, 4.0, 1.22, 1.6}; }
};

/// Affine map from the [-1, 1]^2 action to physical targets.
inline std::pair<double, double> map_action(const Action& a, const ActionLimits& lim) {
  double accel = lim.accel_lo + (a.accel_brake + 1.0) / 2.0 * (lim.accel_hi - lim.accel_lo);
  double steer_target = a.steer_cmd * lim.steer_max;
  return {accel, steer_target};
}

/// Discrete-time derivative converting a steering-angle target into a
/// rate-limited steering rate.
inline double steer_rate_from_target(double current_steer, double steer_target, double dt,
                                     const ActionLimits& lim) {
  double rate = (steer_target - current_steer) / dt;
  return std::clamp(rate, -lim.steer_rate_max, lim.steer_rate_max);
}

/// Explicit-Euler kinematic bicycle step. Position and heading advance with
/// the pre-step speed and steering; speed clamps at zero.
inline EgoState step_bicycle(const EgoState& s, double accel, double steer_rate, double dt,
                             double steer_max = 1e9) {
  EgoState n = s;
  n.x = s.x + s.v * std::cos(s.yaw) * dt;
  n.y = s.y + s.v * std::sin(s.yaw) * dt;
  n.yaw = wrap_angle(s.yaw + s.v * std::tan(s.steer) / s.wheelbase * dt);
  n.steer = std::clamp(s.steer + steer_rate * dt, -steer_max, steer_max);
  n.steer_rate = steer_rate;
  n.v = std::max(0.0, s.v + accel * dt);
  n.accel = (n.v - s.v) / dt;  // realized, differs from command at the v=0 clamp
  n.yaw_rate = n.v * std::tan(n.steer) / n.wheelbase;
  n.accel_lat = n.v * n.v * std::tan(n.steer) / n.wheelbase;
  return n;
}

// ---------------------------------------------------------------------------
// Comfort metrics (6): longitudinal/lateral acceleration, absolute and
// longitudinal jerk, yaw rate, yaw acceleration. Jerk terms come from first
// differences of the sampled accelerations.
// ---------------------------------------------------------------------------

enum class ComfortMetric : int {
  LonAccel = 0,
  LatAccel = 1,
  AbsJerk = 2,
  LonJerk = 3,
  YawRate = 4,
  YawAccel = 5,
};

struct ComfortThresholds {
  // (lo, hi) per metric, indexed by ComfortMetric
  std::array<std::pair<double, double>, 6> bounds;

  static ComfortThresholds carla() {
    return {{{{-20.0, 10.0}, {-9.0, 9.0}, {-30.0, 30.0}, {-30.0, 30.0}, {-1.0, 1.0}, {-3.0, 3.0}}}};
  }
  static ComfortThresholds nuplan() {
    return {{{{-4.05, 2.40},
              {-4.89, 4.89},
              {-8.37, 8.37},
              {-4.13, 4.13},
              {-0.95, 0.95},
              {-1.93, 1.93}}}};
  }
};

struct ComfortSample {
  double t = 0.0;
  double accel_lon = 0.0;
  double accel_lat = 0.0;
  double yaw_rate = 0.0;
};

struct ComfortWindow {
  ComfortThresholds thresholds = ComfortThresholds::carla();
  size_t capacity = 5;
  std::deque<ComfortSample> samples;

  void push(const ComfortSample& s) {
    samples.push_back(s);
    while (samples.size() > capacity) samples.pop_front();
  }
  void clear() { samples.clear(); }
};

struct ComfortResult {
  std::array<bool, 6> violated{};
  bool sufficient_history = false;

  int count() const {
    int c = 0;
    for (bool b : violated) c += b ? 1 : 0;
    return c;
  }
};

inline ComfortResult comfort_violations(const ComfortWindow& w) {
  ComfortResult res;
  if (w.samples.size() < 3) return res;  // jerk needs two acceleration diffs
  res.sufficient_history = true;
  const ComfortSample& cur = w.samples.back();
  const ComfortSample& prev = w.samples[w.samples.size() - 2];
  double dt = cur.t - prev.t;
  if (dt <= 0.0) return res;

  double jerk_lon = (cur.accel_lon - prev.accel_lon) / dt;
  double jerk_lat = (cur.accel_lat - prev.accel_lat) / dt;
  double jerk_abs = std::hypot(jerk_lon, jerk_lat);
  double yaw_accel = (cur.yaw_rate - prev.yaw_rate) / dt;

  const std::array<double, 6> value = {cur.accel_lon, cur.accel_lat, jerk_abs,
                                       jerk_lon,      cur.yaw_rate,  yaw_accel};
  for (int i = 0; i < 6; ++i) {
    auto [lo, hi] = w.thresholds.bounds[i];
    res.violated[i] = value[i] < lo || value[i] > hi;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Time-to-collision check: constant-speed forecasts, oriented-bounding-box
// overlap at 5 samples over 1 second.
// ---------------------------------------------------------------------------

struct ForecastAgent {
  Vec2 position;
  double yaw = 0.0;
  double speed = 0.0;
  Vec2 extent{2.0, 1.0};  // half length / half width
};

inline Obb agent_obb(const ForecastAgent& a) {
  return Obb{a.position, a.yaw, a.extent.x, a.extent.y};
}

inline Vec2 forecast_agent_position(const ForecastAgent& a, double t) {
  return a.position + Vec2{std::cos(a.yaw), std::sin(a.yaw)} * (a.speed * t);
}

/// Ego forecast holds speed and steering and integrates the bicycle with
/// fine substeps; overlap is checked at the 5 forecast sample times. Agents
/// translate at constant speed along their heading.
inline bool ttc_violated(const EgoState& ego, const std::vector<ForecastAgent>& agents,
                         const Vec2& ego_extent, double dt_forecast = 0.2, int steps = 5) {
  if (agents.empty()) return false;
  EgoState ef = ego;
  constexpr int kSubsteps = 40;  // fine integration keeps curved paths accurate
  for (int k = 1; k <= steps; ++k) {
    double t = k * dt_forecast;
    for (int sub = 0; sub < kSubsteps; ++sub)
      ef = step_bicycle(ef, 0.0, 0.0, dt_forecast / kSubsteps);
    Obb ego_box{{ef.x, ef.y}, ef.yaw, ego_extent.x, ego_extent.y};
    for (const ForecastAgent& a : agents) {
      ForecastAgent fa = a;
      fa.position = forecast_agent_position(a, t);
      if (obb_overlap(ego_box, agent_obb(fa))) return true;
    }
  }
  return false;
}

}  // namespace planrl

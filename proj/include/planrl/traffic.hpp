#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "planrl/dynamics.hpp"
#include "planrl/geometry.hpp"
#include "planrl/rng.hpp"
#include "planrl/worldmap.hpp"

namespace planrl {

enum class AgentKind { Vehicle, Pedestrian, Static };

inline std::string to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Vehicle: return "vehicle";
    case AgentKind::Pedestrian: return "pedestrian";
    case AgentKind::Static: return "static";
  }
  return "?";
}

inline AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "vehicle") return AgentKind::Vehicle;
  if (s == "pedestrian") return AgentKind::Pedestrian;
  if (s == "static") return AgentKind::Static;
  throw std::runtime_error("unknown agent kind: " + s);
}

struct AgentState {
  int id = 0;
  AgentKind kind = AgentKind::Vehicle;
  double x = 0.0, y = 0.0, yaw = 0.0;
  double speed = 0.0;
  Vec2 extent{2.3, 1.0};  // half length, half width
  std::optional<int> lane_id;

  Vec2 position() const { return {x, y}; }
  Obb obb() const { return {{x, y}, yaw, extent.x, extent.y}; }
  ForecastAgent forecast() const { return {{x, y}, yaw, speed, extent}; }
};

enum class TrafficMode { Replay, Reactive };

// ---------------------------------------------------------------------------
// Intelligent driver model
// ---------------------------------------------------------------------------

struct IdmParams {
  double v0 = 13.9;    // desired speed, usually the lane speed limit
  double s0 = 2.0;     // jam distance
  double T = 1.5;      // time headway
  double a_max = 1.5;  // max accel
  double b = 2.0;      // comfortable decel (in s*)
  double b_max = 4.0;  // clamp for emergency braking
};

/// IDM car-following acceleration for gap > 0; a non-positive gap means the
/// follower already overlaps its leader and commands the hardest brake.
inline double idm_accel(double v, double v_lead, double gap, const IdmParams& p) {
  if (gap <= 0.0) return -p.b_max;
  double s_star = p.s0 + v * p.T + v * (v - v_lead) / (2.0 * std::sqrt(p.a_max * p.b));
  double ratio_v = p.v0 > 0.0 ? v / p.v0 : 1.0;
  double a = p.a_max * (1.0 - std::pow(ratio_v, 4.0) - (s_star / gap) * (s_star / gap));
  return std::clamp(a, -p.b_max, p.a_max);
}

// ---------------------------------------------------------------------------
// Log-replay scripts: per-agent keyframes (t, x, y, yaw, speed) linearly
// interpolated; poses hold beyond the script horizon.
// ---------------------------------------------------------------------------

struct ScriptKeyframe {
  double t = 0.0;
  double x = 0.0, y = 0.0, yaw = 0.0, speed = 0.0;
};

struct AgentScript {
  int id = 0;
  AgentKind kind = AgentKind::Vehicle;
  Vec2 extent{2.3, 1.0};
  std::vector<ScriptKeyframe> keys;  // sorted by t
};

inline AgentState replay_agent_at(const AgentScript& script, double t) {
  AgentState a;
  a.id = script.id;
  a.kind = script.kind;
  a.extent = script.extent;
  const auto& keys = script.keys;
  if (keys.empty()) throw std::runtime_error("agent script without keyframes");
  if (t <= keys.front().t) {
    const auto& k = keys.front();
    a.x = k.x; a.y = k.y; a.yaw = k.yaw; a.speed = k.speed;
    return a;
  }
  if (t >= keys.back().t) {
    const auto& k = keys.back();
    a.x = k.x; a.y = k.y; a.yaw = k.yaw;
    // exactly on the final keyframe keeps its speed; beyond it the pose holds
    a.speed = (t == keys.back().t) ? k.speed : 0.0;
    return a;
  }
  size_t i = 0;
  while (i + 2 < keys.size() && keys[i + 1].t <= t) ++i;
  const auto& k0 = keys[i];
  const auto& k1 = keys[i + 1];
  double u = (t - k0.t) / (k1.t - k0.t);
  a.x = k0.x + (k1.x - k0.x) * u;
  a.y = k0.y + (k1.y - k0.y) * u;
  a.yaw = wrap_angle(k0.yaw + wrap_angle(k1.yaw - k0.yaw) * u);
  a.speed = k0.speed + (k1.speed - k0.speed) * u;
  return a;
}

inline std::vector<AgentState> replay_step(const std::vector<AgentScript>& scripts, double t) {
  std::vector<AgentState> out;
  out.reserve(scripts.size());
  for (const auto& s : scripts) out.push_back(replay_agent_at(s, t));
  return out;
}

/// Straight segment of length speed * horizon along the heading.
inline std::vector<Vec2> constant_velocity_forecast(const AgentState& agent, double horizon) {
  Vec2 p0 = agent.position();
  Vec2 p1 = forecast_agent_position(agent.forecast(), horizon);
  return {p0, p1};
}

// script (de)serialization -- structured text listing per-agent keyframes
inline nlohmann::json scripts_to_json(const std::vector<AgentScript>& scripts) {
  nlohmann::json doc;
  doc["agents"] = nlohmann::json::array();
  for (const auto& s : scripts) {
    nlohmann::json ja;
    ja["id"] = s.id;
    ja["kind"] = to_string(s.kind);
    ja["extent"] = {s.extent.x, s.extent.y};
    ja["keys"] = nlohmann::json::array();
    for (const auto& k : s.keys) ja["keys"].push_back({k.t, k.x, k.y, k.yaw, k.speed});
    doc["agents"].push_back(std::move(ja));
  }
  return doc;
}

inline std::vector<AgentScript> scripts_from_json(const nlohmann::json& doc) {
  std::vector<AgentScript> out;
  if (!doc.contains("agents")) return out;
  for (const auto& ja : doc["agents"]) {
    AgentScript s;
    s.id = ja.value("id", static_cast<int>(out.size()));
    s.kind = agent_kind_from_string(ja.value("kind", std::string("vehicle")));
    if (ja.contains("extent")) s.extent = {ja["extent"][0], ja["extent"][1]};
    for (const auto& jk : ja.at("keys"))
      s.keys.push_back({jk[0], jk[1], jk[2], jk[3], jk[4]});
    std::sort(s.keys.begin(), s.keys.end(),
              [](const ScriptKeyframe& a, const ScriptKeyframe& b) { return a.t < b.t; });
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Traffic simulation: replay scripts or reactive IDM lane followers. Each
// environment owns one TrafficSim; nothing is shared across environments.
// ---------------------------------------------------------------------------

struct ReactiveVehicle {
  int id = 0;
  int lane_id = 0;
  double s = 0.0;  // arc position on lane
  double v = 0.0;
  Vec2 extent{2.3, 1.0};
  IdmParams idm;
};

class TrafficSim {
 public:
  TrafficSim() = default;

  void init_replay(std::vector<AgentScript> scripts) {
    mode_ = TrafficMode::Replay;
    scripts_ = std::move(scripts);
    reactive_.clear();
    t_ = 0.0;
  }

  void init_reactive(const MapGraph* map, std::vector<ReactiveVehicle> vehicles,
                     RngStream rng) {
    mode_ = TrafficMode::Reactive;
    map_ = map;
    reactive_ = std::move(vehicles);
    scripts_.clear();
    rng_ = rng;
    t_ = 0.0;
  }

  TrafficMode mode() const { return mode_; }
  double time() const { return t_; }

  void step(double dt) {
    t_ += dt;
    if (mode_ != TrafficMode::Reactive || map_ == nullptr) return;
    // order by arc position per lane chain so followers react to leaders
    std::vector<AgentState> snapshot = agents();
    for (size_t i = 0; i < reactive_.size(); ++i) {
      ReactiveVehicle& veh = reactive_[i];
      const Lane* lane = &map_->lane(veh.lane_id);
      auto [lead_gap, lead_v] = lead_info(i, snapshot);
      IdmParams p = veh.idm;
      p.v0 = std::min(p.v0, lane->speed_limit);
      double a = idm_accel(veh.v, lead_v, lead_gap, p);
      veh.v = std::max(0.0, veh.v + a * dt);
      veh.s += veh.v * dt;
      while (veh.s > lane->length() && !lane->successors.empty()) {
        int next = lane->successors[rng_.next_below(lane->successors.size())];
        veh.s -= lane->length();
        veh.lane_id = next;
        lane = &map_->lane(next);
      }
      veh.s = std::min(veh.s, lane->length());
    }
  }

  std::vector<AgentState> agents() const {
    if (mode_ == TrafficMode::Replay) return replay_step(scripts_, t_);
    std::vector<AgentState> out;
    out.reserve(reactive_.size());
    for (const ReactiveVehicle& veh : reactive_) {
      const Lane& lane = map_->lane(veh.lane_id);
      AgentState a;
      a.id = veh.id;
      a.kind = AgentKind::Vehicle;
      Vec2 p = lane.point_at(veh.s);
      a.x = p.x;
      a.y = p.y;
      a.yaw = lane.heading_at(veh.s);
      a.speed = veh.v;
      a.extent = veh.extent;
      a.lane_id = veh.lane_id;
      out.push_back(a);
    }
    return out;
  }

 private:
  /// Gap (bumper to bumper) and speed of the nearest agent ahead on the same
  /// lane; a huge free gap when the road ahead is clear. Ring lanes (lanes
  /// succeeding themselves) wrap the arc distance.
  std::pair<double, double> lead_info(size_t self, const std::vector<AgentState>& all) const {
    const ReactiveVehicle& me = reactive_[self];
    const Lane& lane = map_->lane(me.lane_id);
    bool ring = std::find(lane.successors.begin(), lane.successors.end(), me.lane_id) !=
                lane.successors.end();
    double best_gap = 1e9, best_v = 0.0;
    for (size_t j = 0; j < all.size(); ++j) {
      if (j == self) continue;
      const AgentState& other = all[j];
      if (!other.lane_id || *other.lane_id != me.lane_id) continue;
      const ReactiveVehicle& ov = reactive_[j];
      double ds = ov.s - me.s;
      if (ring && ds <= 0.0) ds += lane.length();
      if (ds <= 0.0) continue;
      double gap = ds - me.extent.x - other.extent.x;
      if (gap < best_gap) {
        best_gap = gap;
        best_v = other.speed;
      }
    }
    return {best_gap, best_v};
  }

  TrafficMode mode_ = TrafficMode::Replay;
  const MapGraph* map_ = nullptr;
  std::vector<AgentScript> scripts_;
  std::vector<ReactiveVehicle> reactive_;
  RngStream rng_;
  double t_ = 0.0;
};

// ---------------------------------------------------------------------------
// Scenario script builders covering the failure archetypes: a lead vehicle
// braking hard, a red-light runner crossing, and a crossing pedestrian.
// Scripts are laid out relative to a route.
// ---------------------------------------------------------------------------

namespace scenarios {

/// Lead vehicle ahead of the spawn that cruises, brakes to a stop, waits and
/// drives off. Positioned `ahead_m` down the route from its start.
inline AgentScript lead_vehicle_brake(const Route& route, double ahead_m = 25.0,
                                      double cruise_v = 8.0, double brake_t = 5.0,
                                      double stop_hold = 4.0) {
  AgentScript s;
  s.id = 100;
  s.kind = AgentKind::Vehicle;
  s.extent = {2.3, 1.0};
  auto pose_at = [&](double arc) {
    size_t k = std::min(static_cast<size_t>(std::max(0.0, arc / kRouteSpacing)),
                        route.dense_path.size() - 2);
    Vec2 p = route.dense_path[k];
    Vec2 d = route.dense_path[k + 1] - route.dense_path[k];
    return std::make_pair(p, std::atan2(d.y, d.x));
  };
  double arc = ahead_m;
  double t = 0.0;
  auto push = [&](double speed) {
    auto [p, yaw] = pose_at(arc);
    s.keys.push_back({t, p.x, p.y, yaw, speed});
  };
  push(cruise_v);
  // cruise
  arc += cruise_v * brake_t;
  t += brake_t;
  push(cruise_v);
  // brake to rest over 2 s
  arc += cruise_v / 2.0 * 2.0;
  t += 2.0;
  push(0.0);
  // hold
  t += stop_hold;
  push(0.0);
  // accelerate away and leave the scene
  double resume_v = cruise_v * 1.25;
  arc += resume_v / 2.0 * 4.0;
  t += 4.0;
  push(resume_v);
  double remaining = route.total_length + 60.0 - arc;
  if (remaining > 0.0) {
    arc += remaining;
    t += remaining / resume_v;
    push(resume_v);
  }
  return s;
}

/// A vehicle crossing the ego path at `cross_arc` meters along the route,
/// timed to arrive there at `cross_time` seconds.
inline AgentScript red_light_runner(const Route& route, double cross_arc, double cross_time,
                                    double speed = 10.0) {
  size_t k = std::min(static_cast<size_t>(cross_arc / kRouteSpacing),
                      route.dense_path.size() - 2);
  Vec2 p = route.dense_path[k];
  Vec2 d = (route.dense_path[k + 1] - route.dense_path[k]).normalized();
  Vec2 perp = d.perp();
  double yaw = std::atan2(-perp.y, -perp.x);  // crossing from the left
  double lead_in = 40.0;
  AgentScript s;
  s.id = 101;
  s.kind = AgentKind::Vehicle;
  s.extent = {2.3, 1.0};
  Vec2 start = p + perp * lead_in;
  double t0 = cross_time - lead_in / speed;
  Vec2 end = p - perp * lead_in;
  s.keys.push_back({t0, start.x, start.y, yaw, speed});
  s.keys.push_back({cross_time + lead_in / speed, end.x, end.y, yaw, speed});
  return s;
}

/// Pedestrian stepping across the lane at `cross_arc`, walking speed.
inline AgentScript crossing_pedestrian(const Route& route, double cross_arc, double cross_time,
                                       double speed = 1.5) {
  AgentScript s = red_light_runner(route, cross_arc, cross_time, speed);
  s.id = 102;
  s.kind = AgentKind::Pedestrian;
  s.extent = {0.4, 0.4};
  return s;
}

}  // namespace scenarios

}  // namespace planrl

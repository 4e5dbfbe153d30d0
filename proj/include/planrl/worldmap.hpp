#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "planrl/geometry.hpp"
#include "planrl/rng.hpp"

namespace planrl {

struct MapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LightPhase { Green, Yellow, Red };

struct TrafficLightDef {
  int id = 0;
  Vec2 stop_a, stop_b;          // stop line segment
  double green_s = 8.0, yellow_s = 2.0, red_s = 10.0;
  double offset_s = 0.0;        // phase offset at t = 0
  std::vector<int> lane_ids;    // lanes gated by this light

  LightPhase phase_at(double t) const {
    double cycle = green_s + yellow_s + red_s;
    double u = std::fmod(t + offset_s, cycle);
    if (u < 0.0) u += cycle;
    if (u < green_s) return LightPhase::Green;
    if (u < green_s + yellow_s) return LightPhase::Yellow;
    return LightPhase::Red;
  }
};

struct StopSignDef {
  int id = 0;
  Polygon trigger;
  std::vector<int> lane_ids;
};

struct Lane {
  int id = 0;
  std::vector<Vec2> centerline;  // >= 2 points, consecutive points <= 2 m apart
  double width = 3.5;
  double speed_limit = 13.89;    // m/s
  std::vector<int> successors;
  std::optional<int> left_neighbor;
  std::optional<int> right_neighbor;
  bool in_intersection = false;
  int direction_group = 0;

  // derived
  std::vector<double> cum_s;

  double length() const { return cum_s.empty() ? 0.0 : cum_s.back(); }

  void finalize() { cum_s = cumulative_arclength(centerline); }

  /// Arc position and signed lateral offset (left positive) of the nearest
  /// centerline segment.
  std::pair<double, double> project(const Vec2& p) const {
    double best_d2 = 1e300, best_s = 0.0, best_lat = 0.0;
    for (size_t i = 0; i + 1 < centerline.size(); ++i) {
      Vec2 a = centerline[i], b = centerline[i + 1];
      Vec2 ab = b - a;
      double len2 = ab.squared_norm();
      double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      Vec2 c = a + ab * u;
      double d2 = (p - c).squared_norm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best_s = cum_s[i] + std::sqrt(len2) * u;
        Vec2 tang = ab.normalized();
        best_lat = tang.cross(p - c) >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
      }
    }
    return {best_s, best_lat};
  }

  Vec2 point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    size_t i = 0;
    while (i + 2 < cum_s.size() && cum_s[i + 1] < s) ++i;
    double seg = cum_s[i + 1] - cum_s[i];
    double u = seg > 0.0 ? (s - cum_s[i]) / seg : 0.0;
    return centerline[i] + (centerline[i + 1] - centerline[i]) * u;
  }

  double heading_at(double s) const {
    s = std::clamp(s, 0.0, length());
    size_t i = 0;
    while (i + 2 < cum_s.size() && cum_s[i + 1] < s) ++i;
    Vec2 d = centerline[i + 1] - centerline[i];
    return std::atan2(d.y, d.x);
  }
};

struct MapGraph {
  std::vector<Lane> lanes;
  std::vector<Polygon> drivable;
  std::vector<Polygon> sidewalks;
  std::vector<TrafficLightDef> traffic_lights;
  std::vector<StopSignDef> stop_signs;

  std::unordered_map<int, size_t> lane_index;

  const Lane& lane(int id) const {
    auto it = lane_index.find(id);
    if (it == lane_index.end()) throw MapError("unknown lane id " + std::to_string(id));
    return lanes[it->second];
  }

  bool has_lane(int id) const { return lane_index.count(id) > 0; }

  bool point_on_drivable(const Vec2& p) const {
    for (const Polygon& poly : drivable)
      if (point_in_polygon(poly, p)) return true;
    return false;
  }

  bool point_on_sidewalk(const Vec2& p) const {
    for (const Polygon& poly : sidewalks)
      if (point_in_polygon(poly, p)) return true;
    return false;
  }

  /// Nearest lane by centerline distance, or -1 on an empty map.
  int nearest_lane(const Vec2& p) const {
    int best = -1;
    double best_d = 1e300;
    for (const Lane& l : lanes) {
      auto [s, lat] = l.project(p);
      double d = std::abs(lat);
      // prefer lanes whose projection is interior, with distance tie-break
      if (d < best_d) {
        best_d = d;
        best = l.id;
      }
    }
    return best;
  }

  void build_index() {
    lane_index.clear();
    for (size_t i = 0; i < lanes.size(); ++i) lane_index[lanes[i].id] = i;
  }

  /// Enforces the structural invariants. Throws MapError on violation.
  void validate() const {
    if (lane_index.size() != lanes.size()) throw MapError("duplicate lane ids");
    for (const Lane& l : lanes) {
      if (l.centerline.size() < 2)
        throw MapError("lane " + std::to_string(l.id) + ": degenerate centerline");
      for (size_t i = 1; i < l.centerline.size(); ++i) {
        double d = (l.centerline[i] - l.centerline[i - 1]).norm();
        if (d > 2.0 + 1e-9)
          throw MapError("lane " + std::to_string(l.id) + ": centerline gap " +
                         std::to_string(d) + " m exceeds 2 m");
        if (d <= 0.0)
          throw MapError("lane " + std::to_string(l.id) + ": repeated centerline point");
      }
      if (!(l.width > 0.0)) throw MapError("lane " + std::to_string(l.id) + ": width <= 0");
      if (!(l.speed_limit > 0.0))
        throw MapError("lane " + std::to_string(l.id) + ": speed_limit <= 0");
      for (int s : l.successors)
        if (!has_lane(s))
          throw MapError("lane " + std::to_string(l.id) + ": dangling successor " +
                         std::to_string(s));
      for (const auto& n : {l.left_neighbor, l.right_neighbor})
        if (n && !has_lane(*n))
          throw MapError("lane " + std::to_string(l.id) + ": dangling neighbor " +
                         std::to_string(*n));
    }
    for (const TrafficLightDef& tl : traffic_lights)
      for (int lid : tl.lane_ids)
        if (!has_lane(lid))
          throw MapError("traffic light " + std::to_string(tl.id) + ": dangling lane " +
                         std::to_string(lid));
    for (const StopSignDef& ss : stop_signs)
      for (int lid : ss.lane_ids)
        if (!has_lane(lid))
          throw MapError("stop sign " + std::to_string(ss.id) + ": dangling lane " +
                         std::to_string(lid));
    for (const Lane& l : lanes)
      for (const Vec2& p : l.centerline)
        if (!point_on_drivable(p))
          throw MapError("lane " + std::to_string(l.id) +
                         ": centerline point outside drivable area");
  }
};

// ---------------------------------------------------------------------------
// Map document parsing. The document is JSON with top-level keys `lanes`,
// `drivable`, `sidewalks`, `traffic_lights`, `stop_signs`; coordinates in
// meters as doubles. See docs/map_format.md for the schema.
// ---------------------------------------------------------------------------

namespace detail {
inline Vec2 parse_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw MapError(where + ": expected [x, y] point");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<Vec2> parse_points(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw MapError(where + ": expected point array");
  std::vector<Vec2> out;
  out.reserve(j.size());
  for (const auto& p : j) out.push_back(parse_point(p, where));
  return out;
}
}  // namespace detail

inline MapGraph build_map(const nlohmann::json& doc) {
  if (!doc.is_object()) throw MapError("map document: expected object");
  MapGraph map;
  if (!doc.contains("lanes") || !doc["lanes"].is_array())
    throw MapError("map document: missing `lanes` array");
  for (const auto& jl : doc["lanes"]) {
    Lane lane;
    if (!jl.contains("id")) throw MapError("lane: missing id");
    lane.id = jl["id"].get<int>();
    std::string where = "lane " + std::to_string(lane.id);
    lane.centerline = detail::parse_points(jl.at("centerline"), where);
    lane.width = jl.value("width", 3.5);
    lane.speed_limit = jl.value("speed_limit", 13.89);
    if (jl.contains("successors"))
      lane.successors = jl["successors"].get<std::vector<int>>();
    if (jl.contains("left") && !jl["left"].is_null()) lane.left_neighbor = jl["left"].get<int>();
    if (jl.contains("right") && !jl["right"].is_null())
      lane.right_neighbor = jl["right"].get<int>();
    lane.in_intersection = jl.value("intersection", false);
    lane.direction_group = jl.value("direction_group", 0);
    lane.finalize();
    map.lanes.push_back(std::move(lane));
  }
  auto parse_polys = [](const nlohmann::json& j, const std::string& where) {
    std::vector<Polygon> out;
    if (j.is_null()) return out;
    if (!j.is_array()) throw MapError(where + ": expected polygon array");
    for (const auto& jp : j) {
      Polygon poly = detail::parse_points(jp, where);
      if (poly.size() < 3) throw MapError(where + ": polygon needs >= 3 points");
      out.push_back(std::move(poly));
    }
    return out;
  };
  map.drivable = parse_polys(doc.value("drivable", nlohmann::json::array()), "drivable");
  map.sidewalks = parse_polys(doc.value("sidewalks", nlohmann::json::array()), "sidewalks");
  if (doc.contains("traffic_lights")) {
    for (const auto& jt : doc["traffic_lights"]) {
      TrafficLightDef tl;
      tl.id = jt.value("id", static_cast<int>(map.traffic_lights.size()));
      auto line = detail::parse_points(jt.at("stop_line"), "traffic light stop_line");
      if (line.size() != 2) throw MapError("traffic light stop_line: expected 2 points");
      tl.stop_a = line[0];
      tl.stop_b = line[1];
      if (jt.contains("phases")) {
        const auto& ph = jt["phases"];
        tl.green_s = ph.value("green", tl.green_s);
        tl.yellow_s = ph.value("yellow", tl.yellow_s);
        tl.red_s = ph.value("red", tl.red_s);
        tl.offset_s = ph.value("offset", tl.offset_s);
      }
      if (jt.contains("lanes")) tl.lane_ids = jt["lanes"].get<std::vector<int>>();
      map.traffic_lights.push_back(std::move(tl));
    }
  }
  if (doc.contains("stop_signs")) {
    for (const auto& js : doc["stop_signs"]) {
      StopSignDef ss;
      ss.id = js.value("id", static_cast<int>(map.stop_signs.size()));
      ss.trigger = detail::parse_points(js.at("trigger"), "stop sign trigger");
      if (ss.trigger.size() < 3) throw MapError("stop sign trigger: polygon needs >= 3 points");
      if (js.contains("lanes")) ss.lane_ids = js["lanes"].get<std::vector<int>>();
      map.stop_signs.push_back(std::move(ss));
    }
  }
  map.build_index();
  map.validate();
  return map;
}

inline MapGraph build_map(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw MapError(std::string("map document parse error: ") + e.what());
  }
  return build_map(doc);
}

inline MapGraph build_map(const char* text) { return build_map(std::string(text)); }

// ---------------------------------------------------------------------------
// Route
// ---------------------------------------------------------------------------

constexpr double kRouteSpacing = 1.0;  // m between dense path points

struct Route {
  std::vector<int> lane_sequence;
  std::vector<Vec2> dense_path;  // 1 m arc-length spacing
  double total_length = 0.0;     // == (dense_path.size() - 1) * kRouteSpacing
  double best_progress_s = 0.0;  // monotone high-water mark, per episode

  double path_s(size_t k) const { return static_cast<double>(k) * kRouteSpacing; }

  Vec2 start() const { return dense_path.front(); }
  double start_heading() const {
    Vec2 d = dense_path[1] - dense_path[0];
    return std::atan2(d.y, d.x);
  }
};

/// Nearest-vertex projection: returns (s, signed lateral offset, left
/// positive). Ties resolve to the smaller s. Accurate to half the 1 m path
/// spacing by construction.
inline std::pair<double, double> project_to_route(const Route& route, const Vec2& p) {
  const auto& pts = route.dense_path;
  size_t best = 0;
  double best_d2 = 1e300;
  for (size_t k = 0; k < pts.size(); ++k) {
    double d2 = (p - pts[k]).squared_norm();
    if (d2 < best_d2 - 1e-12) {  // strict improvement keeps the smaller s on ties
      best_d2 = d2;
      best = k;
    }
  }
  size_t a = best, b = best + 1;
  if (b >= pts.size()) {
    a = best - 1;
    b = best;
  }
  Vec2 tang = (pts[b] - pts[a]).normalized();
  double lat = tang.cross(p - pts[best]);
  return {route.path_s(best), lat};
}

/// Route-completion increment in percent. Progress below the best mark so far
/// (backing up) counts as zero; the mark never decreases within an episode.
inline double route_completion_delta(Route& route, const Vec2& new_position) {
  auto [s, lat] = project_to_route(route, new_position);
  double gained = std::max(0.0, s - route.best_progress_s);
  route.best_progress_s = std::max(route.best_progress_s, s);
  return gained / route.total_length * 100.0;
}

// ---------------------------------------------------------------------------
// Route generation: walk the lane graph in 1 m increments, choose successors
// uniformly at lane ends, change lanes with a fixed probability per decision
// point outside intersections, and reject invalid attempts.
// ---------------------------------------------------------------------------

struct RouteGenStats {
  int attempts = 0;
  int decision_points = 0;
  int lane_changes = 0;
};

struct RouteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Route generate_route(const MapGraph& map, RngStream& rng, double target_length,
                            double lane_change_prob = 0.1, RouteGenStats* stats = nullptr,
                            int retry_budget = 100) {
  if (map.lanes.empty()) throw RouteError("route generation: empty map");
  if (!(target_length > 0.0)) throw RouteError("route generation: target_length <= 0");

  RouteGenStats local;
  RouteGenStats& st = stats ? *stats : local;

  for (int attempt = 0; attempt < retry_budget; ++attempt) {
    ++st.attempts;
    const Lane* lane = &map.lanes[rng.next_below(map.lanes.size())];
    double s = std::floor(rng.uniform(0.0, std::max(0.0, lane->length() - 1.0)));

    std::vector<Vec2> waypoints;
    std::vector<int> lane_seq{lane->id};
    waypoints.push_back(lane->point_at(s));

    double poly_len = 0.0;  // true arc length of the waypoint polyline
    const Lane* blend_target = nullptr;
    double blend_total = 0.0, blend_done = 0.0;
    bool dead_end = false;

    // walk one spacing past the target so the floor after resampling still
    // reaches target_length; keeps total_length within [target, target + 2]
    while (poly_len < target_length + kRouteSpacing) {
      double step = kRouteSpacing;
      if (s + step > lane->length() + 1e-9) {
        if (lane->successors.empty()) {
          dead_end = true;
          break;
        }
        int next_id = lane->successors[rng.next_below(lane->successors.size())];
        double carry = s + step - lane->length();
        lane = &map.lane(next_id);
        lane_seq.push_back(lane->id);
        s = std::min(carry, lane->length());
        blend_target = nullptr;
      } else {
        s += step;
      }

      Vec2 base = lane->point_at(s);
      Vec2 pos = base;

      if (blend_target) {
        blend_done += step;
        double frac = std::min(1.0, blend_done / blend_total);
        // smoothstep lateral ramp keeps dense spacing within 1 cm of 1 m
        double sm = frac * frac * (3.0 - 2.0 * frac);
        auto [ts, tlat] = blend_target->project(base);
        Vec2 tgt = blend_target->point_at(ts);
        pos = base + (tgt - base) * sm;
        if (frac >= 1.0) {
          lane = blend_target;
          lane_seq.push_back(lane->id);
          auto [ns, nlat] = lane->project(pos);
          s = ns;
          blend_target = nullptr;
        }
      } else if (!lane->in_intersection && lane_change_prob > 0.0) {
        std::vector<int> options;
        if (lane->left_neighbor) options.push_back(*lane->left_neighbor);
        if (lane->right_neighbor) options.push_back(*lane->right_neighbor);
        // a decision point is a 1 m step outside intersections with a neighbor
        if (!options.empty()) {
          ++st.decision_points;
          if (rng.bernoulli(lane_change_prob)) {
            ++st.lane_changes;
            const Lane& tgt = map.lane(options[rng.next_below(options.size())]);
            auto [ts, tlat] = tgt.project(pos);
            double lateral = (tgt.point_at(ts) - pos).norm();
            double blen = std::max(10.0, 4.0 * lateral);
            // both lanes need room ahead so blends never cross lane ends
            if (tgt.length() - ts > blen + 2.0 && lane->length() - s > blen + 2.0) {
              blend_target = &tgt;
              blend_total = blen;
              blend_done = 0.0;
            }
          }
        }
      }

      poly_len += (pos - waypoints.back()).norm();
      waypoints.push_back(pos);
    }

    if (dead_end && poly_len < target_length + kRouteSpacing) continue;  // reject, resample

    Route route;
    route.dense_path = resample_polyline(waypoints, kRouteSpacing);
    if (route.dense_path.size() < 2) continue;
    route.total_length = (route.dense_path.size() - 1) * kRouteSpacing;
    if (route.total_length < target_length) continue;
    route.lane_sequence = std::move(lane_seq);
    route.best_progress_s = 0.0;

    // spawn check: route start must lie on the drivable area
    if (!map.point_on_drivable(route.dense_path.front())) continue;
    return route;
  }
  throw RouteError("route generation: no valid route after " + std::to_string(retry_budget) +
                   " attempts (map too small?)");
}

}  // namespace planrl

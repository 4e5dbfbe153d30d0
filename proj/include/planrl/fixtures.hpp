#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "planrl/geometry.hpp"
#include "planrl/worldmap.hpp"

namespace planrl::fixtures {

// Synthetic maps used for training, evaluation and tests. All geometry is
// tangent-continuous so dense route paths keep their 1 m spacing.

inline std::vector<Vec2> sampled_segment(Vec2 a, Vec2 b, double max_step = 2.0) {
  double len = (b - a).norm();
  int n = std::max(1, static_cast<int>(std::ceil(len / max_step)));
  std::vector<Vec2> pts;
  pts.reserve(n + 1);
  for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return pts;
}

inline std::vector<Vec2> sampled_arc(Vec2 center, double radius, double theta0, double theta1,
                                     double max_step = 1.5) {
  double arc = std::abs(theta1 - theta0) * radius;
  int n = std::max(2, static_cast<int>(std::ceil(arc / max_step)));
  std::vector<Vec2> pts;
  pts.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    double th = theta0 + (theta1 - theta0) * (static_cast<double>(i) / n);
    pts.push_back(center + Vec2{radius * std::cos(th), radius * std::sin(th)});
  }
  return pts;
}

inline Polygon rect(double x0, double y0, double x1, double y1) {
  return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

/// Straight road along +x. `lanes_per_dir` same-direction lanes on the right
/// half (y < 0, heading +x, direction_group 0); if `two_way`, mirrored lanes
/// on the left half heading -x (direction_group 1). Lane k (k = 0 innermost)
/// sits at y = -(k + 0.5) * width.
inline MapGraph straight_road(double length, int lanes_per_dir = 1, bool two_way = false,
                              double lane_width = 3.5, double speed_limit = 13.89,
                              double shoulder = 1.0) {
  MapGraph map;
  int id = 0;
  for (int k = 0; k < lanes_per_dir; ++k) {
    Lane lane;
    lane.id = id++;
    double y = -(k + 0.5) * lane_width;
    lane.centerline = sampled_segment({0.0, y}, {length, y});
    lane.width = lane_width;
    lane.speed_limit = speed_limit;
    lane.direction_group = 0;
    if (k + 1 < lanes_per_dir) lane.right_neighbor = k + 1;  // further from center
    if (k > 0) lane.left_neighbor = k - 1;
    lane.finalize();
    map.lanes.push_back(std::move(lane));
  }
  if (two_way) {
    for (int k = 0; k < lanes_per_dir; ++k) {
      Lane lane;
      lane.id = id++;
      double y = (k + 0.5) * lane_width;
      lane.centerline = sampled_segment({length, y}, {0.0, y});
      lane.width = lane_width;
      lane.speed_limit = speed_limit;
      lane.direction_group = 1;
      if (k + 1 < lanes_per_dir) lane.right_neighbor = lanes_per_dir + k + 1;
      if (k > 0) lane.left_neighbor = lanes_per_dir + k - 1;
      lane.finalize();
      map.lanes.push_back(std::move(lane));
    }
  }
  double y_min = -lanes_per_dir * lane_width - shoulder;
  double y_max = two_way ? lanes_per_dir * lane_width + shoulder : shoulder;
  map.drivable.push_back(rect(-5.0, y_min, length + 5.0, y_max));
  map.sidewalks.push_back(rect(-5.0, y_min - 2.0, length + 5.0, y_min));
  map.sidewalks.push_back(rect(-5.0, y_max, length + 5.0, y_max + 2.0));
  map.build_index();
  map.validate();
  return map;
}

/// Two concentric counterclockwise ring lanes. Routes on it never dead-end,
/// which makes it the fuzzing workhorse for route generation.
inline MapGraph loop_map(double radius = 60.0, int num_lanes = 2, double lane_width = 3.5,
                         double speed_limit = 13.89) {
  MapGraph map;
  for (int k = 0; k < num_lanes; ++k) {
    Lane lane;
    lane.id = k;
    double r = radius - k * lane_width;
    lane.centerline = sampled_arc({0.0, 0.0}, r, 0.0, 2.0 * M_PI, 1.5);
    lane.centerline.back() = lane.centerline.front();  // close the ring exactly
    lane.width = lane_width;
    lane.speed_limit = speed_limit;
    lane.direction_group = 0;
    lane.successors = {k};  // ring
    if (k > 0) lane.right_neighbor = k - 1;       // outer ring is to the right
    if (k + 1 < num_lanes) lane.left_neighbor = k + 1;
    lane.finalize();
    map.lanes.push_back(std::move(lane));
  }
  // annulus approximated by a polygon ring cut is awkward; use full disc minus
  // nothing: a disc polygon covers all centerlines
  Polygon disc;
  int n = 128;
  double rd = radius + lane_width;
  for (int i = 0; i < n; ++i) {
    double th = 2.0 * M_PI * i / n;
    disc.push_back({rd * std::cos(th), rd * std::sin(th)});
  }
  map.drivable.push_back(disc);
  map.build_index();
  map.validate();
  return map;
}

struct IntersectionFixture {
  MapGraph map;
  Polygon junction;  // the square the in_intersection connectors live in
};

/// Four-way intersection: per road one inbound and one outbound lane, and per
/// inbound lane three connectors (straight, right, left) flagged
/// in_intersection. Built from a west-road template rotated by exact quarter
/// turns. Traffic lights gate every inbound lane; the west/east pair is green
/// while north/south is red and vice versa.
inline IntersectionFixture four_way_intersection(double approach_len = 80.0,
                                                 double lane_width = 3.5,
                                                 double speed_limit = 8.33) {
  IntersectionFixture fx;
  const double half = 10.0;           // junction half extent
  const double off = lane_width / 2;  // 1.75
  MapGraph& map = fx.map;

  // ids: road r in {0=W,1=S,2=E,3=N}; inbound = r, outbound = 4 + r,
  // connectors: 8 + 3r + {0 straight, 1 right, 2 left}
  for (int r = 0; r < 4; ++r) {
    Transform2 tf = Transform2::exact_quarter_turns(r);

    Lane in;
    in.id = r;
    for (Vec2 p : sampled_segment({-half - approach_len, -off}, {-half, -off}))
      in.centerline.push_back(tf.apply(p));
    in.width = lane_width;
    in.speed_limit = speed_limit;
    in.direction_group = r;
    in.successors = {8 + 3 * r + 0, 8 + 3 * r + 1, 8 + 3 * r + 2};
    in.finalize();
    map.lanes.push_back(std::move(in));

    Lane out;
    out.id = 4 + r;
    for (Vec2 p : sampled_segment({half, -off}, {half + approach_len, -off}))
      out.centerline.push_back(tf.apply(p));
    out.width = lane_width;
    out.speed_limit = speed_limit;
    out.direction_group = r;
    out.finalize();
    map.lanes.push_back(std::move(out));
  }
  for (int r = 0; r < 4; ++r) {
    Transform2 tf = Transform2::exact_quarter_turns(r);
    auto add_connector = [&](int sub, const std::vector<Vec2>& pts, int successor) {
      Lane c;
      c.id = 8 + 3 * r + sub;
      for (Vec2 p : pts) c.centerline.push_back(tf.apply(p));
      c.width = lane_width;
      c.speed_limit = speed_limit;
      c.direction_group = r;
      c.in_intersection = true;
      c.successors = {successor};
      c.finalize();
      map.lanes.push_back(std::move(c));
    };
    // outbound lane 4+q is drawn with rotation q and heads rot_q(+x); the
    // straight connector keeps heading r, a right turn exits heading r-1,
    // a left turn heading r+1
    add_connector(0, sampled_segment({-half, -off}, {half, -off}), 4 + r);
    add_connector(1, sampled_arc({-half, -half}, half - off, M_PI / 2, 0.0), 4 + (r + 3) % 4);
    add_connector(2, sampled_arc({-half, half}, half + off, -M_PI / 2, 0.0), 4 + (r + 1) % 4);
  }

  fx.junction = rect(-half, -half, half, half);
  map.drivable.push_back(fx.junction);
  for (int r = 0; r < 4; ++r) {
    Transform2 tf = Transform2::exact_quarter_turns(r);
    Polygon road = rect(-half - approach_len - 5.0, -lane_width - 1.0, -half, lane_width + 1.0);
    Polygon out;
    for (Vec2 p : road) out.push_back(tf.apply(p));
    map.drivable.push_back(out);
    Polygon walk = rect(-half - approach_len - 5.0, -lane_width - 3.0, -half, -lane_width - 1.0);
    Polygon walk_out;
    for (Vec2 p : walk) walk_out.push_back(tf.apply(p));
    map.sidewalks.push_back(walk_out);
  }

  for (int r = 0; r < 4; ++r) {
    Transform2 tf = Transform2::exact_quarter_turns(r);
    TrafficLightDef tl;
    tl.id = r;
    tl.stop_a = tf.apply({-half, -lane_width});
    tl.stop_b = tf.apply({-half, 0.0});
    tl.lane_ids = {r};
    tl.green_s = 8.0;
    tl.yellow_s = 2.0;
    tl.red_s = 10.0;
    tl.offset_s = (r % 2 == 0) ? 0.0 : 10.0;  // opposing pairs alternate
    map.traffic_lights.push_back(tl);
  }

  map.build_index();
  map.validate();
  return fx;
}

/// Straight one-way road with a red-phase-heavy traffic light at `light_x`.
inline MapGraph red_light_road(double length = 200.0, double light_x = 100.0,
                               double green_s = 5.0, double red_s = 60.0) {
  MapGraph map = straight_road(length, 1, false);
  TrafficLightDef tl;
  tl.id = 0;
  tl.stop_a = {light_x, -3.5};
  tl.stop_b = {light_x, 0.0};
  tl.lane_ids = {0};
  tl.green_s = green_s;
  tl.yellow_s = 2.0;
  tl.red_s = red_s;
  tl.offset_s = green_s + 2.0;  // red at t = 0
  map.traffic_lights.push_back(tl);
  map.validate();
  return map;
}

/// Straight one-way road with a stop-sign trigger zone around `sign_x`.
inline MapGraph stop_sign_road(double length = 200.0, double sign_x = 100.0) {
  MapGraph map = straight_road(length, 1, false);
  StopSignDef ss;
  ss.id = 0;
  ss.trigger = rect(sign_x - 4.0, -3.5, sign_x + 4.0, 0.0);
  ss.lane_ids = {0};
  map.stop_signs.push_back(ss);
  map.validate();
  return map;
}

/// Serialize a MapGraph back into the map-description document format.
inline nlohmann::json map_to_json(const MapGraph& map) {
  nlohmann::json doc;
  doc["lanes"] = nlohmann::json::array();
  for (const Lane& l : map.lanes) {
    nlohmann::json jl;
    jl["id"] = l.id;
    jl["centerline"] = nlohmann::json::array();
    for (const Vec2& p : l.centerline) jl["centerline"].push_back({p.x, p.y});
    jl["width"] = l.width;
    jl["speed_limit"] = l.speed_limit;
    jl["successors"] = l.successors;
    if (l.left_neighbor) jl["left"] = *l.left_neighbor;
    if (l.right_neighbor) jl["right"] = *l.right_neighbor;
    jl["intersection"] = l.in_intersection;
    jl["direction_group"] = l.direction_group;
    doc["lanes"].push_back(std::move(jl));
  }
  auto polys_to_json = [](const std::vector<Polygon>& polys) {
    nlohmann::json out = nlohmann::json::array();
    for (const Polygon& poly : polys) {
      nlohmann::json jp = nlohmann::json::array();
      for (const Vec2& p : poly) jp.push_back({p.x, p.y});
      out.push_back(std::move(jp));
    }
    return out;
  };
  doc["drivable"] = polys_to_json(map.drivable);
  doc["sidewalks"] = polys_to_json(map.sidewalks);
  doc["traffic_lights"] = nlohmann::json::array();
  for (const TrafficLightDef& tl : map.traffic_lights) {
    nlohmann::json jt;
    jt["id"] = tl.id;
    jt["stop_line"] = {{tl.stop_a.x, tl.stop_a.y}, {tl.stop_b.x, tl.stop_b.y}};
    jt["phases"] = {{"green", tl.green_s},
                    {"yellow", tl.yellow_s},
                    {"red", tl.red_s},
                    {"offset", tl.offset_s}};
    jt["lanes"] = tl.lane_ids;
    doc["traffic_lights"].push_back(std::move(jt));
  }
  doc["stop_signs"] = nlohmann::json::array();
  for (const StopSignDef& ss : map.stop_signs) {
    nlohmann::json js;
    js["id"] = ss.id;
    js["trigger"] = nlohmann::json::array();
    for (const Vec2& p : ss.trigger) js["trigger"].push_back({p.x, p.y});
    js["lanes"] = ss.lane_ids;
    doc["stop_signs"].push_back(std::move(js));
  }
  return doc;
}

}  // namespace planrl::fixtures

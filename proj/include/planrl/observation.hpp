#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "planrl/dynamics.hpp"
#include "planrl/geometry.hpp"
#include "planrl/reward.hpp"
#include "planrl/traffic.hpp"
#include "planrl/worldmap.hpp"

namespace planrl {

constexpr double kSpeedNorm = 22.2;  // m/s, also the speed-intensity normalizer

enum class BevChannel : int {
  Road = 0,
  Route = 1,
  LaneMarkings = 2,
  Vehicles = 3,
  Pedestrians = 4,
  TrafficLights = 5,
  SpeedSigns = 6,
  StaticObjects = 7,
  Shoulder = 8,
  StopSigns = 9,  // carla profile only
};

struct BevSpec {
  int height = 256;
  int width = 256;
  double pixels_per_meter = 2.0;
  double extent_front = 78.0;
  double extent_back = 50.0;
  double extent_side = 64.0;
  bool stop_sign_channel = true;

  int channels() const { return stop_sign_channel ? 10 : 9; }

  /// 256x256 at 2 px/m covering 78 m ahead, 50 m behind, 64 m to the side.
  static BevSpec paper(bool stop_signs = true) {
    BevSpec s;
    s.stop_sign_channel = stop_signs;
    return s;
  }

  /// Same extents at 1 px/m on a 128x128 grid; the cheap test/training
  /// default.
  static BevSpec desk(bool stop_signs = true) {
    BevSpec s;
    s.height = 128;
    s.width = 128;
    s.pixels_per_meter = 1.0;
    s.stop_sign_channel = stop_signs;
    return s;
  }

  bool valid() const {
    return (extent_front + extent_back) * pixels_per_meter <= height + 1e-9 &&
           2.0 * extent_side * pixels_per_meter <= width + 1e-9;
  }
};

/// Ego-centered multi-channel top-down grid. Values are quantized to 1/255
/// steps and exposed in [0, 1]; up is the ego heading.
struct BevRaster {
  int channels = 0, height = 0, width = 0;
  std::vector<uint8_t> data;

  void init(int c, int h, int w) {
    channels = c;
    height = h;
    width = w;
    data.assign(static_cast<size_t>(c) * h * w, 0);
  }
  size_t index(int c, int r, int col) const {
    return (static_cast<size_t>(c) * height + r) * width + col;
  }
  uint8_t raw(int c, int r, int col) const { return data[index(c, r, col)]; }
  float value(int c, int r, int col) const { return raw(c, r, col) / 255.0f; }
  void stamp(int c, int r, int col, uint8_t v) {
    uint8_t& cell = data[index(c, r, col)];
    cell = std::max(cell, v);
  }
};

namespace raster_detail {

inline uint8_t quantize(double intensity) {
  return static_cast<uint8_t>(std::lround(std::clamp(intensity, 0.0, 1.0) * 255.0));
}

/// World -> pixel mapping. Ego frame has +x forward, +y left; pixel row 0 is
/// the far front edge, the ego origin sits at row floor(front*ppm), i.e.
/// back*ppm rows above the bottom edge.
struct PixelFrame {
  Vec2 ego_pos;
  double cos_yaw = 1.0, sin_yaw = 0.0;
  const BevSpec* spec = nullptr;

  PixelFrame(const EgoState& ego, const BevSpec& s) : spec(&s) {
    ego_pos = {ego.x, ego.y};
    cos_yaw = snap(std::cos(ego.yaw));
    sin_yaw = snap(std::sin(ego.yaw));
  }

  // exact cardinal headings render without trig noise flipping edge pixels
  static double snap(double v) {
    if (std::abs(v) < 1e-12) return 0.0;
    if (std::abs(v - 1.0) < 1e-12) return 1.0;
    if (std::abs(v + 1.0) < 1e-12) return -1.0;
    return v;
  }

  /// Continuous pixel coordinates (row, col) of a world point, quantized to
  /// a 1/1024 px subgrid so equal scenes rasterize identically regardless of
  /// how their coordinates were produced.
  Vec2 to_pixel(const Vec2& world) const {
    Vec2 d = world - ego_pos;
    double xe = cos_yaw * d.x + sin_yaw * d.y;   // forward
    double ye = -sin_yaw * d.x + cos_yaw * d.y;  // left
    double row = (spec->extent_front - xe) * spec->pixels_per_meter;
    double col = (spec->extent_side - ye) * spec->pixels_per_meter;
    return {std::round(row * 1024.0) / 1024.0, std::round(col * 1024.0) / 1024.0};
  }
};

/// Scanline fill at pixel centers plus a sampled outline, so boundary pixels
/// round toward inclusion.
inline void fill_polygon(BevRaster& raster, int channel, const std::vector<Vec2>& poly_px,
                         uint8_t v) {
  if (poly_px.size() < 3 || v == 0) return;
  double rmin = 1e300, rmax = -1e300;
  for (const Vec2& p : poly_px) {
    rmin = std::min(rmin, p.x);
    rmax = std::max(rmax, p.x);
  }
  int r0 = std::max(0, static_cast<int>(std::floor(rmin)));
  int r1 = std::min(raster.height - 1, static_cast<int>(std::ceil(rmax)));
  std::vector<double> xs;
  for (int r = r0; r <= r1; ++r) {
    double yc = r + 0.5;
    xs.clear();
    size_t n = poly_px.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
      const Vec2& a = poly_px[j];
      const Vec2& b = poly_px[i];
      if ((a.x > yc) == (b.x > yc)) continue;
      double t = (yc - a.x) / (b.x - a.x);
      xs.push_back(a.y + t * (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      int c0 = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
      int c1 = std::min(raster.width - 1, static_cast<int>(std::floor(xs[i + 1] - 0.5)));
      for (int c = c0; c <= c1; ++c) raster.stamp(channel, r, c, v);
    }
  }
  // conservative outline
  size_t n = poly_px.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    Vec2 a = poly_px[j], b = poly_px[i];
    double len = (b - a).norm();
    int steps = std::max(1, static_cast<int>(std::ceil(len / 0.5)));
    for (int k = 0; k <= steps; ++k) {
      Vec2 p = a + (b - a) * (static_cast<double>(k) / steps);
      int r = static_cast<int>(std::floor(p.x));
      int c = static_cast<int>(std::floor(p.y));
      if (r >= 0 && r < raster.height && c >= 0 && c < raster.width)
        raster.stamp(channel, r, c, v);
    }
  }
}

inline void fill_obb(BevRaster& raster, int channel, const PixelFrame& frame, const Obb& box,
                     uint8_t v) {
  std::vector<Vec2> poly;
  for (const Vec2& c : box.corners()) poly.push_back(frame.to_pixel(c));
  fill_polygon(raster, channel, poly, v);
}

inline void draw_segment(BevRaster& raster, int channel, const PixelFrame& frame, const Vec2& a,
                         const Vec2& b, double width_m, uint8_t v) {
  Vec2 d = b - a;
  double len = d.norm();
  if (len < 1e-9) {
    Obb dot{a, 0.0, width_m / 2.0, width_m / 2.0};
    fill_obb(raster, channel, frame, dot, v);
    return;
  }
  Obb seg{(a + b) / 2.0, std::atan2(d.y, d.x), len / 2.0, width_m / 2.0};
  fill_obb(raster, channel, frame, seg, v);
}

inline void draw_polyline(BevRaster& raster, int channel, const PixelFrame& frame,
                          const std::vector<Vec2>& pts, double width_m, uint8_t v) {
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    draw_segment(raster, channel, frame, pts[i], pts[i + 1], width_m, v);
}

}  // namespace raster_detail

/// Speed-coded box intensity: a floor of 0.1 keeps stationary actors visible,
/// the rest scales with speed.
inline double speed_intensity(double speed) {
  return 0.1 + 0.9 * std::min(1.0, std::max(0.0, speed) / kSpeedNorm);
}

inline double light_phase_intensity(LightPhase phase) {
  switch (phase) {
    case LightPhase::Red: return 1.0;
    case LightPhase::Yellow: return 0.6;
    case LightPhase::Green: return 0.3;
  }
  return 0.0;
}

/// Everything the rasterizer needs for one frame, in world coordinates.
struct RenderScene {
  const MapGraph* map = nullptr;
  const Route* route = nullptr;
  const std::vector<uint8_t>* route_intersection_mask = nullptr;  // per dense point
  std::vector<AgentState> agents;
  double time = 0.0;
  double forecast_horizon = 1.0;
};

/// Lane boundary polylines (markings) for every non-intersection lane.
inline std::vector<std::vector<Vec2>> build_lane_markings(const MapGraph& map) {
  std::vector<std::vector<Vec2>> out;
  for (const Lane& lane : map.lanes) {
    if (lane.in_intersection) continue;
    for (double side : {1.0, -1.0}) {
      std::vector<Vec2> boundary;
      boundary.reserve(lane.centerline.size());
      for (size_t i = 0; i < lane.centerline.size(); ++i) {
        Vec2 tang;
        if (i + 1 < lane.centerline.size())
          tang = (lane.centerline[i + 1] - lane.centerline[i]).normalized();
        else
          tang = (lane.centerline[i] - lane.centerline[i - 1]).normalized();
        boundary.push_back(lane.centerline[i] + tang.perp() * (side * lane.width / 2.0));
      }
      out.push_back(std::move(boundary));
    }
  }
  return out;
}

/// Flags each dense route point whose containing route lane is an
/// intersection lane. Conditioning is only rendered there.
inline std::vector<uint8_t> route_intersection_mask(const MapGraph& map, const Route& route) {
  std::vector<uint8_t> mask(route.dense_path.size(), 0);
  std::vector<const Lane*> lanes;
  for (int id : route.lane_sequence) lanes.push_back(&map.lane(id));
  for (size_t k = 0; k < route.dense_path.size(); ++k) {
    const Vec2& p = route.dense_path[k];
    double best = 1e300;
    bool inter = false;
    for (const Lane* l : lanes) {
      auto [s, lat] = l->project(p);
      double d = std::abs(lat);
      if (d < best) {
        best = d;
        inter = l->in_intersection;
      }
    }
    mask[k] = inter ? 1 : 0;
  }
  return mask;
}

inline BevRaster rasterize(const RenderScene& scene, const EgoState& ego, const BevSpec& spec,
                           const std::vector<std::vector<Vec2>>* lane_markings = nullptr) {
  using namespace raster_detail;
  BevRaster raster;
  raster.init(spec.channels(), spec.height, spec.width);
  PixelFrame frame(ego, spec);
  const uint8_t full = 255;

  if (scene.map) {
    for (const Polygon& poly : scene.map->drivable) {
      std::vector<Vec2> px;
      for (const Vec2& p : poly) px.push_back(frame.to_pixel(p));
      fill_polygon(raster, static_cast<int>(BevChannel::Road), px, full);
    }
    for (const Polygon& poly : scene.map->sidewalks) {
      std::vector<Vec2> px;
      for (const Vec2& p : poly) px.push_back(frame.to_pixel(p));
      fill_polygon(raster, static_cast<int>(BevChannel::Shoulder), px, full);
    }
    if (lane_markings) {
      for (const auto& line : *lane_markings)
        draw_polyline(raster, static_cast<int>(BevChannel::LaneMarkings), frame, line, 0.3,
                      full);
    }
    for (const Lane& lane : scene.map->lanes) {
      if (lane.in_intersection) continue;
      uint8_t v = quantize(speed_intensity(lane.speed_limit) );
      draw_polyline(raster, static_cast<int>(BevChannel::SpeedSigns), frame, lane.centerline,
                    0.5, v);
    }
    for (const TrafficLightDef& tl : scene.map->traffic_lights) {
      uint8_t v = quantize(light_phase_intensity(tl.phase_at(scene.time)));
      draw_segment(raster, static_cast<int>(BevChannel::TrafficLights), frame, tl.stop_a,
                   tl.stop_b, 1.0, v);
    }
    if (spec.stop_sign_channel) {
      for (const StopSignDef& ss : scene.map->stop_signs) {
        std::vector<Vec2> px;
        for (const Vec2& p : ss.trigger) px.push_back(frame.to_pixel(p));
        fill_polygon(raster, static_cast<int>(BevChannel::StopSigns), px, full);
      }
    }
  }

  if (scene.route && scene.route_intersection_mask) {
    const auto& mask = *scene.route_intersection_mask;
    const auto& path = scene.route->dense_path;
    for (size_t k = 0; k + 1 < path.size(); ++k) {
      if (mask[k] && mask[k + 1])
        draw_segment(raster, static_cast<int>(BevChannel::Route), frame, path[k], path[k + 1],
                     3.5, full);
    }
  }

  for (const AgentState& a : scene.agents) {
    int channel;
    uint8_t v;
    switch (a.kind) {
      case AgentKind::Vehicle:
        channel = static_cast<int>(BevChannel::Vehicles);
        v = quantize(speed_intensity(a.speed));
        break;
      case AgentKind::Pedestrian:
        channel = static_cast<int>(BevChannel::Pedestrians);
        v = quantize(speed_intensity(a.speed));
        break;
      case AgentKind::Static:
      default:
        channel = static_cast<int>(BevChannel::StaticObjects);
        v = full;
        break;
    }
    fill_obb(raster, channel, frame, a.obb(), v);
    if (a.kind == AgentKind::Vehicle && a.speed > 0.0) {
      auto fc = constant_velocity_forecast(a, scene.forecast_horizon);
      draw_segment(raster, channel, frame, fc[0], fc[1], 0.5, v);
    }
  }

  // the ego footprint, full intensity in the vehicle channel
  Obb ego_box{{ego.x, ego.y}, ego.yaw, 2.3, 1.0};
  fill_obb(raster, static_cast<int>(BevChannel::Vehicles), frame, ego_box,
           quantize(speed_intensity(ego.v)));

  return raster;
}

// ---------------------------------------------------------------------------
// Scalar measurements
// ---------------------------------------------------------------------------

struct MeasurementInput {
  Action last_action;
  double speed = 0.0;
  double speed_limit = 13.89;
  double accel_lon = 0.0;
  double accel_lat = 0.0;
  double steer = 0.0;
  double steer_rate = 0.0;
  double yaw_rate = 0.0;
  double yaw_accel = 0.0;
};

inline int measurement_dim(RewardProfile profile) {
  return profile == RewardProfile::Nuplan ? 10 : 4;
}

/// Fixed-order measurement vector. Carla profile: last action, speed and
/// speed limit. NuPlan adds the kinematic terms (accelerations, steering
/// angle/rate, angular velocity/acceleration), each scaled by its limit.
inline std::vector<float> measurements(const MeasurementInput& in, RewardProfile profile,
                                       const ActionLimits& lim) {
  std::vector<float> v;
  v.reserve(measurement_dim(profile));
  v.push_back(static_cast<float>(in.last_action.accel_brake));
  v.push_back(static_cast<float>(in.last_action.steer_cmd));
  v.push_back(static_cast<float>(in.speed / kSpeedNorm));
  v.push_back(static_cast<float>(in.speed_limit / kSpeedNorm));
  if (profile == RewardProfile::Nuplan) {
    double accel_norm = std::max(std::abs(lim.accel_lo), std::abs(lim.accel_hi));
    v.push_back(static_cast<float>(in.accel_lon / accel_norm));
    v.push_back(static_cast<float>(in.accel_lat / 4.89));
    v.push_back(static_cast<float>(in.steer / lim.steer_max));
    v.push_back(static_cast<float>(in.steer_rate / lim.steer_rate_max));
    v.push_back(static_cast<float>(in.yaw_rate / 1.0));
    v.push_back(static_cast<float>(in.yaw_accel / 1.93));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Asymmetric-critic extras: reward-relevant clocks the policy does not see.
// ---------------------------------------------------------------------------

constexpr int kCriticExtrasDim = 5;

struct CriticClockInput {
  int elapsed_steps = 0;
  int horizon = 1;
  double blocked_duration_s = 0.0;
  double route_remaining_frac = 1.0;  // 1 fresh, 0 done
  int ttc_remaining = 0;              // ledger entries; -1 = until episode end
  int comfort_remaining = 0;
};

inline std::vector<float> critic_extras(const CriticClockInput& in, RewardProfile profile) {
  auto penalty_frac = [&](int remaining) -> float {
    if (remaining < 0) return 1.0f;  // persists to the end of the episode
    double norm = profile == RewardProfile::Nuplan ? in.horizon : kCarlaPenaltyPersistence;
    return static_cast<float>(std::clamp(remaining / norm, 0.0, 1.0));
  };
  std::vector<float> v(kCriticExtrasDim);
  v[0] = static_cast<float>(
      std::clamp(1.0 - static_cast<double>(in.elapsed_steps) / in.horizon, 0.0, 1.0));
  v[1] = static_cast<float>(std::clamp(1.0 - in.blocked_duration_s / kBlockedDuration, 0.0, 1.0));
  v[2] = static_cast<float>(std::clamp(in.route_remaining_frac, 0.0, 1.0));
  v[3] = penalty_frac(in.ttc_remaining);
  v[4] = penalty_frac(in.comfort_remaining);
  return v;
}

}  // namespace planrl

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "planrl/dynamics.hpp"
#include "planrl/fixtures.hpp"
#include "planrl/observation.hpp"
#include "planrl/ppo.hpp"
#include "planrl/reward.hpp"
#include "planrl/rng.hpp"
#include "planrl/traffic.hpp"
#include "planrl/worldmap.hpp"

namespace planrl {

enum class EnvProfile { CarlaLike, NuplanLike };

inline const char* to_string(EnvProfile p) {
  return p == EnvProfile::CarlaLike ? "carla-like" : "nuplan-like";
}

constexpr Vec2 kEgoExtent{2.3, 1.0};  // half length / half width

struct EnvConfig {
  EnvProfile profile = EnvProfile::CarlaLike;
  RewardProfile reward_profile = RewardProfile::Carla;
  double dt = 0.1;
  int horizon = 0;  // 0 = derive (nuplan: survival.n; carla: route length at 1 m/s)
  int action_repeat = 1;  // eval mode runs dt=0.05 with repeat 2

  double route_length = 250.0;
  double lane_change_prob = 0.1;

  std::string map_fixture = "straight";  // straight|two_way|loop|intersection|red_light|stop_sign
  std::string map_file;                  // overrides map_fixture when set
  double map_length = 350.0;
  int map_lanes = 2;

  std::string scenario = "none";  // none|lead_brake|red_light_runner|crossing_ped
  double reactive_prob = 0.0;     // chance of reactive (IDM) instead of replay traffic
  int reactive_vehicles = 4;

  double initial_speed_lo = 0.0;  // nuplan-like spawns moving
  double initial_speed_hi = 0.0;

  BevSpec bev = BevSpec::desk();
  ActionLimits limits = ActionLimits::nuplan();
  ComfortThresholds comfort = ComfortThresholds::carla();
  SurvivalConfig survival;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["profile"] = to_string(profile);
    j["reward_profile"] = to_string(reward_profile);
    j["dt"] = dt;
    j["horizon"] = horizon;
    j["action_repeat"] = action_repeat;
    j["route_length"] = route_length;
    j["lane_change_prob"] = lane_change_prob;
    j["map_fixture"] = map_fixture;
    j["map_file"] = map_file;
    j["map_length"] = map_length;
    j["map_lanes"] = map_lanes;
    j["scenario"] = scenario;
    j["reactive_prob"] = reactive_prob;
    j["reactive_vehicles"] = reactive_vehicles;
    j["initial_speed_lo"] = initial_speed_lo;
    j["initial_speed_hi"] = initial_speed_hi;
    j["bev"] = {{"height", bev.height},
                {"width", bev.width},
                {"pixels_per_meter", bev.pixels_per_meter},
                {"extent_front", bev.extent_front},
                {"extent_back", bev.extent_back},
                {"extent_side", bev.extent_side},
                {"stop_sign_channel", bev.stop_sign_channel}};
    j["limits"] = {{"accel_lo", limits.accel_lo},
                   {"accel_hi", limits.accel_hi},
                   {"steer_max", limits.steer_max},
                   {"steer_rate_max", limits.steer_rate_max}};
    j["survival"] = {{"s", survival.s}, {"n", survival.n}};
    j["comfort_profile"] = comfort_profile_;
    return j;
  }

  static EnvConfig from_json(const nlohmann::json& j) {
    EnvConfig c;
    std::string prof = j.value("profile", "carla-like");
    c.profile = prof == "nuplan-like" ? EnvProfile::NuplanLike : EnvProfile::CarlaLike;
    std::string rp = j.value("reward_profile", "carla");
    c.reward_profile = rp == "nuplan" ? RewardProfile::Nuplan
                       : rp == "shaped" ? RewardProfile::Shaped
                                        : RewardProfile::Carla;
    c.dt = j.value("dt", 0.1);
    c.horizon = j.value("horizon", 0);
    c.action_repeat = j.value("action_repeat", 1);
    c.route_length = j.value("route_length", 250.0);
    c.lane_change_prob = j.value("lane_change_prob", 0.1);
    c.map_fixture = j.value("map_fixture", "straight");
    c.map_file = j.value("map_file", "");
    c.map_length = j.value("map_length", 350.0);
    c.map_lanes = j.value("map_lanes", 2);
    c.scenario = j.value("scenario", "none");
    c.reactive_prob = j.value("reactive_prob", 0.0);
    c.reactive_vehicles = j.value("reactive_vehicles", 4);
    c.initial_speed_lo = j.value("initial_speed_lo", 0.0);
    c.initial_speed_hi = j.value("initial_speed_hi", 0.0);
    if (j.contains("bev")) {
      const auto& jb = j["bev"];
      c.bev.height = jb.value("height", c.bev.height);
      c.bev.width = jb.value("width", c.bev.width);
      c.bev.pixels_per_meter = jb.value("pixels_per_meter", c.bev.pixels_per_meter);
      c.bev.extent_front = jb.value("extent_front", c.bev.extent_front);
      c.bev.extent_back = jb.value("extent_back", c.bev.extent_back);
      c.bev.extent_side = jb.value("extent_side", c.bev.extent_side);
      c.bev.stop_sign_channel = jb.value("stop_sign_channel", c.bev.stop_sign_channel);
    }
    if (j.contains("limits")) {
      const auto& jl = j["limits"];
      c.limits.accel_lo = jl.value("accel_lo", c.limits.accel_lo);
      c.limits.accel_hi = jl.value("accel_hi", c.limits.accel_hi);
      c.limits.steer_max = jl.value("steer_max", c.limits.steer_max);
      c.limits.steer_rate_max = jl.value("steer_rate_max", c.limits.steer_rate_max);
    }
    if (j.contains("survival")) {
      c.survival.s = j["survival"].value("s", 0.6);
      c.survival.n = j["survival"].value("n", 150);
    }
    c.set_comfort_profile(j.value("comfort_profile", std::string("carla")));
    return c;
  }

  void set_comfort_profile(const std::string& name) {
    comfort_profile_ = name;
    comfort = name == "nuplan" ? ComfortThresholds::nuplan() : ComfortThresholds::carla();
  }
  const std::string& comfort_profile() const { return comfort_profile_; }

  /// Conventional presets: the carla-like profile spawns at rest with the
  /// wide action limits, the nuplan-like profile runs a fixed 150-step
  /// horizon with the survival blend.
  static EnvConfig carla_like() {
    EnvConfig c;
    c.profile = EnvProfile::CarlaLike;
    c.reward_profile = RewardProfile::Carla;
    c.limits = ActionLimits::carla();
    c.set_comfort_profile("carla");
    c.bev = BevSpec::desk(true);
    return c;
  }
  static EnvConfig nuplan_like() {
    EnvConfig c;
    c.profile = EnvProfile::NuplanLike;
    c.reward_profile = RewardProfile::Nuplan;
    c.limits = ActionLimits::nuplan();
    c.set_comfort_profile("nuplan");
    c.bev = BevSpec::desk(false);  // stop-sign channel dropped
    c.initial_speed_lo = 0.0;
    c.initial_speed_hi = 8.0;
    return c;
  }

 private:
  std::string comfort_profile_ = "carla";
};

/// Closed-loop driving environment: composes the map, bicycle dynamics,
/// traffic, reward and observation modules. One instance is one confined
/// state machine; instances never share mutable state.
class DrivingEnv : public RolloutEnv {
 public:
  explicit DrivingEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.bev.valid()) throw std::invalid_argument("env: BEV spec extents exceed the grid");
    map_ = std::make_shared<MapGraph>(build_fixture_map(cfg_));
    markings_ = build_lane_markings(*map_);
  }

  static MapGraph build_fixture_map(const EnvConfig& cfg) {
    if (!cfg.map_file.empty()) {
      std::ifstream f(cfg.map_file);
      if (!f) throw MapError("cannot open map file: " + cfg.map_file);
      std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
      return build_map(text);
    }
    if (cfg.map_fixture == "straight")
      return fixtures::straight_road(cfg.map_length, cfg.map_lanes, false);
    if (cfg.map_fixture == "two_way")
      return fixtures::straight_road(cfg.map_length, cfg.map_lanes, true);
    if (cfg.map_fixture == "loop") return fixtures::loop_map();
    if (cfg.map_fixture == "intersection") return fixtures::four_way_intersection().map;
    if (cfg.map_fixture == "red_light") return fixtures::red_light_road(cfg.map_length);
    if (cfg.map_fixture == "stop_sign") return fixtures::stop_sign_road(cfg.map_length);
    throw std::invalid_argument("env: unknown map fixture `" + cfg.map_fixture + "`");
  }

  const EnvConfig& config() const { return cfg_; }
  const MapGraph& map() const { return *map_; }
  const Route& route() const { return route_; }
  const EgoState& ego() const { return ego_; }
  double sim_time() const { return time_; }
  const PenaltyLedger& ledger() const { return ledger_; }

  ObsDims dims() const override {
    ObsDims d;
    d.channels = cfg_.bev.channels();
    d.height = cfg_.bev.height;
    d.width = cfg_.bev.width;
    d.meas_dim = measurement_dim(cfg_.reward_profile);
    d.extras_dim = kCriticExtrasDim;
    return d;
  }

  EnvObs reset(uint64_t seed) override {
    base_seed_ = seed;
    episode_index_ = 0;
    return reset_episode(seed, seed);
  }

  EnvObs auto_reset() override {
    ++episode_index_;
    uint64_t s = RngStream::derive(base_seed_, "episode", episode_index_).next_u64();
    return reset_episode(s, s);
  }

  /// Same route, different traffic/spawn variation (evaluation repeats).
  EnvObs reset_split(uint64_t route_seed, uint64_t variation_seed) {
    base_seed_ = route_seed;
    episode_index_ = 0;
    return reset_episode(route_seed, variation_seed);
  }

  StepOut step(const std::array<double, 2>& action01) override {
    if (!active_) throw std::logic_error("env: step() after episode end without reset");
    StepOut out;
    for (int rep = 0; rep < std::max(1, cfg_.action_repeat); ++rep) {
      out = step_once(action01);
      if (out.episode_end()) break;
    }
    return out;
  }

  /// Per-step replay logging (header + JSONL); used by render-frame and eval.
  void start_replay_log(const std::string& path) {
    replay_ = std::make_unique<std::ofstream>(path);
    if (!*replay_) throw std::runtime_error("env: cannot open replay log " + path);
    replay_header_pending_ = true;
  }
  void stop_replay_log() { replay_.reset(); }

  struct DebugState {
    double penalty_product = 1.0;
    double rc = 0.0;
    RewardSnapshot snapshot;
  };
  const DebugState& debug() const { return debug_; }

  /// Rasterize the current world state (the raster part of observe()).
  BevRaster render_frame() {
    RenderScene scene;
    scene.map = map_.get();
    scene.route = &route_;
    scene.route_intersection_mask = &route_mask_;
    scene.agents = traffic_.agents();
    scene.time = time_;
    return rasterize(scene, ego_, cfg_.bev, &markings_);
  }

 private:
  EnvObs reset_episode(uint64_t route_seed, uint64_t variation_seed) {
    episode_seed_ = route_seed;
    RngStream route_rng = RngStream::derive(route_seed, "route");
    route_ = generate_route(*map_, route_rng, cfg_.route_length, cfg_.lane_change_prob);
    route_mask_ = route_intersection_mask(*map_, route_);

    ego_ = EgoState{};
    ego_.x = route_.start().x;
    ego_.y = route_.start().y;
    ego_.yaw = route_.start_heading();
    RngStream spawn_rng = RngStream::derive(variation_seed, "spawn");
    if (cfg_.profile == EnvProfile::NuplanLike)
      ego_.v = spawn_rng.uniform(cfg_.initial_speed_lo, cfg_.initial_speed_hi);
    route_.best_progress_s = 0.0;

    setup_traffic(variation_seed);

    ledger_.clear();
    ledger_.profile = cfg_.reward_profile;
    comfort_.clear();
    comfort_.thresholds = cfg_.comfort;
    time_ = 0.0;
    elapsed_steps_ = 0;
    blocked_s_ = 0.0;
    episode_return_ = 0.0;
    episode_rc_ = 0.0;
    last_action_ = Action{};
    prev_yaw_rate_ = 0.0;
    stop_zone_min_speed_.assign(map_->stop_signs.size(), -1.0);
    stop_cleared_.assign(map_->stop_signs.size(), 0);
    debug_ = DebugState{};
    active_ = true;

    horizon_ = cfg_.horizon;
    if (horizon_ <= 0) {
      horizon_ = cfg_.profile == EnvProfile::NuplanLike
                     ? cfg_.survival.n
                     : static_cast<int>(route_.total_length / cfg_.dt);  // route at 1 m/s
    }

    if (replay_ && replay_header_pending_) {
      nlohmann::json header;
      header["config"] = cfg_.to_json();
      header["seed"] = episode_seed_;
      (*replay_) << header.dump() << "\n";
      replay_header_pending_ = false;
    }
    return observe();
  }

  void setup_traffic(uint64_t seed) {
    RngStream traffic_rng = RngStream::derive(seed, "traffic");
    bool reactive = traffic_rng.bernoulli(cfg_.reactive_prob);
    if (reactive) {
      std::vector<ReactiveVehicle> vehicles;
      int lane_id = route_.lane_sequence.front();
      const Lane& lane = map_->lane(lane_id);
      double gap = std::max(20.0, lane.length() / (cfg_.reactive_vehicles + 1));
      for (int i = 0; i < cfg_.reactive_vehicles; ++i) {
        ReactiveVehicle v;
        v.id = 200 + i;
        v.lane_id = lane_id;
        v.s = std::min(lane.length(), 25.0 + gap * i + traffic_rng.uniform(0.0, 5.0));
        v.v = traffic_rng.uniform(2.0, 8.0);
        v.idm.v0 = lane.speed_limit;
        vehicles.push_back(v);
      }
      traffic_.init_reactive(map_.get(), std::move(vehicles),
                             RngStream::derive(seed, "idm"));
      return;
    }
    std::vector<AgentScript> scripts;
    if (cfg_.scenario == "lead_brake") {
      double ahead = traffic_rng.uniform(22.0, 32.0);
      scripts.push_back(scenarios::lead_vehicle_brake(route_, ahead));
    } else if (cfg_.scenario == "red_light_runner") {
      double arc = traffic_rng.uniform(0.35, 0.55) * route_.total_length;
      double when = traffic_rng.uniform(6.0, 14.0);
      scripts.push_back(scenarios::red_light_runner(route_, arc, when));
    } else if (cfg_.scenario == "crossing_ped") {
      double arc = traffic_rng.uniform(0.3, 0.5) * route_.total_length;
      double when = traffic_rng.uniform(5.0, 12.0);
      scripts.push_back(scenarios::crossing_pedestrian(route_, arc, when));
    }
    traffic_.init_replay(std::move(scripts));
  }

  StepOut step_once(const std::array<double, 2>& action01) {
    Action act{2.0 * action01[0] - 1.0, 2.0 * action01[1] - 1.0};
    auto [accel_cmd, steer_target] = map_action(act, cfg_.limits);
    double steer_rate = steer_rate_from_target(ego_.steer, steer_target, cfg_.dt, cfg_.limits);

    EgoState prev = ego_;
    ego_ = step_bicycle(ego_, accel_cmd, steer_rate, cfg_.dt, cfg_.limits.steer_max);
    traffic_.step(cfg_.dt);
    time_ += cfg_.dt;
    ++elapsed_steps_;

    std::vector<AgentState> agents = traffic_.agents();

    RewardSnapshot snap = build_snapshot(prev, agents);

    std::optional<TerminalResult> terminal;
    double reward = 0.0;
    double rc = 0.0;
    bool terminated = false;
    bool truncated = false;

    if (cfg_.reward_profile == RewardProfile::Shaped) {
      rc = route_completion_delta(route_, ego_.position());
      snap.reached_route_end = route_.best_progress_s >= route_.total_length - 10.0;
      ShapedRewardOutput sr = shaped_reward(snap);
      reward = sr.r;
      terminated = sr.terminated && !snap.reached_route_end;
      truncated = snap.reached_route_end || elapsed_steps_ >= horizon_;
      debug_.penalty_product = 1.0;
    } else {
      terminal = terminal_check(snap, cfg_.reward_profile);
      double product = soft_penalty_product(snap, ledger_);
      rc = route_completion_delta(route_, ego_.position());
      RewardOutput out = rc_reward(rc, product, terminal);
      reward = out.r;
      if (cfg_.reward_profile == RewardProfile::Nuplan)
        reward = survival_adjusted(reward, cfg_.survival, out.terminated);
      terminated = out.terminated;
      bool route_done = route_.best_progress_s >= route_.total_length;
      if (!terminated) {
        if (cfg_.profile == EnvProfile::CarlaLike && route_done)
          truncated = true;  // all reward collected
        if (elapsed_steps_ >= horizon_) truncated = true;
      }
      debug_.penalty_product = product;
    }
    debug_.rc = rc;
    debug_.snapshot = snap;

    last_action_ = act;
    prev_yaw_rate_ = prev.yaw_rate;
    episode_return_ += reward;
    episode_rc_ += rc;

    StepOut out;
    out.reward = reward;
    out.terminated = terminated;
    out.truncated = truncated;
    out.obs = observe();   // true next observation (pre-reset)
    ledger_.tick();        // advance penalty persistence after observing

    if (replay_) {
      nlohmann::json line;
      line["t"] = elapsed_steps_;
      line["x"] = ego_.x;
      line["y"] = ego_.y;
      line["yaw"] = ego_.yaw;
      line["v"] = ego_.v;
      line["action"] = {action01[0], action01[1]};
      line["reward"] = reward;
      line["rc"] = rc;
      line["penalty_product"] = debug_.penalty_product;
      if (terminal) line["infraction"] = to_string(terminal->kind);
      (*replay_) << line.dump() << "\n";
    }

    if (terminated || truncated) {
      active_ = false;
      EpisodeInfo info;
      info.episode_return = episode_return_;
      info.sum_rc = episode_rc_;
      info.length = elapsed_steps_;
      if (terminal) info.terminal = terminal->kind;
      out.info = info;
    }
    return out;
  }

  RewardSnapshot build_snapshot(const EgoState& prev, const std::vector<AgentState>& agents) {
    RewardSnapshot s;
    s.speed = ego_.v;
    s.prev_speed = prev.v;
    s.steer = ego_.steer;
    s.prev_steer = prev.steer;
    s.meters_traveled = (ego_.position() - prev.position()).norm();

    auto [route_s, route_lat] = project_to_route(route_, ego_.position());
    s.route_lateral = route_lat;
    size_t nearest_k = static_cast<size_t>(std::clamp(
        route_s / kRouteSpacing, 0.0, static_cast<double>(route_.dense_path.size() - 1)));
    s.route_distance = (ego_.position() - route_.dense_path[nearest_k]).norm();

    // collision
    Obb ego_box{ego_.position(), ego_.yaw, kEgoExtent.x, kEgoExtent.y};
    for (const AgentState& a : agents) {
      if (obb_overlap(ego_box, a.obb())) {
        s.collision = true;
        break;
      }
    }
    s.off_road = !map_->point_on_drivable(ego_.position());
    s.on_sidewalk = map_->point_on_sidewalk(ego_.position());

    // red light crossing: motion segment intersects a red stop line
    for (const TrafficLightDef& tl : map_->traffic_lights) {
      if (tl.phase_at(time_) != LightPhase::Red) continue;
      if (segments_intersect(prev.position(), ego_.position(), tl.stop_a, tl.stop_b)) {
        s.crossed_red_light = true;
        break;
      }
    }
    // stop signs: must reach standstill inside the trigger zone
    for (size_t i = 0; i < map_->stop_signs.size(); ++i) {
      const StopSignDef& ss = map_->stop_signs[i];
      bool inside = point_in_polygon(ss.trigger, ego_.position());
      if (inside) {
        if (stop_zone_min_speed_[i] < 0.0)
          stop_zone_min_speed_[i] = ego_.v;
        else
          stop_zone_min_speed_[i] = std::min(stop_zone_min_speed_[i], ego_.v);
      } else if (stop_zone_min_speed_[i] >= 0.0 && !stop_cleared_[i]) {
        stop_cleared_[i] = 1;
        if (stop_zone_min_speed_[i] > kBlockedSpeed) s.crossed_stop_uncleared = true;
      }
    }

    if (ego_.v <= kBlockedSpeed)
      blocked_s_ += cfg_.dt;
    else
      blocked_s_ = 0.0;
    s.blocked_duration_s = blocked_s_;

    lane_context(s);

    // TTC forecast
    std::vector<ForecastAgent> fc;
    fc.reserve(agents.size());
    for (const AgentState& a : agents) fc.push_back(a.forecast());
    s.ttc_violation = ttc_violated(ego_, fc, kEgoExtent);

    // comfort window
    comfort_.push({time_, ego_.accel, ego_.accel_lat, ego_.yaw_rate});
    s.comfort_violations = comfort_violations(comfort_).count();

    shaped_inputs(s, agents);
    return s;
  }

  /// Lane containment, opposing-traffic check, lane-center offset and speed
  /// limit under the ego.
  void lane_context(RewardSnapshot& s) {
    std::vector<int> allowed_groups;
    for (int id : route_.lane_sequence) allowed_groups.push_back(map_->lane(id).direction_group);

    const Lane* best_allowed = nullptr;
    double best_allowed_off = 1e300;
    bool contained_any = false, contained_allowed = false;
    for (const Lane& lane : map_->lanes) {
      auto [ls, lat] = lane.project(ego_.position());
      double off = std::abs(lat);
      if (off <= lane.width / 2.0 + 1e-9 && ls > 1e-9 && ls < lane.length() - 1e-9) {
        contained_any = true;
        bool allowed = std::find(allowed_groups.begin(), allowed_groups.end(),
                                 lane.direction_group) != allowed_groups.end();
        if (allowed) {
          contained_allowed = true;
          if (off < best_allowed_off) {
            best_allowed_off = off;
            best_allowed = &lane;
          }
        }
      }
    }
    s.on_opposing_lane = contained_any && !contained_allowed;
    const Lane* ctx = best_allowed;
    if (!ctx) {
      int nid = map_->nearest_lane(ego_.position());
      if (nid >= 0) ctx = &map_->lane(nid);
    }
    if (ctx) {
      auto [ls, lat] = ctx->project(ego_.position());
      s.lane_center_offset = std::abs(lat);
      s.lane_half_width = ctx->width / 2.0;
      s.speed_limit = ctx->speed_limit;
      s.in_intersection = ctx->in_intersection;
    }
  }

  void shaped_inputs(RewardSnapshot& s, const std::vector<AgentState>& agents) {
    auto [ego_s, ego_lat] = project_to_route(route_, ego_.position());
    // nearest red light ahead along the route
    for (const TrafficLightDef& tl : map_->traffic_lights) {
      if (tl.phase_at(time_) != LightPhase::Red) continue;
      Vec2 mid = (tl.stop_a + tl.stop_b) / 2.0;
      auto [ls, llat] = project_to_route(route_, mid);
      if (ls > ego_s) {
        double d = ls - ego_s;
        if (!s.red_light_distance || d < *s.red_light_distance) s.red_light_distance = d;
      }
    }
    for (size_t i = 0; i < map_->stop_signs.size(); ++i) {
      if (stop_cleared_[i]) continue;
      Vec2 centroid{0, 0};
      for (const Vec2& p : map_->stop_signs[i].trigger) centroid += p;
      centroid = centroid / static_cast<double>(map_->stop_signs[i].trigger.size());
      auto [ls, llat] = project_to_route(route_, centroid);
      if (ls > ego_s) {
        double d = ls - ego_s;
        if (!s.stop_sign_distance || d < *s.stop_sign_distance) s.stop_sign_distance = d;
      }
    }
    for (const AgentState& a : agents) {
      if (a.kind != AgentKind::Vehicle) continue;
      auto [ls, llat] = project_to_route(route_, a.position());
      if (std::abs(llat) > 2.5) continue;  // not on the ego corridor
      if (ls > ego_s) {
        double d = ls - ego_s - kEgoExtent.x - a.extent.x;
        if (!s.lead_vehicle_distance || d < *s.lead_vehicle_distance)
          s.lead_vehicle_distance = std::max(0.0, d);
      }
    }
  }

  EnvObs observe() {
    BevRaster raster = render_frame();

    MeasurementInput mi;
    mi.last_action = last_action_;
    mi.speed = ego_.v;
    mi.speed_limit = current_speed_limit();
    mi.accel_lon = ego_.accel;
    mi.accel_lat = ego_.accel_lat;
    mi.steer = ego_.steer;
    mi.steer_rate = ego_.steer_rate;
    mi.yaw_rate = ego_.yaw_rate;
    mi.yaw_accel = cfg_.dt > 0 ? (ego_.yaw_rate - prev_yaw_rate_) / cfg_.dt : 0.0;
    std::vector<float> meas = measurements(mi, cfg_.reward_profile, cfg_.limits);

    CriticClockInput ci;
    ci.elapsed_steps = elapsed_steps_;
    ci.horizon = std::max(1, horizon_);
    ci.blocked_duration_s = blocked_s_;
    ci.route_remaining_frac =
        route_.total_length > 0 ? 1.0 - route_.best_progress_s / route_.total_length : 0.0;
    ci.ttc_remaining = ledger_.remaining_steps(InfractionKind::Ttc);
    ci.comfort_remaining = ledger_.remaining_steps(InfractionKind::Comfort);
    std::vector<float> extras = critic_extras(ci, cfg_.reward_profile);

    EnvObs obs;
    obs.raster = std::move(raster.data);
    obs.meas = std::move(meas);
    obs.extras = std::move(extras);
    return obs;
  }

  double current_speed_limit() const {
    int nid = map_->nearest_lane(ego_.position());
    return nid >= 0 ? map_->lane(nid).speed_limit : 13.89;
  }

  EnvConfig cfg_;
  std::shared_ptr<MapGraph> map_;
  std::vector<std::vector<Vec2>> markings_;

  Route route_;
  std::vector<uint8_t> route_mask_;
  EgoState ego_;
  TrafficSim traffic_;
  PenaltyLedger ledger_;
  ComfortWindow comfort_;

  uint64_t base_seed_ = 0, episode_seed_ = 0;
  uint64_t episode_index_ = 0;
  double time_ = 0.0;
  int elapsed_steps_ = 0;
  int horizon_ = 1;
  double blocked_s_ = 0.0;
  double episode_return_ = 0.0;
  double episode_rc_ = 0.0;
  Action last_action_;
  double prev_yaw_rate_ = 0.0;
  std::vector<double> stop_zone_min_speed_;
  std::vector<uint8_t> stop_cleared_;
  bool active_ = false;

  std::unique_ptr<std::ofstream> replay_;
  bool replay_header_pending_ = false;
  DebugState debug_;
};

}  // namespace planrl

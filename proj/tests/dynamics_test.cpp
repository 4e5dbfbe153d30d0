#include <gtest/gtest.h>

#include <cmath>

#include "planrl/dynamics.hpp"
#include "planrl/rng.hpp"

using namespace planrl;

TEST(MapAction, PaperLimits) {
  ActionLimits lim = ActionLimits::nuplan();
  auto [a1, s1] = map_action({1.0, 0.0}, lim);
  EXPECT_DOUBLE_EQ(a1, 2.4);
  EXPECT_DOUBLE_EQ(s1, 0.0);
  auto [a2, s2] = map_action({-1.0, -1.0}, lim);
  EXPECT_DOUBLE_EQ(a2, -3.2);
  EXPECT_DOUBLE_EQ(s2, -0.84);
  auto [a3, s3] = map_action({0.0, 0.0}, lim);
  EXPECT_DOUBLE_EQ(a3, (-3.2 + 2.4) / 2.0);  // -0.4
  EXPECT_DOUBLE_EQ(s3, 0.0);
}

TEST(MapAction, MonotoneInEachComponent) {
  ActionLimits lim = ActionLimits::carla();
  double prev_a = -1e9, prev_s = -1e9;
  for (double u = -1.0; u <= 1.0; u += 0.05) {
    auto [a, s] = map_action({u, u}, lim);
    EXPECT_GT(a, prev_a);
    EXPECT_GT(s, prev_s);
    prev_a = a;
    prev_s = s;
  }
}

TEST(SteerRate, DiscreteDerivativeIsRateLimited) {
  ActionLimits lim = ActionLimits::nuplan();
  // target far from current: clipped at the rate limit
  EXPECT_DOUBLE_EQ(steer_rate_from_target(0.0, 0.84, 0.1, lim), lim.steer_rate_max);
  EXPECT_DOUBLE_EQ(steer_rate_from_target(0.0, -0.84, 0.1, lim), -lim.steer_rate_max);
  // small difference: exact discrete derivative
  EXPECT_NEAR(steer_rate_from_target(0.10, 0.15, 0.1, lim), 0.5, 1e-12);
}

TEST(StepBicycle, StraightLineEuler) {
  EgoState s;
  s.v = 10.0;
  EgoState n = step_bicycle(s, 2.0, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(n.x, 1.0);
  EXPECT_DOUBLE_EQ(n.y, 0.0);
  EXPECT_DOUBLE_EQ(n.v, 10.2);
}

TEST(StepBicycle, NoReverseDriving) {
  EgoState s;
  s.v = 0.0;
  EgoState n = step_bicycle(s, -1.0, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(n.v, 0.0);
  EXPECT_DOUBLE_EQ(n.x, 0.0);
}

// [DERIVED] analytic circle: constant steer, constant speed converges to a
// circle of radius wheelbase / tan(steer); path curvature error < 1% at
// dt = 0.01.
TEST(StepBicycle, ConvergesToCircle) {
  double steer = 0.3, v = 5.0, dt = 0.01;
  EgoState s;
  s.v = v;
  s.steer = steer;
  double radius = s.wheelbase / std::tan(steer);
  // integrate one full circle and fit the radius against the analytic center
  // (yaw rate is constant, so the center sits at distance R left of the start)
  Vec2 center{0.0, radius};
  double t_period = 2.0 * M_PI * radius / v;
  int steps = static_cast<int>(t_period / dt);
  double max_rel_err = 0.0;
  for (int i = 0; i < steps; ++i) {
    s = step_bicycle(s, 0.0, 0.0, dt);
    if (i > steps / 10) {  // after transients of the discrete start
      double r = (Vec2{s.x, s.y} - center).norm();
      max_rel_err = std::max(max_rel_err, std::abs(r - radius) / radius);
    }
  }
  EXPECT_LT(max_rel_err, 0.01);
}

TEST(StepBicycle, FuzzInvariants) {
  RngStream rng(42);
  for (int i = 0; i < 20000; ++i) {
    EgoState s;
    s.v = rng.uniform(0.0, 30.0);
    s.yaw = rng.uniform(-M_PI, M_PI);
    s.steer = rng.uniform(-0.8, 0.8);
    double accel = rng.uniform(-10.0, 5.0);
    double rate = rng.uniform(-5.0, 5.0);
    EgoState n = step_bicycle(s, accel, rate, 0.1, 0.84);
    ASSERT_GE(n.v, 0.0);
    ASSERT_LE(std::abs(n.steer), 0.84 + 1e-12);
  }
}

TEST(StepBicycle, ZeroInputsPreserveSpeedAndHeading) {
  EgoState s;
  s.v = 7.5;
  s.yaw = 0.3;
  for (int i = 0; i < 100; ++i) s = step_bicycle(s, 0.0, 0.0, 0.1);
  EXPECT_DOUBLE_EQ(s.v, 7.5);
  EXPECT_DOUBLE_EQ(s.yaw, 0.3);
}

static ComfortWindow window_with(const ComfortThresholds& th,
                                 std::vector<ComfortSample> samples) {
  ComfortWindow w;
  w.thresholds = th;
  for (const auto& s : samples) w.push(s);
  return w;
}

TEST(Comfort, NuplanLongitudinalBound) {
  // accel_lon = 3.0 exceeds the nuPlan (-4.05, 2.40) band
  ComfortWindow w = window_with(ComfortThresholds::nuplan(),
                                {{0.0, 0.0, 0.0, 0.0}, {0.1, 0.0, 0.0, 0.0}, {0.2, 3.0, 0.0, 0.0}});
  // jerk from the last diff would also spike; isolate by checking the flag
  ComfortResult r = comfort_violations(w);
  EXPECT_TRUE(r.sufficient_history);
  EXPECT_TRUE(r.violated[static_cast<int>(ComfortMetric::LonAccel)]);
}

TEST(Comfort, AllZeroSignalsInsideEveryBand) {
  ComfortWindow w = window_with(ComfortThresholds::nuplan(),
                                {{0.0, 0.0, 0.0, 0.0}, {0.1, 0.0, 0.0, 0.0}, {0.2, 0.0, 0.0, 0.0}});
  ComfortResult r = comfort_violations(w);
  EXPECT_TRUE(r.sufficient_history);
  EXPECT_EQ(r.count(), 0);
}

TEST(Comfort, CarlaYawRateBound) {
  ComfortWindow w = window_with(ComfortThresholds::carla(),
                                {{0.0, 0.0, 0.0, 1.2}, {0.1, 0.0, 0.0, 1.2}, {0.2, 0.0, 0.0, 1.2}});
  ComfortResult r = comfort_violations(w);
  EXPECT_TRUE(r.violated[static_cast<int>(ComfortMetric::YawRate)]);
  // constant yaw rate: yaw acceleration stays in band
  EXPECT_FALSE(r.violated[static_cast<int>(ComfortMetric::YawAccel)]);
}

TEST(Comfort, InsufficientHistoryFlagged) {
  ComfortWindow w = window_with(ComfortThresholds::carla(), {{0.0, 99.0, 0.0, 0.0}});
  ComfortResult r = comfort_violations(w);
  EXPECT_FALSE(r.sufficient_history);
  EXPECT_EQ(r.count(), 0);
}

TEST(Ttc, HeadOnStationaryAgent) {
  EgoState ego;
  ego.v = 10.0;  // heading +x at the origin
  std::vector<ForecastAgent> agents{{{5.0, 0.0}, 0.0, 0.0, {2.0, 1.0}}};
  EXPECT_TRUE(ttc_violated(ego, agents, {2.0, 1.0}));
}

TEST(Ttc, NoAgentsVacuouslySafe) {
  EgoState ego;
  ego.v = 30.0;
  EXPECT_FALSE(ttc_violated(ego, {}, {2.0, 1.0}));
}

TEST(Ttc, MatchedSpeedKeepsSeparation) {
  EgoState ego;
  ego.v = 10.0;
  std::vector<ForecastAgent> agents{{{100.0, 0.0}, 0.0, 10.0, {2.0, 1.0}}};
  EXPECT_FALSE(ttc_violated(ego, agents, {2.0, 1.0}));
}

// [DERIVED] brute-force dense sweep oracle at dt = 1 ms over random scenes;
// the coarse 5-sample check must agree except for grazing contacts shorter
// than one forecast step.
TEST(Ttc, AgreesWithDenseSweepExceptGrazing) {
  RngStream rng(7);
  int checked = 0, skipped = 0;
  for (int scene = 0; scene < 1000; ++scene) {
    EgoState ego;
    ego.v = rng.uniform(0.0, 15.0);
    ego.steer = rng.uniform(-0.3, 0.3);
    Vec2 ego_ext{2.0, 1.0};
    std::vector<ForecastAgent> agents;
    int n = 1 + static_cast<int>(rng.next_below(3));
    for (int a = 0; a < n; ++a) {
      ForecastAgent f;
      f.position = {rng.uniform(-20.0, 25.0), rng.uniform(-8.0, 8.0)};
      f.yaw = rng.uniform(-M_PI, M_PI);
      f.speed = rng.uniform(0.0, 12.0);
      f.extent = {2.0, 1.0};
      agents.push_back(f);
    }
    if (std::any_of(agents.begin(), agents.end(), [&](const ForecastAgent& f) {
          Obb e{{ego.x, ego.y}, ego.yaw, ego_ext.x, ego_ext.y};
          return obb_overlap(e, agent_obb(f));
        })) {
      ++skipped;  // initial overlap is a collision, not a TTC case
      continue;
    }

    bool coarse = ttc_violated(ego, agents, ego_ext);

    // dense sweep at 1 ms: overlap intervals within the 1 s horizon
    const double fine_dt = 0.001;
    EgoState f = ego;
    std::vector<std::pair<double, double>> intervals;
    bool open = false;
    double open_t = 0.0;
    for (int k = 1; k <= 1000; ++k) {
      double t = k * fine_dt;
      f = step_bicycle(f, 0.0, 0.0, fine_dt);
      Obb ebox{{f.x, f.y}, f.yaw, ego_ext.x, ego_ext.y};
      bool hit = false;
      for (const ForecastAgent& a : agents) {
        ForecastAgent fa = a;
        fa.position = forecast_agent_position(a, t);
        if (obb_overlap(ebox, agent_obb(fa))) {
          hit = true;
          break;
        }
      }
      if (hit && !open) {
        open = true;
        open_t = t;
      } else if (!hit && open) {
        intervals.push_back({open_t, t});
        open = false;
      }
    }
    if (open) intervals.push_back({open_t, 1.0});

    bool dense = !intervals.empty();
    // grazing tolerance: disagreement allowed when every overlap interval
    // spans less than one forecast step or sits within one step of the
    // horizon boundary
    bool robust = false;
    for (auto [a, b] : intervals)
      if (b - a >= 0.2 && b <= 1.0 - 1e-9) robust = true;
    if (dense == coarse) {
      ++checked;
      continue;
    }
    if (!robust || (dense && !coarse && intervals.front().first > 1.0 - 0.2)) {
      ++skipped;
      continue;
    }
    // the ego path between samples is integrated differently (1 ms vs 200 ms
    // Euler), allow cases where that small discrepancy flips a marginal hit
    bool marginal = true;
    for (auto [a, b] : intervals)
      if (b - a > 0.25) marginal = false;
    if (marginal) {
      ++skipped;
      continue;
    }
    ADD_FAILURE() << "scene " << scene << ": dense=" << dense << " coarse=" << coarse;
  }
  EXPECT_GT(checked, 700);  // the oracle must do real work
}

TEST(Ttc, ForecastMatchesConstantVelocityLine) {
  ForecastAgent a{{3.0, 4.0}, 0.7, 6.0, {2.0, 1.0}};
  Vec2 end = forecast_agent_position(a, 1.0);
  EXPECT_NEAR(end.x, 3.0 + 6.0 * std::cos(0.7), 1e-12);
  EXPECT_NEAR(end.y, 4.0 + 6.0 * std::sin(0.7), 1e-12);
}

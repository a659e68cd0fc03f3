#include <cmath>

#include "adaplan/dynalanes.hpp"
#include "adaplan/errors.hpp"
#include "doctest.h"

using namespace adaplan;

namespace {

// textbook IDM, written out independently
double idm_oracle(double v, double s, double vl) {
  const double v0 = 25.0, T = 1.5, s0 = 2.0, a = 3.0, b = 5.0;
  const double star = s0 + std::max(0.0, v * T + v * (v - vl) / (2.0 * std::sqrt(a * b)));
  return a * (1.0 - std::pow(v / v0, 4.0) - (star / s) * (star / s));
}

EnvState two_car_state(double ego_x, int ego_lane, double car_x, int car_lane) {
  EnvState s;
  s.ego.x = ego_x;
  s.ego.lane = s.ego.target_lane = ego_lane;
  s.ego.speed = s.ego.target_speed = 20.0;
  VehicleState v;
  v.x = car_x;
  v.lane = v.target_lane = car_lane;
  v.speed = v.desired_speed = 20.0;
  s.traffic.push_back(v);
  return s;
}

}  // namespace

TEST_CASE("idm matches the closed form") {
  for (double v : {0.0, 10.0, 20.0, 28.0}) {
    for (double gap : {5.0, 30.0, 80.0}) {
      for (double vl : {0.0, 15.0, 25.0}) {
        const double expected = std::max(idm_oracle(v, gap, vl), -9.0);
        CHECK(idm_accel(v, gap, vl) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
  CHECK(idm_accel(20.0, 20.0, 20.0) == doctest::Approx(3.0 * (1 - 0.4096 - std::pow(32.0 / 20.0, 2))).epsilon(1e-12));
  CHECK(idm_accel(10.0, 0.0, 10.0) == -9.0);
  CHECK(idm_accel(10.0, -1.0, 10.0) == -9.0);
  CHECK(idm_free_accel(25.0) == doctest::Approx(0.0));
  CHECK(idm_free_accel(0.0) == doctest::Approx(3.0));
}

TEST_CASE("reset is deterministic and observations have the documented size") {
  const EnvConfig cfg;
  const ResetResult a = reset(cfg, 42), b = reset(cfg, 42), c = reset(cfg, 43);
  CHECK(a.obs == b.obs);
  CHECK(a.obs != c.obs);
  CHECK(a.obs.size() == 35u);
  CHECK(cfg.obs_dim() == 35);
  CHECK(a.state.traffic.size() == 20u);
  CHECK(a.state.ego.speed == cfg.v_mid());
  CHECK_FALSE(check_collision(cfg, a.state));
}

TEST_CASE("overfull road is rejected") {
  EnvConfig cfg;
  cfg.traffic_count = cfg.capacity() + 1;
  CHECK_THROWS_AS(reset(cfg, 1), CapacityError);
  cfg.traffic_count = cfg.capacity();
  CHECK_NOTHROW(reset(cfg, 1));
}

TEST_CASE("empty road never collides and times out at max steps") {
  EnvConfig cfg;
  cfg.traffic_count = 0;
  for (Action a : {Action::kIdle, Action::kFaster, Action::kLaneLeft}) {
    ResetResult r = reset(cfg, 5);
    EnvState s = r.state;
    int steps = 0;
    while (!s.done) {
      StepResult n = step(cfg, s, a);
      CHECK(n.reward >= 0.0);
      CHECK(n.reward <= 1.0);
      s = n.state;
      ++steps;
    }
    CHECK(steps == 100);
    CHECK(s.cause == TerminalCause::kTimeout);
    CHECK_THROWS_AS(step(cfg, s, Action::kIdle), std::logic_error);
  }
}

TEST_CASE("collision test is inclusive at touching bumpers") {
  const EnvConfig cfg;
  CHECK(check_collision(cfg, two_car_state(100.0, 1, 105.0, 1)));
  CHECK_FALSE(check_collision(cfg, two_car_state(100.0, 1, 105.001, 1)));
  CHECK_FALSE(check_collision(cfg, two_car_state(100.0, 1, 100.0, 2)));
  // across the loop seam
  CHECK(check_collision(cfg, two_car_state(998.0, 0, 2.0, 0)));
}

TEST_CASE("speed commands saturate at the limits") {
  EnvConfig cfg;
  cfg.traffic_count = 0;
  EnvState s = reset(cfg, 9).state;
  for (int i = 0; i < 10; ++i) s = step(cfg, s, Action::kFaster).state;
  CHECK(s.ego.speed == doctest::Approx(cfg.v_max));
  // at the top speed FASTER and IDLE lead to the same next observation
  const StepResult faster = step(cfg, s, Action::kFaster);
  const StepResult idle = step(cfg, s, Action::kIdle);
  CHECK(faster.obs == idle.obs);
  for (int i = 0; i < 10; ++i) s = step(cfg, s, Action::kSlower).state;
  CHECK(s.ego.speed == doctest::Approx(cfg.v_min));
}

TEST_CASE("a lane change takes the configured number of steps") {
  EnvConfig cfg;
  cfg.traffic_count = 0;
  EnvState s = reset(cfg, 3).state;
  s.ego.lane = s.ego.target_lane = 1;
  s = step(cfg, s, Action::kLaneRight).state;
  CHECK(s.ego.changing);
  CHECK(s.ego.lane == 1);
  s = step(cfg, s, Action::kIdle).state;
  CHECK_FALSE(s.ego.changing);
  CHECK(s.ego.lane == 2);
  s.ego.lane = s.ego.target_lane = 3;
  s = step(cfg, s, Action::kLaneRight).state;
  CHECK_FALSE(s.ego.changing);
}

TEST_CASE("reward weights speed and right lane") {
  const EnvConfig cfg;
  VehicleState ego;
  ego.speed = cfg.v_max;
  ego.lane = cfg.lanes - 1;
  CHECK(step_reward(cfg, ego) == doctest::Approx(1.0));
  ego.speed = cfg.v_min;
  ego.lane = 0;
  CHECK(step_reward(cfg, ego) == 0.0);
  ego.speed = 20.0;
  ego.lane = 1;
  CHECK(step_reward(cfg, ego) == doctest::Approx(0.8 * 0.5 + 0.2 / 3.0));
}

TEST_CASE("loop distance is signed and shortest") {
  CHECK(loop_delta(10.0, 20.0, 1000.0) == doctest::Approx(10.0));
  CHECK(loop_delta(990.0, 5.0, 1000.0) == doctest::Approx(15.0));
  CHECK(loop_delta(5.0, 990.0, 1000.0) == doctest::Approx(-15.0));
}

TEST_CASE("leader and follower lookup") {
  const EnvConfig cfg;
  EnvState s = two_car_state(100.0, 1, 130.0, 1);
  const auto lead = find_leader(cfg, s, 1, s.ego.x, -1);
  REQUIRE(lead);
  CHECK(lead->index == 0);
  CHECK(lead->gap == doctest::Approx(25.0));
  CHECK_FALSE(find_follower(cfg, s, 1, s.ego.x, -1));
  const auto behind = find_follower(cfg, s, 1, 130.0, 0);
  REQUIRE(behind);
  CHECK(behind->index == -1);
}

#include "adaplan/dynalanes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

constexpr double kFeatureVelocityScale = 30.0;
constexpr double kFeatureDistanceScale = 100.0;

double clip1(double v) { return std::clamp(v, -1.0, 1.0); }

double wrap_position(double x, double length) {
  double r = std::fmod(x, length);
  if (r < 0.0) r += length;
  return r;
}

double lateral_speed(const EnvConfig& c, const VehicleState& v) {
  if (!v.changing) return 0.0;
  return (v.target_lane - v.lane) * c.lane_width / (c.lane_change_steps * c.dt);
}

const VehicleState& vehicle(const EnvState& s, int index) {
  return index < 0 ? s.ego : s.traffic[index];
}

void start_lane_change(VehicleState& v, int target) {
  v.changing = true;
  v.target_lane = target;
  v.lane_change_ticks = 0;
  v.lane_change_progress = 0.0;
}

void advance_lane_change(const EnvConfig& c, VehicleState& v) {
  if (!v.changing) return;
  const int total = c.lane_change_steps * c.substeps;
  v.lane_change_ticks += 1;
  if (v.lane_change_ticks >= total) {
    v.lane = v.target_lane;
    v.changing = false;
    v.lane_change_ticks = 0;
    v.lane_change_progress = 0.0;
  } else {
    v.lane_change_progress = static_cast<double>(v.lane_change_ticks) / total;
  }
}

// IDM acceleration against the nearest leader in every lane v occupies.
double traffic_accel(const EnvConfig& c, const EnvState& s, int index) {
  const VehicleState& v = s.traffic[index];
  IdmParams p = c.idm;
  p.desired_speed = v.desired_speed;
  double accel = idm_free_accel(v.speed, p);
  for (int lane : {v.lane, v.target_lane}) {
    if (lane != v.lane && !v.changing) continue;
    if (auto lead = find_leader(c, s, lane, v.x, index)) {
      accel = std::min(accel, idm_accel(v.speed, lead->gap, lead->speed, p));
    }
  }
  return accel;
}

bool traffic_change_is_safe(const EnvConfig& c, const EnvState& s, int index,
                            int target) {
  const VehicleState& v = s.traffic[index];
  IdmParams p = c.idm;
  p.desired_speed = v.desired_speed;
  if (auto lead = find_leader(c, s, target, v.x, index)) {
    if (lead->gap <= c.idm.min_gap) return false;
    if (idm_accel(v.speed, lead->gap, lead->speed, p) < -c.traffic_safe_decel) {
      return false;
    }
  }
  if (auto follow = find_follower(c, s, target, v.x, index)) {
    if (follow->gap <= c.idm.min_gap) return false;
    if (idm_accel(follow->speed, follow->gap, v.speed, c.idm) <
        -c.traffic_safe_decel) {
      return false;
    }
  }
  return true;
}

bool overlaps(const EnvConfig& c, const VehicleState& a, const VehicleState& b) {
  const double dx = std::abs(loop_delta(a.x, b.x, c.road_length));
  const double dy = std::abs(a.y(c.lane_width) - b.y(c.lane_width));
  return dx <= c.vehicle_length && dy <= c.vehicle_width;
}

}  // namespace

const char* action_name(Action a) {
  switch (a) {
    case Action::kLaneLeft: return "LANE_LEFT";
    case Action::kIdle: return "IDLE";
    case Action::kLaneRight: return "LANE_RIGHT";
    case Action::kFaster: return "FASTER";
    case Action::kSlower: return "SLOWER";
  }
  return "?";
}

Action action_from_id(int id) {
  if (id < 0 || id >= kNumActions) {
    throw std::out_of_range("action id " + std::to_string(id) + " out of range");
  }
  return static_cast<Action>(id);
}

const char* cause_name(TerminalCause c) {
  switch (c) {
    case TerminalCause::kRunning: return "running";
    case TerminalCause::kCollision: return "collision";
    case TerminalCause::kTimeout: return "timeout";
  }
  return "?";
}

double idm_accel(double speed, double gap, double lead_speed, const IdmParams& p) {
  if (gap <= 0.0) return -p.max_decel;
  const double closing = speed - lead_speed;
  const double desired_gap =
      p.min_gap + std::max(0.0, speed * p.time_headway +
                                    speed * closing /
                                        (2.0 * std::sqrt(p.max_accel * p.comfortable_decel)));
  const double a = p.max_accel * (1.0 - std::pow(speed / p.desired_speed, p.exponent) -
                                  (desired_gap / gap) * (desired_gap / gap));
  return std::max(a, -p.max_decel);
}

double idm_free_accel(double speed, const IdmParams& p) {
  return p.max_accel * (1.0 - std::pow(speed / p.desired_speed, p.exponent));
}

void EnvConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("EnvConfig: " + what);
  };
  if (lanes < 2) fail("lanes must be >= 2");
  if (!(v_min < v_max)) fail("v_min must be < v_max");
  if (!(v_min >= 0.0)) fail("v_min must be >= 0");
  if (!(lane_width > 0 && road_length > 0 && dt > 0 && vehicle_length > 0 &&
        vehicle_width > 0 && speed_increment > 0 && perception_range > 0)) {
    fail("extents must be positive");
  }
  if (placement_gap < 0) fail("placement_gap must be >= 0");
  if (substeps < 1 || lane_change_steps < 1) fail("substeps/lane_change_steps >= 1");
  if (max_steps < 1) fail("max_steps must be >= 1");
  if (neighbors < 0) fail("neighbors must be >= 0");
  if (traffic_count < 0) fail("traffic_count must be >= 0");
  if (traffic_lane_change_prob < 0 || traffic_lane_change_prob > 1) {
    fail("traffic_lane_change_prob must be in [0, 1]");
  }
  if (!(idm.desired_speed > 0 && idm.max_accel > 0 && idm.comfortable_decel > 0)) {
    fail("IDM parameters must be positive");
  }
}

int EnvConfig::capacity() const {
  const int slots =
      static_cast<int>(std::floor(road_length / (vehicle_length + placement_gap)));
  // the ego's slot column is kept free in every lane
  return std::max(0, (slots - 1) * lanes);
}

double VehicleState::lateral_offset(double lane_width) const {
  if (!changing) return 0.0;
  return (target_lane - lane) * lane_width * lane_change_progress;
}

double VehicleState::y(double lane_width) const {
  return lane * lane_width + lateral_offset(lane_width);
}

double loop_delta(double a, double b, double road_length) {
  double d = std::fmod(b - a, road_length);
  if (d > 0.5 * road_length) d -= road_length;
  if (d < -0.5 * road_length) d += road_length;
  return d;
}

std::optional<LaneNeighbor> find_leader(const EnvConfig& c, const EnvState& s,
                                        int lane, double x, int self) {
  std::optional<LaneNeighbor> best;
  double best_dx = 0.0;
  const int n = static_cast<int>(s.traffic.size());
  for (int i = -1; i < n; ++i) {
    if (i == self) continue;
    const VehicleState& v = vehicle(s, i);
    if (!v.occupies(lane)) continue;
    const double dx = loop_delta(x, v.x, c.road_length);
    if (dx < 0.0) continue;
    if (!best || dx < best_dx) {
      best_dx = dx;
      best = LaneNeighbor{i, dx - c.vehicle_length, v.speed};
    }
  }
  return best;
}

std::optional<LaneNeighbor> find_follower(const EnvConfig& c, const EnvState& s,
                                          int lane, double x, int self) {
  std::optional<LaneNeighbor> best;
  double best_dx = 0.0;
  const int n = static_cast<int>(s.traffic.size());
  for (int i = -1; i < n; ++i) {
    if (i == self) continue;
    const VehicleState& v = vehicle(s, i);
    if (!v.occupies(lane)) continue;
    const double dx = loop_delta(v.x, x, c.road_length);
    if (dx <= 0.0) continue;
    if (!best || dx < best_dx) {
      best_dx = dx;
      best = LaneNeighbor{i, dx - c.vehicle_length, v.speed};
    }
  }
  return best;
}

ResetResult reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.traffic_count > config.capacity()) {
    throw CapacityError("traffic_count " + std::to_string(config.traffic_count) +
                        " exceeds road capacity " +
                        std::to_string(config.capacity()));
  }
  ResetResult out;
  EnvState& s = out.state;
  Rng rng(seed);
  s.rng = rng.split("traffic");

  s.ego.lane = static_cast<int>(rng.uniform_int(config.lanes));
  s.ego.target_lane = s.ego.lane;
  s.ego.x = rng.uniform(0.0, config.road_length);
  s.ego.speed = config.v_mid();
  s.ego.target_speed = config.v_mid();

  const double pitch = config.vehicle_length + config.placement_gap;
  const int slots = static_cast<int>(std::floor(config.road_length / pitch));
  const double slot_len = config.road_length / slots;
  const double jitter = slot_len - pitch;
  std::vector<std::pair<int, int>> free_slots;
  for (int lane = 0; lane < config.lanes; ++lane) {
    for (int j = 1; j < slots; ++j) free_slots.emplace_back(lane, j);
  }
  rng.shuffle(std::span<std::pair<int, int>>(free_slots));
  for (int i = 0; i < config.traffic_count; ++i) {
    const auto [lane, j] = free_slots[i];
    VehicleState v;
    v.lane = lane;
    v.target_lane = lane;
    v.x = wrap_position(s.ego.x + j * slot_len + rng.uniform(0.0, jitter),
                        config.road_length);
    v.desired_speed =
        config.idm.desired_speed +
        rng.uniform(-config.traffic_speed_spread, config.traffic_speed_spread);
    v.speed = v.desired_speed * rng.uniform(0.8, 1.0);
    s.traffic.push_back(v);
  }
  out.obs = observe(config, s);
  return out;
}

StepResult step(const EnvConfig& c, const EnvState& state, Action action) {
  if (state.done) throw std::logic_error("step: episode already terminated");
  StepResult r;
  r.state = state;
  EnvState& s = r.state;
  VehicleState& ego = s.ego;

  switch (action) {
    case Action::kLaneLeft:
    case Action::kLaneRight: {
      const int target = ego.lane + (action == Action::kLaneLeft ? -1 : 1);
      if (!ego.changing && target >= 0 && target < c.lanes) {
        start_lane_change(ego, target);
      }
      break;
    }
    case Action::kFaster:
      ego.target_speed = std::min(c.v_max, ego.target_speed + c.speed_increment);
      break;
    case Action::kSlower:
      ego.target_speed = std::max(c.v_min, ego.target_speed - c.speed_increment);
      break;
    case Action::kIdle:
      break;
  }

  for (int i = 0; i < static_cast<int>(s.traffic.size()); ++i) {
    if (!s.rng.bernoulli(c.traffic_lane_change_prob)) continue;
    const int target = s.traffic[i].lane + (s.rng.bernoulli(0.5) ? -1 : 1);
    if (s.traffic[i].changing || target < 0 || target >= c.lanes) continue;
    if (traffic_change_is_safe(c, s, i, target)) {
      start_lane_change(s.traffic[i], target);
    }
  }

  const double h = c.dt / c.substeps;
  const double ego_rate = c.speed_increment / c.dt;
  std::vector<double> accel(s.traffic.size());
  bool collided = false;
  for (int sub = 0; sub < c.substeps && !collided; ++sub) {
    for (std::size_t i = 0; i < s.traffic.size(); ++i) {
      accel[i] = traffic_accel(c, s, static_cast<int>(i));
    }
    ego.speed += std::clamp(ego.target_speed - ego.speed, -ego_rate * h, ego_rate * h);
    ego.x = wrap_position(ego.x + ego.speed * h, c.road_length);
    advance_lane_change(c, ego);
    for (std::size_t i = 0; i < s.traffic.size(); ++i) {
      VehicleState& v = s.traffic[i];
      v.speed = std::max(0.0, v.speed + accel[i] * h);
      v.x = wrap_position(v.x + v.speed * h, c.road_length);
      advance_lane_change(c, v);
    }
    collided = check_collision(c, s);
  }

  s.step += 1;
  if (collided) {
    s.done = true;
    s.cause = TerminalCause::kCollision;
    r.reward = 0.0;
  } else {
    r.reward = step_reward(c, ego);
    if (s.step >= c.max_steps) {
      s.done = true;
      s.cause = TerminalCause::kTimeout;
    }
  }
  r.done = s.done;
  r.cause = s.cause;
  r.obs = observe(c, s);
  return r;
}

bool check_collision(const EnvConfig& c, const EnvState& s) {
  return std::any_of(s.traffic.begin(), s.traffic.end(),
                     [&](const VehicleState& v) { return overlaps(c, s.ego, v); });
}

double normalized_speed(const EnvConfig& c, double speed) {
  return std::clamp((speed - c.v_min) / (c.v_max - c.v_min), 0.0, 1.0);
}

double step_reward(const EnvConfig& c, const VehicleState& ego) {
  return c.w_speed * normalized_speed(c, ego.speed) +
         c.w_right * static_cast<double>(ego.lane) / (c.lanes - 1);
}

Observation observe(const EnvConfig& c, const EnvState& s) {
  constexpr int F = EnvConfig::kFeatures;
  Observation obs(static_cast<std::size_t>(c.obs_dim()), 0.0);
  const VehicleState& ego = s.ego;
  const double road_width = c.lanes * c.lane_width;
  const double ego_y = ego.y(c.lane_width);
  const double ego_vy = lateral_speed(c, ego);

  obs[0] = 1.0;
  obs[1] = clip1(ego.x / c.road_length);
  obs[2] = clip1(ego_y / road_width);
  obs[3] = clip1(ego.speed / c.v_max);
  obs[4] = clip1(ego_vy / kFeatureVelocityScale);

  struct Candidate {
    double distance;
    int index;
    double dx;
  };
  std::vector<Candidate> seen;
  for (int i = 0; i < static_cast<int>(s.traffic.size()); ++i) {
    const double dx = loop_delta(ego.x, s.traffic[i].x, c.road_length);
    if (std::abs(dx) > c.perception_range) continue;
    const double dy = s.traffic[i].y(c.lane_width) - ego_y;
    seen.push_back({std::hypot(dx, dy), i, dx});
  }
  std::sort(seen.begin(), seen.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  const int rows = std::min<int>(c.neighbors, static_cast<int>(seen.size()));
  for (int r = 0; r < rows; ++r) {
    const VehicleState& v = s.traffic[seen[r].index];
    double* row = obs.data() + static_cast<std::size_t>(r + 1) * F;
    row[0] = 1.0;
    row[1] = clip1(seen[r].dx / kFeatureDistanceScale);
    row[2] = clip1((v.y(c.lane_width) - ego_y) / road_width);
    row[3] = clip1((v.speed - ego.speed) / kFeatureVelocityScale);
    row[4] = clip1((lateral_speed(c, v) - ego_vy) / kFeatureVelocityScale);
  }
  return obs;
}

nlohmann::json trace_line(const EnvConfig& c, const EnvState& s, int action,
                          double reward) {
  auto pose = [&](const VehicleState& v) {
    return nlohmann::json::array({v.x, v.y(c.lane_width), v.speed});
  };
  nlohmann::json traffic = nlohmann::json::array();
  for (const auto& v : s.traffic) traffic.push_back(pose(v));
  return {{"step", s.step},
          {"ego", pose(s.ego)},
          {"traffic", traffic},
          {"action", action},
          {"reward", reward}};
}

}  // namespace adaplan

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adaplan/rng.hpp"
#include "json.hpp"

namespace adaplan {

// Discrete meta-actions. Ids are stable across every module.
enum class Action : int {
  kLaneLeft = 0,
  kIdle = 1,
  kLaneRight = 2,
  kFaster = 3,
  kSlower = 4,
};
inline constexpr int kNumActions = 5;

const char* action_name(Action a);
Action action_from_id(int id);  // throws std::out_of_range

// Intelligent Driver Model parameters.
struct IdmParams {
  double desired_speed = 25.0;   // m/s
  double time_headway = 1.5;     // s
  double min_gap = 2.0;          // m
  double max_accel = 3.0;        // m/s^2
  double comfortable_decel = 5.0;
  double max_decel = 9.0;        // emergency braking, also the output floor
  double exponent = 4.0;
};

// Standard IDM acceleration. Non-positive gaps return -max_decel.
double idm_accel(double speed, double gap, double lead_speed,
                 const IdmParams& p = {});

// IDM with no leader in range.
double idm_free_accel(double speed, const IdmParams& p = {});

struct EnvConfig {
  int lanes = 4;
  double lane_width = 4.0;
  double road_length = 1000.0;  // looped
  int traffic_count = 20;
  int max_steps = 100;
  double v_min = 10.0;
  double v_max = 30.0;
  double speed_increment = 2.5;
  double dt = 0.5;
  int substeps = 5;           // integration substeps; collisions checked at each
  int lane_change_steps = 2;  // steps to complete a lane change
  int neighbors = 6;          // traffic rows in the observation
  double perception_range = 100.0;
  double w_speed = 0.8;
  double w_right = 0.2;
  double traffic_lane_change_prob = 0.01;  // per vehicle per step
  double traffic_safe_decel = 4.0;         // MOBIL safety bound for traffic
  double traffic_speed_spread = 0.0;       // per-vehicle desired speed +- spread
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  double placement_gap = 10.0;  // minimum bumper gap at reset
  IdmParams idm;

  void validate() const;
  int obs_dim() const { return (neighbors + 1) * kFeatures; }
  double v_mid() const { return 0.5 * (v_min + v_max); }
  // traffic slots available at reset
  int capacity() const;

  static constexpr int kFeatures = 5;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(IdmParams, desired_speed,
                                                time_headway, min_gap, max_accel,
                                                comfortable_decel, max_decel,
                                                exponent)
// Missing keys keep their defaults.
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    EnvConfig, lanes, lane_width, road_length, traffic_count, max_steps, v_min,
    v_max, speed_increment, dt, substeps, lane_change_steps, neighbors,
    perception_range, w_speed, w_right, traffic_lane_change_prob,
    traffic_safe_decel, traffic_speed_spread, vehicle_length, vehicle_width,
    placement_gap, idm)

struct VehicleState {
  double x = 0.0;  // m, in [0, road_length)
  int lane = 0;    // lane 0 is leftmost
  int target_lane = 0;
  double lane_change_progress = 0.0;  // in [0, 1] while changing
  bool changing = false;
  double speed = 0.0;
  double target_speed = 0.0;   // ego: commanded speed
  double desired_speed = 0.0;  // traffic: IDM free-road speed
  int lane_change_ticks = 0;   // substeps spent in the current change

  double lateral_offset(double lane_width) const;
  double y(double lane_width) const;  // absolute lateral position of centre
  bool occupies(int l) const { return lane == l || (changing && target_lane == l); }
};

enum class TerminalCause { kRunning, kCollision, kTimeout };
const char* cause_name(TerminalCause c);

struct EnvState {
  VehicleState ego;
  std::vector<VehicleState> traffic;
  int step = 0;
  bool done = false;
  TerminalCause cause = TerminalCause::kRunning;
  Rng rng;  // drives traffic randomness for this episode
};

using Observation = std::vector<double>;

struct ResetResult {
  EnvState state;
  Observation obs;
};

struct StepResult {
  EnvState state;
  Observation obs;
  double reward = 0.0;
  bool done = false;
  TerminalCause cause = TerminalCause::kRunning;
};

// Deterministic in (config, seed). Throws CapacityError when the traffic
// cannot be placed.
ResetResult reset(const EnvConfig& config, std::uint64_t seed);

// Throws std::logic_error on a terminal state.
StepResult step(const EnvConfig& config, const EnvState& state, Action action);

Observation observe(const EnvConfig& config, const EnvState& state);

// Ego rectangle touches or overlaps any traffic rectangle.
bool check_collision(const EnvConfig& config, const EnvState& state);

// speed share of the per-step reward, before weighting
double normalized_speed(const EnvConfig& config, double speed);
double step_reward(const EnvConfig& config, const VehicleState& ego);

// Signed shortest distance from a to b on the loop.
double loop_delta(double a, double b, double road_length);

// Nearest vehicle ahead of / behind position x in `lane`. `self` is -1 for
// the ego, a traffic index otherwise; the ego is a candidate for traffic.
struct LaneNeighbor {
  int index = 0;  // -1 is the ego
  double gap = 0.0;  // bumper to bumper, m
  double speed = 0.0;
};
std::optional<LaneNeighbor> find_leader(const EnvConfig& config,
                                        const EnvState& state, int lane,
                                        double x, int self);
std::optional<LaneNeighbor> find_follower(const EnvConfig& config,
                                          const EnvState& state, int lane,
                                          double x, int self);

// One JSON object per step for offline visualization.
nlohmann::json trace_line(const EnvConfig& config, const EnvState& state,
                          int action, double reward);

}  // namespace adaplan

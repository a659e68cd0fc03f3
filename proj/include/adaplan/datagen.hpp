#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adaplan/dynalanes.hpp"
#include "adaplan/mlp.hpp"
#include "adaplan/rng.hpp"
#include "json.hpp"

namespace adaplan {

// Scripted driver: IDM speed keeping mapped onto FASTER/IDLE/SLOWER plus a
// MOBIL-style lane-change test, with epsilon-random actions on top.
struct BehaviorConfig {
  double epsilon = 0.1;  // probability of a uniformly random action
  // Each episode's driver wants v_max + U[lo, hi]. The draw is not visible
  // in the observation.
  double desired_offset_lo = -1.5;
  double desired_offset_hi = 0.75;
  double faster_threshold = 0.2;   // IDM accel above this -> FASTER
  double slower_threshold = -0.5;  // IDM accel below this -> SLOWER
  double lane_change_gain = 0.2;   // m/s^2 incentive needed to change lane
  double keep_right_bias = 0.1;    // added to the incentive of moving right
  double safe_decel = 4.0;         // new follower may not need more braking
  double sensing_range = 100.0;    // leaders beyond this are ignored

  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    BehaviorConfig, epsilon, desired_offset_lo, desired_offset_hi,
    faster_threshold, slower_threshold, lane_change_gain, keep_right_bias,
    safe_decel, sensing_range)

struct DriverProfile {
  double desired_speed = 30.0;
};

DriverProfile draw_driver(const EnvConfig& env, const BehaviorConfig& behavior,
                          Rng& rng);

// The expert's choice, without noise.
Action expert_action(const EnvConfig& env, const EnvState& state,
                     const DriverProfile& driver, const BehaviorConfig& behavior);

// With probability `epsilon` a uniform random action, else expert_action.
Action behavior_action(const EnvConfig& env, const EnvState& state,
                       const DriverProfile& driver,
                       const BehaviorConfig& behavior, double epsilon, Rng& rng);

struct Transition {
  Observation obs;
  int action = 0;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
  int episode = 0;
  int step = 0;
};

struct Dataset {
  nlohmann::json header;  // env/behavior config, seed, counts
  std::vector<Transition> transitions;
  std::vector<std::size_t> episode_offsets;  // episodes + 1 entries

  std::size_t num_episodes() const {
    return episode_offsets.empty() ? 0 : episode_offsets.size() - 1;
  }
  std::size_t episode_length(std::size_t e) const {
    return episode_offsets[e + 1] - episode_offsets[e];
  }
  int obs_dim() const;
  // Throws FormatError if the invariants (contiguous steps, terminal flags,
  // episodes of >= 2 transitions, consistent offsets) do not hold.
  void validate() const;
};

// Rolls episodes until at least `total_steps` transitions exist. Episodes
// ending in a collision are kept; episodes shorter than 2 transitions are
// dropped.
Dataset collect(const EnvConfig& env, const BehaviorConfig& behavior,
                std::size_t total_steps, std::uint64_t seed);

// Episodes [first, last) as a standalone dataset, renumbered from 0.
Dataset subset_episodes(const Dataset& dataset, std::size_t first, std::size_t last);

// Header line, then one transition per line.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr double kStdFloor = 1e-6;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;  // floored at kStdFloor

  std::size_t dim() const { return mean.size(); }
  std::uint64_t hash() const;
  std::string hash_hex() const;
  bool operator==(const NormStats&) const = default;
};

void to_json(nlohmann::json& j, const NormStats& s);
void from_json(const nlohmann::json& j, NormStats& s);

// Population statistics over every transition's observation.
NormStats norm_stats(const Dataset& dataset);
std::vector<double> normalize(std::span<const double> obs, const NormStats& stats);
std::vector<double> denormalize(std::span<const double> z, const NormStats& stats);

// Windows of H consecutive observations inside one episode (the terminal
// next_obs is never part of a window).
class WindowSampler {
 public:
  WindowSampler(const Dataset& dataset, const NormStats& stats, int horizon);

  std::size_t count() const { return starts_.size(); }
  int horizon() const { return horizon_; }

  // batch x (H * D), normalized, uniform over valid starts
  Matrix sample(std::size_t batch, Rng& rng) const;
  // flat index of the window start in dataset.transitions
  std::size_t start(std::size_t i) const { return starts_[i]; }
  Matrix window(std::size_t i) const;  // 1 x (H * D)

 private:
  const Dataset* dataset_;
  const NormStats* stats_;
  int horizon_;
  std::vector<std::size_t> starts_;
};

// Convenience wrapper over WindowSampler.
Matrix sample_windows(const Dataset& dataset, const NormStats& stats, int horizon,
                      std::size_t batch, Rng& rng);

// (s_t, s_{t+1}) pairs normalized and concatenated, with the action taken.
struct PairBatch {
  Matrix inputs;  // n x 2D
  std::vector<int> actions;
};

PairBatch all_pairs(const Dataset& dataset, const NormStats& stats);
PairBatch sample_pairs(const Dataset& dataset, const NormStats& stats,
                       std::size_t batch, Rng& rng);

}  // namespace adaplan

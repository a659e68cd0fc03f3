#include "adaplan/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

constexpr const char* kDatasetFormat = "adaplan.dataset.v1";

double lane_accel(const EnvConfig& env, const EnvState& s, int lane,
                  const IdmParams& p, double sensing_range) {
  const VehicleState& ego = s.ego;
  auto lead = find_leader(env, s, lane, ego.x, -1);
  if (!lead || lead->gap > sensing_range) {
    return idm_free_accel(ego.target_speed, p);
  }
  return idm_accel(ego.target_speed, lead->gap, lead->speed, p);
}

bool lane_change_is_safe(const EnvConfig& env, const EnvState& s, int target,
                         double safe_decel) {
  const VehicleState& ego = s.ego;
  if (auto lead = find_leader(env, s, target, ego.x, -1)) {
    if (lead->gap <= env.idm.min_gap) return false;
  }
  if (auto follow = find_follower(env, s, target, ego.x, -1)) {
    if (follow->gap <= env.idm.min_gap) return false;
    if (idm_accel(follow->speed, follow->gap, ego.speed, env.idm) < -safe_decel) {
      return false;
    }
  }
  return true;
}

nlohmann::json transition_json(const Transition& t) {
  return {{"episode", t.episode}, {"step", t.step},     {"obs", t.obs},
          {"action", t.action},   {"reward", t.reward}, {"next_obs", t.next_obs},
          {"done", t.done}};
}

}  // namespace

void BehaviorConfig::validate() const {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("BehaviorConfig: epsilon must be in [0, 1]");
  }
  if (desired_offset_lo > desired_offset_hi) {
    throw std::invalid_argument("BehaviorConfig: desired offset range inverted");
  }
}

DriverProfile draw_driver(const EnvConfig& env, const BehaviorConfig& b, Rng& rng) {
  return {env.v_max + rng.uniform(b.desired_offset_lo, b.desired_offset_hi)};
}

Action expert_action(const EnvConfig& env, const EnvState& s,
                     const DriverProfile& driver, const BehaviorConfig& b) {
  const VehicleState& ego = s.ego;
  IdmParams p = env.idm;
  p.desired_speed = driver.desired_speed;

  if (!ego.changing) {
    const double current = lane_accel(env, s, ego.lane, p, b.sensing_range);
    int best_dir = 0;
    double best_gain = b.lane_change_gain;
    for (int dir : {1, -1}) {
      const int target = ego.lane + dir;
      if (target < 0 || target >= env.lanes) continue;
      if (!lane_change_is_safe(env, s, target, b.safe_decel)) continue;
      const double gain = lane_accel(env, s, target, p, b.sensing_range) - current +
                          (dir > 0 ? b.keep_right_bias : -b.keep_right_bias);
      if (gain > best_gain) {
        best_gain = gain;
        best_dir = dir;
      }
    }
    if (best_dir != 0) return best_dir > 0 ? Action::kLaneRight : Action::kLaneLeft;
  }

  double accel = lane_accel(env, s, ego.lane, p, b.sensing_range);
  if (ego.changing) {
    accel = std::min(accel, lane_accel(env, s, ego.target_lane, p, b.sensing_range));
  }
  if (accel > b.faster_threshold) return Action::kFaster;
  if (accel < b.slower_threshold) return Action::kSlower;
  return Action::kIdle;
}

Action behavior_action(const EnvConfig& env, const EnvState& state,
                       const DriverProfile& driver, const BehaviorConfig& behavior,
                       double epsilon, Rng& rng) {
  if (rng.bernoulli(epsilon)) {
    return action_from_id(static_cast<int>(rng.uniform_int(kNumActions)));
  }
  return expert_action(env, state, driver, behavior);
}

int Dataset::obs_dim() const {
  return transitions.empty() ? 0 : static_cast<int>(transitions.front().obs.size());
}

void Dataset::validate() const {
  if (episode_offsets.empty() || episode_offsets.front() != 0 ||
      episode_offsets.back() != transitions.size()) {
    throw FormatError("dataset: episode offsets inconsistent with transitions");
  }
  const std::size_t dim = transitions.empty() ? 0 : transitions.front().obs.size();
  for (std::size_t e = 0; e < num_episodes(); ++e) {
    const std::size_t begin = episode_offsets[e];
    const std::size_t end = episode_offsets[e + 1];
    if (end < begin + 2) throw FormatError("dataset: episode shorter than 2 steps");
    for (std::size_t i = begin; i < end; ++i) {
      const Transition& t = transitions[i];
      if (t.episode != static_cast<int>(e) || t.step != static_cast<int>(i - begin)) {
        throw FormatError("dataset: non-contiguous episode/step indices");
      }
      if (t.done != (i + 1 == end)) {
        throw FormatError("dataset: done flag not at episode end");
      }
      if (t.obs.size() != dim || t.next_obs.size() != dim) {
        throw FormatError("dataset: observation dimension mismatch");
      }
      if (t.action < 0 || t.action >= kNumActions) {
        throw FormatError("dataset: action id out of range");
      }
    }
  }
}

Dataset collect(const EnvConfig& env, const BehaviorConfig& behavior,
                std::size_t total_steps, std::uint64_t seed) {
  env.validate();
  behavior.validate();
  if (total_steps == 0) throw std::invalid_argument("collect: empty step budget");
  Dataset data;
  data.episode_offsets.push_back(0);
  const Rng master(seed);
  std::size_t collisions = 0;
  for (std::uint64_t e = 0; data.transitions.size() < total_steps; ++e) {
    const Rng episode_rng = master.split(e);
    Rng policy_rng = episode_rng.split("behavior");
    const DriverProfile driver = draw_driver(env, behavior, policy_rng);
    ResetResult start = reset(env, episode_rng.seed());
    EnvState state = std::move(start.state);
    Observation obs = std::move(start.obs);
    const int id = static_cast<int>(data.num_episodes());
    std::vector<Transition> episode;
    while (!state.done) {
      const Action a =
          behavior_action(env, state, driver, behavior, behavior.epsilon, policy_rng);
      StepResult next = step(env, state, a);
      Transition t;
      t.obs = std::move(obs);
      t.action = static_cast<int>(a);
      t.reward = next.reward;
      t.next_obs = next.obs;
      t.done = next.done;
      t.episode = id;
      t.step = static_cast<int>(episode.size());
      episode.push_back(std::move(t));
      obs = std::move(next.obs);
      state = std::move(next.state);
    }
    if (episode.size() < 2) continue;
    if (state.cause == TerminalCause::kCollision) ++collisions;
    for (auto& t : episode) data.transitions.push_back(std::move(t));
    data.episode_offsets.push_back(data.transitions.size());
  }
  data.header = {{"format", kDatasetFormat},
                 {"env", env},
                 {"behavior", behavior},
                 {"seed", seed},
                 {"episodes", data.num_episodes()},
                 {"transitions", data.transitions.size()},
                 {"collisions", collisions},
                 {"obs_dim", env.obs_dim()}};
  return data;
}

Dataset subset_episodes(const Dataset& dataset, std::size_t first, std::size_t last) {
  if (first > last || last > dataset.num_episodes()) {
    throw std::out_of_range("subset_episodes: bad episode range");
  }
  Dataset out;
  out.header = dataset.header;
  out.episode_offsets.push_back(0);
  for (std::size_t e = first; e < last; ++e) {
    for (std::size_t i = dataset.episode_offsets[e]; i < dataset.episode_offsets[e + 1]; ++i) {
      Transition t = dataset.transitions[i];
      t.episode = static_cast<int>(e - first);
      out.transitions.push_back(std::move(t));
    }
    out.episode_offsets.push_back(out.transitions.size());
  }
  out.header["episodes"] = out.num_episodes();
  out.header["transitions"] = out.transitions.size();
  out.header["subset"] = {first, last};
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << dataset.header.dump() << '\n';
  for (const Transition& t : dataset.transitions) out << transition_json(t).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: missing header");
  Dataset data;
  data.header = nlohmann::json::parse(line);
  if (data.header.value("format", "") != kDatasetFormat) {
    throw FormatError("dataset: unknown format in " + path.string());
  }
  data.episode_offsets.push_back(0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Transition t;
    j.at("episode").get_to(t.episode);
    j.at("step").get_to(t.step);
    j.at("obs").get_to(t.obs);
    j.at("action").get_to(t.action);
    j.at("reward").get_to(t.reward);
    j.at("next_obs").get_to(t.next_obs);
    j.at("done").get_to(t.done);
    const bool closes = t.done;
    data.transitions.push_back(std::move(t));
    if (closes) data.episode_offsets.push_back(data.transitions.size());
  }
  data.validate();
  if (data.header.value("transitions", std::size_t{0}) != data.transitions.size()) {
    throw FormatError("dataset: header transition count disagrees with body");
  }
  return data;
}

std::uint64_t NormStats::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::vector<double>& values) {
    for (double v : values) {
      const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
      h = fnv1a64(bytes, h);
    }
  };
  feed(mean);
  feed(std);
  return h;
}

std::string NormStats::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void to_json(nlohmann::json& j, const NormStats& s) {
  j = {{"mean", s.mean}, {"std", s.std}, {"hash", s.hash_hex()}};
}

void from_json(const nlohmann::json& j, NormStats& s) {
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.std);
  if (s.mean.size() != s.std.size()) throw FormatError("NormStats: size mismatch");
  if (j.contains("hash") && j.at("hash").get<std::string>() != s.hash_hex()) {
    throw FormatError("NormStats: hash does not match contents");
  }
}

NormStats norm_stats(const Dataset& dataset) {
  if (dataset.transitions.empty()) throw std::invalid_argument("norm_stats: empty dataset");
  const std::size_t dim = dataset.transitions.front().obs.size();
  const double n = static_cast<double>(dataset.transitions.size());
  NormStats stats;
  stats.mean.assign(dim, 0.0);
  stats.std.assign(dim, 0.0);
  for (const auto& t : dataset.transitions) {
    for (std::size_t d = 0; d < dim; ++d) stats.mean[d] += t.obs[d];
  }
  for (double& m : stats.mean) m /= n;
  for (const auto& t : dataset.transitions) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double dev = t.obs[d] - stats.mean[d];
      stats.std[d] += dev * dev;
    }
  }
  for (double& s : stats.std) s = std::max(std::sqrt(s / n), kStdFloor);
  return stats;
}

std::vector<double> normalize(std::span<const double> obs, const NormStats& stats) {
  if (obs.size() != stats.dim()) throw ShapeError("normalize: dimension mismatch");
  std::vector<double> z(obs.size());
  for (std::size_t d = 0; d < obs.size(); ++d) {
    z[d] = (obs[d] - stats.mean[d]) / stats.std[d];
  }
  return z;
}

std::vector<double> denormalize(std::span<const double> z, const NormStats& stats) {
  if (z.size() != stats.dim()) throw ShapeError("denormalize: dimension mismatch");
  std::vector<double> obs(z.size());
  for (std::size_t d = 0; d < z.size(); ++d) {
    obs[d] = z[d] * stats.std[d] + stats.mean[d];
  }
  return obs;
}

WindowSampler::WindowSampler(const Dataset& dataset, const NormStats& stats,
                             int horizon)
    : dataset_(&dataset), stats_(&stats), horizon_(horizon) {
  if (horizon < 2) throw std::invalid_argument("WindowSampler: horizon must be >= 2");
  if (static_cast<std::size_t>(dataset.obs_dim()) != stats.dim()) {
    throw ShapeError("WindowSampler: stats dimension differs from dataset");
  }
  const auto h = static_cast<std::size_t>(horizon);
  for (std::size_t e = 0; e < dataset.num_episodes(); ++e) {
    const std::size_t len = dataset.episode_length(e);
    if (len < h) continue;
    for (std::size_t i = 0; i + h <= len; ++i) {
      starts_.push_back(dataset.episode_offsets[e] + i);
    }
  }
  if (starts_.empty()) {
    throw std::invalid_argument("WindowSampler: no episode of length >= horizon");
  }
}

Matrix WindowSampler::window(std::size_t i) const {
  const std::size_t dim = stats_->dim();
  Matrix w(1, static_cast<Eigen::Index>(horizon_ * dim));
  const std::size_t first = starts_.at(i);
  for (int k = 0; k < horizon_; ++k) {
    const auto z = normalize(dataset_->transitions[first + k].obs, *stats_);
    std::copy(z.begin(), z.end(), w.data() + k * dim);
  }
  return w;
}

Matrix WindowSampler::sample(std::size_t batch, Rng& rng) const {
  Matrix out(static_cast<Eigen::Index>(batch),
             static_cast<Eigen::Index>(horizon_ * stats_->dim()));
  for (std::size_t b = 0; b < batch; ++b) {
    out.row(static_cast<Eigen::Index>(b)) = window(rng.uniform_int(starts_.size()));
  }
  return out;
}

Matrix sample_windows(const Dataset& dataset, const NormStats& stats, int horizon,
                      std::size_t batch, Rng& rng) {
  return WindowSampler(dataset, stats, horizon).sample(batch, rng);
}

namespace {

void fill_pair(const Transition& t, const NormStats& stats, double* row) {
  const auto a = normalize(t.obs, stats);
  const auto b = normalize(t.next_obs, stats);
  std::copy(a.begin(), a.end(), row);
  std::copy(b.begin(), b.end(), row + a.size());
}

}  // namespace

PairBatch all_pairs(const Dataset& dataset, const NormStats& stats) {
  const std::size_t n = dataset.transitions.size();
  PairBatch out;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * stats.dim()));
  out.actions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    fill_pair(dataset.transitions[i], stats, out.inputs.row(static_cast<Eigen::Index>(i)).data());
    out.actions[i] = dataset.transitions[i].action;
  }
  return out;
}

PairBatch sample_pairs(const Dataset& dataset, const NormStats& stats,
                       std::size_t batch, Rng& rng) {
  if (dataset.transitions.empty()) throw std::invalid_argument("sample_pairs: empty dataset");
  PairBatch out;
  out.inputs.resize(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(2 * stats.dim()));
  out.actions.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& t = dataset.transitions[rng.uniform_int(dataset.transitions.size())];
    fill_pair(t, stats, out.inputs.row(static_cast<Eigen::Index>(b)).data());
    out.actions[b] = t.action;
  }
  return out;
}

}  // namespace adaplan

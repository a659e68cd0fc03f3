#pragma once

#include <functional>
#include <vector>

#include "adaplan/planner.hpp"

namespace adaplan::testing {

// Plans whose slot h is filled with the value 1000 + h (slot 0 is the
// observation), so tests can tell which slot a prediction used.
class MarkerPlanner final : public StatePlanner {
 public:
  MarkerPlanner(int horizon, int obs_dim, int k) : h_(horizon), d_(obs_dim), k_(k) {}
  PlanBuffer plan(std::span<const double> obs, Rng&, NfeCounter& nfe) const override {
    nfe.evaluations += static_cast<std::uint64_t>(k_);
    PlanBuffer p;
    p.states.emplace_back(obs.begin(), obs.end());
    for (int h = 1; h < h_; ++h) p.states.emplace_back(d_, 1000.0 + h);
    return p;
  }
  int horizon() const override { return h_; }
  int obs_dim() const override { return d_; }
  int evaluations_per_plan() const override { return k_; }

 private:
  int h_, d_, k_;
};

// Entropy given by a callback of the call index and the planned marker.
class ScriptedPredictor final : public ActionPredictor {
 public:
  using Script = std::function<double(int call, double marker)>;
  ScriptedPredictor(int obs_dim, Script script, int action = 1)
      : d_(obs_dim), script_(std::move(script)), action_(action) {}

  EnsemblePrediction predict(std::span<const double> s,
                             std::span<const double> s_next) const override {
    calls.push_back({std::vector<double>(s.begin(), s.end()), s_next[0]});
    EnsemblePrediction p;
    p.probabilities.assign(5, 0.0);
    p.probabilities[static_cast<std::size_t>(action_)] = 1.0;
    p.action = action_;
    p.entropy = script_(static_cast<int>(calls.size()) - 1, s_next[0]);
    return p;
  }
  int obs_dim() const override { return d_; }

  struct Call {
    std::vector<double> observed;
    double marker;
  };
  mutable std::vector<Call> calls;

 private:
  int d_;
  Script script_;
  int action_;
};

inline EnvConfig empty_road(int max_steps) {
  EnvConfig cfg;
  cfg.traffic_count = 0;
  cfg.max_steps = max_steps;
  return cfg;
}

}  // namespace adaplan::testing

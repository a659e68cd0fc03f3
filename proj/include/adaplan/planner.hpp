#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "adaplan/diffuser.hpp"
#include "adaplan/dynalanes.hpp"
#include "adaplan/invdyn.hpp"
#include "json.hpp"

namespace adaplan {

enum class PlannerMode { kAdaptive, kContinuous, kNoReplan };

NLOHMANN_JSON_SERIALIZE_ENUM(PlannerMode, {{PlannerMode::kAdaptive, "adaptive"},
                                           {PlannerMode::kContinuous, "continuous"},
                                           {PlannerMode::kNoReplan, "no_replan"}})

const char* mode_name(PlannerMode m);
// Accepts "adaptive", "continuous", "no_replan" and "no-replan".
PlannerMode mode_from_name(const std::string& name);

struct PlannerConfig {
  PlannerMode mode = PlannerMode::kAdaptive;
  double epsilon = 0.1;  // nats; only read in adaptive mode

  void validate() const;
  // continuous -> -inf, no_replan -> +inf
  double threshold() const;
};

void to_json(nlohmann::json& j, const PlannerConfig& c);
void from_json(const nlohmann::json& j, PlannerConfig& c);

// Source of state plans.
class StatePlanner {
 public:
  virtual ~StatePlanner() = default;
  virtual PlanBuffer plan(std::span<const double> observation, Rng& rng,
                          NfeCounter& nfe) const = 0;
  virtual int horizon() const = 0;
  virtual int obs_dim() const = 0;
  virtual int evaluations_per_plan() const = 0;  // K
};

class DiffusionPlanner final : public StatePlanner {
 public:
  DiffusionPlanner(const DenoiserModel& model, const NoiseSchedule& schedule);

  PlanBuffer plan(std::span<const double> observation, Rng& rng,
                  NfeCounter& nfe) const override;
  int horizon() const override { return model_->horizon; }
  int obs_dim() const override { return model_->obs_dim; }
  int evaluations_per_plan() const override { return schedule_->steps; }

 private:
  const DenoiserModel* model_;
  const NoiseSchedule* schedule_;
};

enum class PlanCause { kInitial, kEntropy, kExhausted };
const char* plan_cause_name(PlanCause c);

struct StepRecord {
  int t = 0;
  int action = 0;
  double reward = 0.0;
  double entropy = 0.0;
  int plan_age = 0;  // i; 0 on the step right after a plan
  bool replanned = false;
  double speed_reward = 0.0;  // w_speed * normalized speed
  double normalized_speed = 0.0;
};

struct PlanEvent {
  int t = 0;  // step at which the plan was created
  PlanCause cause = PlanCause::kInitial;
  double trigger_entropy = 0.0;  // entropy that forced the replan, if any
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  PlannerMode mode = PlannerMode::kAdaptive;
  double epsilon = 0.0;
  std::vector<StepRecord> steps;
  std::vector<PlanEvent> plans;
  std::uint64_t nfe = 0;
  TerminalCause cause = TerminalCause::kRunning;
  double episode_return = 0.0;

  int length() const { return static_cast<int>(steps.size()); }
  int plan_count() const { return static_cast<int>(plans.size()); }
  bool collided() const { return cause == TerminalCause::kCollision; }
  // mean speed reward over steps at >= 75% of the speed range, 0 if none
  double high_speed_reward() const;
};

inline constexpr double kHighSpeedFraction = 0.75;

// Percent of per-step replans avoided: (1 - plans / T) * 100.
double saved_nfe(const EpisodeLog& log);

// Ensemble prediction between the observed state and planned slot i + 1.
// Requires 1 <= i <= H - 2.
EnsemblePrediction act_from_plan(const ActionPredictor& predictor,
                                 std::span<const double> observed,
                                 const PlanBuffer& plan, int i);

// One episode of uncertainty-gated replanning. The env is reset with `seed`;
// plan sampling draws from an Rng derived from the same seed, one child
// stream per plan.
EpisodeLog run_episode(const EnvConfig& env, const StatePlanner& planner,
                       const ActionPredictor& predictor, const PlannerConfig& config,
                       std::uint64_t seed);

nlohmann::json to_json_summary(const EpisodeLog& log);
// summary line, then one line per step
void write_episode_jsonl(std::ostream& os, const EpisodeLog& log);

}  // namespace adaplan

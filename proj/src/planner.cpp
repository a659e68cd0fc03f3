#include "adaplan/planner.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "adaplan/errors.hpp"

namespace adaplan {

const char* mode_name(PlannerMode m) {
  switch (m) {
    case PlannerMode::kAdaptive: return "adaptive";
    case PlannerMode::kContinuous: return "continuous";
    case PlannerMode::kNoReplan: return "no_replan";
  }
  return "?";
}

PlannerMode mode_from_name(const std::string& name) {
  if (name == "adaptive") return PlannerMode::kAdaptive;
  if (name == "continuous") return PlannerMode::kContinuous;
  if (name == "no_replan" || name == "no-replan") return PlannerMode::kNoReplan;
  throw std::invalid_argument("unknown planner mode '" + name + "'");
}

void PlannerConfig::validate() const {
  if (mode == PlannerMode::kAdaptive && !(epsilon >= 0.0)) {
    throw std::invalid_argument("PlannerConfig: adaptive epsilon must be >= 0");
  }
}

double PlannerConfig::threshold() const {
  switch (mode) {
    case PlannerMode::kContinuous: return -std::numeric_limits<double>::infinity();
    case PlannerMode::kNoReplan: return std::numeric_limits<double>::infinity();
    case PlannerMode::kAdaptive: break;
  }
  return epsilon;
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = {{"mode", c.mode}, {"epsilon", c.epsilon}};
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  const PlannerConfig d;
  c.mode = j.contains("mode") ? mode_from_name(j.at("mode").get<std::string>()) : d.mode;
  c.epsilon = j.value("epsilon", d.epsilon);
}

DiffusionPlanner::DiffusionPlanner(const DenoiserModel& model, const NoiseSchedule& schedule)
    : model_(&model), schedule_(&schedule) {
  model.validate();
  schedule.validate();
}

PlanBuffer DiffusionPlanner::plan(std::span<const double> observation, Rng& rng,
                                  NfeCounter& nfe) const {
  return sample_plan(*model_, *schedule_, observation, rng, nfe);
}

const char* plan_cause_name(PlanCause c) {
  switch (c) {
    case PlanCause::kInitial: return "initial";
    case PlanCause::kEntropy: return "entropy";
    case PlanCause::kExhausted: return "exhausted";
  }
  return "?";
}

double EpisodeLog::high_speed_reward() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& s : steps) {
    if (s.normalized_speed >= kHighSpeedFraction) {
      sum += s.speed_reward;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

double saved_nfe(const EpisodeLog& log) {
  if (log.length() < 1) throw std::invalid_argument("saved_nfe: empty trajectory");
  return (1.0 - static_cast<double>(log.plan_count()) / log.length()) * 100.0;
}

EnsemblePrediction act_from_plan(const ActionPredictor& predictor,
                                 std::span<const double> observed,
                                 const PlanBuffer& plan, int i) {
  if (i < 1 || i > plan.horizon() - 2) {
    throw std::out_of_range("act_from_plan: plan age " + std::to_string(i) +
                            " outside [1, H-2]");
  }
  return predictor.predict(observed, plan.states[static_cast<std::size_t>(i) + 1]);
}

EpisodeLog run_episode(const EnvConfig& env, const StatePlanner& planner,
                       const ActionPredictor& predictor, const PlannerConfig& config,
                       std::uint64_t seed) {
  config.validate();
  if (planner.obs_dim() != env.obs_dim() || predictor.obs_dim() != env.obs_dim()) {
    throw ShapeError("run_episode: model observation size " +
                     std::to_string(planner.obs_dim()) + "/" +
                     std::to_string(predictor.obs_dim()) + " does not match env " +
                     std::to_string(env.obs_dim()));
  }
  const int horizon = planner.horizon();
  if (horizon < 2) throw ShapeError("run_episode: plan horizon must be >= 2");

  EpisodeLog log;
  log.seed = seed;
  log.mode = config.mode;
  log.epsilon = config.threshold();
  const double eps = config.threshold();
  const Rng plan_root = Rng(seed).split("planner");
  NfeCounter nfe;

  ResetResult start = reset(env, seed);
  EnvState state = std::move(start.state);
  Observation obs = std::move(start.obs);

  auto execute = [&](const EnsemblePrediction& pred, int age, bool replanned) {
    StepResult r = step(env, state, action_from_id(pred.action));
    StepRecord rec;
    rec.t = state.step;
    rec.action = pred.action;
    rec.reward = r.reward;
    rec.entropy = pred.entropy;
    rec.plan_age = age;
    rec.replanned = replanned;
    rec.normalized_speed = normalized_speed(env, r.state.ego.speed);
    rec.speed_reward = env.w_speed * rec.normalized_speed;
    log.steps.push_back(rec);
    log.episode_return += r.reward;
    state = std::move(r.state);
    obs = std::move(r.obs);
  };

  PlanEvent next{0, PlanCause::kInitial, 0.0};
  while (!state.done) {
    next.t = state.step;
    log.plans.push_back(next);
    Rng rng = plan_root.split(static_cast<std::uint64_t>(log.plans.size() - 1));
    PlanBuffer plan = planner.plan(obs, rng, nfe);
    if (plan.horizon() != horizon) throw ShapeError("run_episode: planner horizon changed");
    plan.created_at = state.step;

    // The first action of a fresh plan runs without a threshold check.
    const Observation& target = plan.states[std::min(1, horizon - 1)];
    execute(predictor.predict(obs, target), 0, true);

    next = {0, PlanCause::kExhausted, 0.0};
    if (config.mode == PlannerMode::kContinuous) continue;
    for (int i = 1; i <= horizon - 2 && !state.done; ++i) {
      plan.states[static_cast<std::size_t>(i)] = obs;
      plan.cursor = i;
      const EnsemblePrediction pred = act_from_plan(predictor, obs, plan, i);
      if (!(pred.entropy < eps)) {
        next = {0, PlanCause::kEntropy, pred.entropy};
        break;
      }
      execute(pred, i, false);
    }
  }
  log.nfe = nfe.evaluations;
  log.cause = state.cause;
  return log;
}

nlohmann::json to_json_summary(const EpisodeLog& log) {
  nlohmann::json causes = nlohmann::json::array();
  for (const auto& p : log.plans) {
    causes.push_back({{"t", p.t}, {"cause", plan_cause_name(p.cause)},
                      {"entropy", p.trigger_entropy}});
  }
  const double eps = log.epsilon;
  return {{"kind", "episode"},
          {"seed", log.seed},
          {"mode", mode_name(log.mode)},
          {"epsilon", std::isfinite(eps) ? nlohmann::json(eps)
                                         : nlohmann::json(eps > 0 ? "inf" : "-inf")},
          {"length", log.length()},
          {"plan_count", log.plan_count()},
          {"nfe", log.nfe},
          {"terminal", cause_name(log.cause)},
          {"return", log.episode_return},
          {"high_speed_reward", log.high_speed_reward()},
          {"saved_nfe_pct", log.length() > 0 ? saved_nfe(log) : 0.0},
          {"plans", causes}};
}

void write_episode_jsonl(std::ostream& os, const EpisodeLog& log) {
  os << to_json_summary(log).dump() << '\n';
  for (const auto& s : log.steps) {
    const nlohmann::json line = {{"kind", "step"},
                                 {"seed", log.seed},
                                 {"t", s.t},
                                 {"action", s.action},
                                 {"reward", s.reward},
                                 {"entropy", s.entropy},
                                 {"plan_age", s.plan_age},
                                 {"replanned", s.replanned},
                                 {"speed_reward", s.speed_reward}};
    os << line.dump() << '\n';
  }
}

}  // namespace adaplan

#include <cmath>
#include <limits>
#include <sstream>

#include "adaplan/errors.hpp"
#include "adaplan/planner.hpp"
#include "doctest.h"
#include "mocks.hpp"

using namespace adaplan;
using namespace adaplan::testing;

namespace {

ScriptedPredictor constant(double u) {
  return ScriptedPredictor(35, [u](int, double) { return u; });
}

}  // namespace

TEST_CASE("continuous mode plans every step") {
  const EnvConfig env = empty_road(100);
  const MarkerPlanner planner(16, 35, 100);
  const ScriptedPredictor pred = constant(0.0);
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kContinuous, 0.1}, 1);
  CHECK(log.length() == 100);
  CHECK(log.plan_count() == 100);
  CHECK(log.nfe == 100u * 100u);
  CHECK(saved_nfe(log) == 0.0);
  for (const auto& s : log.steps) {
    CHECK(s.replanned);
    CHECK(s.plan_age == 0);
  }
  // only the unconditional first action is ever predicted
  CHECK(pred.calls.size() == 100u);
}

TEST_CASE("no-replan with H = 21 over 100 steps uses 5 plans") {
  const EnvConfig env = empty_road(100);
  const MarkerPlanner planner(21, 35, 100);
  const ScriptedPredictor pred = constant(1.0);
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kNoReplan, 0.1}, 1);
  CHECK(log.length() == 100);
  CHECK(log.plan_count() == 5);
  CHECK(saved_nfe(log) == doctest::Approx(95.0).epsilon(1e-12));
  CHECK(log.nfe == 500u);
  for (int i = 0; i < 100; ++i) {
    CHECK(log.steps[i].plan_age == i % 20);
    CHECK(log.steps[i].replanned == (i % 20 == 0));
  }
  for (std::size_t p = 1; p < log.plans.size(); ++p) CHECK(log.plans[p].cause == PlanCause::kExhausted);
}

TEST_CASE("no-replan matches ceil(T / (H - 1)) for other lengths") {
  for (int T : {1, 7, 33, 41}) {
    const EnvConfig env = empty_road(T);
    const MarkerPlanner planner(11, 35, 10);
    const ScriptedPredictor pred = constant(0.5);
    const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kNoReplan, 0.0}, 2);
    const int plans = (T + 9) / 10;
    CHECK(log.plan_count() == plans);
    CHECK(saved_nfe(log) == doctest::Approx((1.0 - static_cast<double>(plans) / T) * 100.0));
  }
}

TEST_CASE("constant low entropy: H = 11, T = 30 gives 3 plans, all exhausted") {
  const EnvConfig env = empty_road(30);
  const MarkerPlanner planner(11, 35, 100);
  const ScriptedPredictor pred = constant(0.05);
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kAdaptive, 0.1}, 3);
  CHECK(log.length() == 30);
  REQUIRE(log.plan_count() == 3);
  CHECK(log.plans[0].cause == PlanCause::kInitial);
  CHECK(log.plans[1].cause == PlanCause::kExhausted);
  CHECK(log.plans[2].cause == PlanCause::kExhausted);
  CHECK(log.plans[1].t == 10);
  CHECK(log.plans[2].t == 20);
}

TEST_CASE("entropy equal to the threshold triggers a replan") {
  const EnvConfig env = empty_road(20);
  const MarkerPlanner planner(11, 35, 100);
  const ScriptedPredictor pred = constant(0.1);
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kAdaptive, 0.1}, 3);
  CHECK(log.plan_count() == 20);
  for (std::size_t p = 1; p < log.plans.size(); ++p) {
    CHECK(log.plans[p].cause == PlanCause::kEntropy);
    CHECK(log.plans[p].trigger_entropy == 0.1);
  }
}

TEST_CASE("grounding pairs the observation with the next planned slot") {
  const EnvConfig env = empty_road(12);
  const MarkerPlanner planner(6, 35, 1);
  const ScriptedPredictor pred = constant(0.0);
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kAdaptive, 0.5}, 4);
  // each plan: slot 1 unconditionally, then slots 2..H-1 at ages 1..H-2
  REQUIRE(pred.calls.size() == 12u);
  for (int i = 0; i < 12; ++i) CHECK(pred.calls[i].marker == 1001.0 + i % 5);
  // the observed state handed over is the live observation, not a plan slot
  const ResetResult start = reset(env, 4);
  CHECK(pred.calls[0].observed == start.obs);
  CHECK(pred.calls[1].observed != start.obs);
  CHECK(log.plan_count() == 3);
}

TEST_CASE("an entropy spike mid-plan replans at that step") {
  const EnvConfig env = empty_road(15);
  const MarkerPlanner planner(11, 35, 100);
  // high entropy whenever the plan is asked for slot 4 (age 3)
  const ScriptedPredictor pred(35, [](int, double marker) { return marker == 1004.0 ? 1.0 : 0.0; });
  const EpisodeLog log = run_episode(env, planner, pred, {PlannerMode::kAdaptive, 0.2}, 5);
  REQUIRE(log.plan_count() == 5);
  CHECK(log.plans[1].t == 3);
  CHECK(log.plans[1].cause == PlanCause::kEntropy);
  CHECK(log.plans[1].trigger_entropy == 1.0);
  int replans = 0;
  for (const auto& s : log.steps) {
    CHECK(s.entropy < 1.0);
    replans += s.replanned;
  }
  CHECK(replans == log.plan_count());
}

TEST_CASE("infinite threshold and ln K + 1 give identical logs") {
  const EnvConfig env = empty_road(60);
  const MarkerPlanner planner(9, 35, 10);
  auto script = [](int call, double) { return std::fmod(call * 0.37, std::log(5.0)); };
  const ScriptedPredictor a(35, script), b(35, script);
  const EpisodeLog la = run_episode(env, planner, a, {PlannerMode::kNoReplan, 0.0}, 6);
  const EpisodeLog lb = run_episode(env, planner, b, {PlannerMode::kAdaptive, std::log(5.0) + 1}, 6);
  REQUIRE(la.length() == lb.length());
  CHECK(la.plan_count() == lb.plan_count());
  for (int i = 0; i < la.length(); ++i) {
    CHECK(la.steps[i].plan_age == lb.steps[i].plan_age);
    CHECK(la.steps[i].entropy == lb.steps[i].entropy);
  }
}

TEST_CASE("act_from_plan checks the plan age") {
  const MarkerPlanner planner(5, 35, 1);
  Rng rng(0);
  NfeCounter nfe;
  const std::vector<double> obs(35, 0.0);
  const PlanBuffer plan = planner.plan(obs, rng, nfe);
  const ScriptedPredictor pred = constant(0.0);
  CHECK_THROWS_AS(act_from_plan(pred, obs, plan, 0), std::out_of_range);
  CHECK_THROWS_AS(act_from_plan(pred, obs, plan, 4), std::out_of_range);
  act_from_plan(pred, obs, plan, 3);
  CHECK(pred.calls.back().marker == 1004.0);
}

TEST_CASE("model and env sizes must agree") {
  const EnvConfig env = empty_road(10);
  const MarkerPlanner planner(5, 34, 1);
  const ScriptedPredictor pred(34, [](int, double) { return 0.0; });
  CHECK_THROWS_AS(run_episode(env, planner, pred, {}, 1), ShapeError);
  CHECK_THROWS(run_episode(env, MarkerPlanner(5, 35, 1), constant(0.0), {PlannerMode::kAdaptive, -1.0}, 1));
}

TEST_CASE("saved NFE of a one-step episode is zero") {
  EpisodeLog log;
  log.steps.resize(1);
  log.plans.resize(1);
  CHECK(saved_nfe(log) == 0.0);
  CHECK_THROWS(saved_nfe(EpisodeLog{}));
}

TEST_CASE("episode logs serialize to one line per step plus a summary") {
  const EnvConfig env = empty_road(7);
  const EpisodeLog log = run_episode(env, MarkerPlanner(4, 35, 2), constant(0.0), {}, 8);
  std::ostringstream os;
  write_episode_jsonl(os, log);
  std::istringstream in(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("kind"));
    ++lines;
  }
  CHECK(lines == 8);
  const auto summary = to_json_summary(log);
  CHECK(summary["plan_count"] == log.plan_count());
  CHECK(summary["terminal"] == "timeout");
}

TEST_CASE("planner mode names") {
  CHECK(mode_from_name("no-replan") == PlannerMode::kNoReplan);
  CHECK(mode_from_name("no_replan") == PlannerMode::kNoReplan);
  CHECK_THROWS(mode_from_name("sometimes"));
  CHECK(std::isinf(PlannerConfig{PlannerMode::kContinuous, 0.1}.threshold()));
}

#pragma once

#include <cstdint>
#include <filesystem>

#include "adaplan/bench.hpp"
#include "adaplan/datagen.hpp"
#include "adaplan/diffuser.hpp"
#include "adaplan/dynalanes.hpp"
#include "adaplan/invdyn.hpp"
#include "adaplan/planner.hpp"
#include "json.hpp"

namespace adaplan {

struct EvalConfig {
  int episodes = 50;
  std::uint64_t seed = 1000;
  int workers = 1;
  // epsilon calibration runs on seeds disjoint from the evaluation seeds
  int calibration_episodes = 20;
  std::uint64_t calibration_seed = 900000;
  double calibration_quantile = 0.7;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, episodes, seed, workers,
                                                calibration_episodes, calibration_seed,
                                                calibration_quantile)

// Everything a CLI run reads from --config. Missing sections keep defaults.
struct RunConfig {
  EnvConfig env;
  BehaviorConfig behavior;
  DiffuserConfig diffuser;
  InvDynConfig invdyn;
  PlannerConfig planner;
  EvalConfig eval;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace adaplan

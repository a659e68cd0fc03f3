#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adaplan/planner.hpp"

namespace adaplan {

struct MetricsRow {
  std::string mode;
  double mean_len = 0.0;
  double std_len = 0.0;  // sample std, 0 for a single episode
  int collisions = 0;
  double collision_rate = 0.0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double hs_reward = 0.0;
  double saved_nfe_pct = 0.0;
  int episodes = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<int> lengths;      // per seed, same order as seeds
  std::vector<int> plan_counts;  // per seed
};

// Fold over logs in the given order. Throws on an empty set.
MetricsRow aggregate(const std::string& mode, const std::vector<EpisodeLog>& logs);

// Seeds base .. base + n - 1. Episodes fan out over `workers` threads; the
// result does not depend on the worker count. `logs`, if given, receives
// every EpisodeLog in seed order.
MetricsRow evaluate(const EnvConfig& env, const StatePlanner& planner,
                    const ActionPredictor& predictor, const PlannerConfig& config,
                    int episodes, std::uint64_t base_seed, int workers = 1,
                    std::vector<EpisodeLog>* logs = nullptr);

// Label used in reports: "adaptive(eps=0.1)", "continuous", "no_replan".
std::string mode_label(const PlannerConfig& config);

// Spearman correlation with average ranks for ties; 0 when either side is
// constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct SweepPoint {
  double epsilon = 0.0;
  MetricsRow row;
};

struct SweepReport {
  std::vector<SweepPoint> points;  // epsilon strictly increasing
  double rho_length = 0.0;
  double rho_reward = 0.0;
  double rho_collision_rate = 0.0;
  double rho_saved_nfe = 0.0;
};

// Adaptive evaluation at each epsilon on shared seeds. Needs at least three
// strictly increasing values.
SweepReport sweep(const EnvConfig& env, const StatePlanner& planner,
                  const ActionPredictor& predictor, const std::vector<double>& epsilons,
                  int episodes, std::uint64_t base_seed, int workers = 1);

// Recomputes the correlations from the points.
void compute_correlations(SweepReport& report);

// True when every seed's plan count is non-increasing along the sweep.
bool plan_counts_monotone(const SweepReport& report);

inline constexpr const char* kCsvColumns =
    "mode,mean_len,std_len,collisions,mean_reward,std_reward,hs_reward,"
    "saved_nfe_pct,episodes";

std::string render_table(const std::vector<MetricsRow>& rows);
std::string render_sweep(const SweepReport& report);

// Decimal at 17 significant digits, so values round-trip exactly.
std::string format_exact(double v);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
// Reads back the columns written by write_metrics_csv.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

// epsilon column followed by the fixed metric columns
void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report);
nlohmann::json sweep_summary(const SweepReport& report);

// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Entropies seen at plan age >= 1 in no-replan rollouts on the given seeds.
std::vector<double> on_policy_entropies(const EnvConfig& env, const StatePlanner& planner,
                                        const ActionPredictor& predictor, int episodes,
                                        std::uint64_t base_seed, int workers = 1);

}  // namespace adaplan

// adaplan command line: dataset generation, training, evaluation, sweeps.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adaplan/bench.hpp"
#include "adaplan/checkpoint.hpp"
#include "adaplan/config.hpp"

namespace fs = std::filesystem;
using namespace adaplan;

namespace {

// One JSON object per line under <out>/log.jsonl.
class EventLog {
 public:
  explicit EventLog(const fs::path& out_dir) {
    fs::create_directories(out_dir);
    out_.open(out_dir / "log.jsonl", std::ios::app);
    if (!out_) throw std::runtime_error("cannot open log in " + out_dir.string());
  }
  void event(const std::string& name, nlohmann::json fields = nlohmann::json::object()) {
    fields["event"] = name;
    out_ << fields.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct Common {
  std::string config;
  std::string out;
};

RunConfig load_config(const Common& c) {
  return c.config.empty() ? RunConfig{} : load_run_config(c.config);
}

fs::path dataset_file(const std::string& data) {
  const fs::path p(data);
  return fs::is_directory(p) ? p / "dataset.jsonl" : p;
}

Dataset load_data(const std::string& data) {
  Dataset ds = read_dataset(dataset_file(data));
  if (ds.transitions.empty()) throw std::runtime_error("dataset " + data + " is empty");
  return ds;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config (sections env, behavior, diffuser, "
                                        "invdyn, planner, eval)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->required();
}

struct Models {
  DenoiserModel denoiser;
  NoiseSchedule schedule;
  Ensemble ensemble;
};

Models load_models(const std::string& diffuser_path, const std::string& ensemble_dir) {
  Models m;
  m.denoiser = load_denoiser(diffuser_path, &m.schedule);
  m.ensemble = load_ensemble(ensemble_dir);
  if (m.denoiser.stats.hash() != m.ensemble.stats().hash()) {
    throw std::runtime_error("diffuser and ensemble were trained with different normalization");
  }
  return m;
}

void write_episodes(const fs::path& path, const std::vector<EpisodeLog>& logs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& log : logs) write_episode_jsonl(out, log);
}

double calibrate(const RunConfig& cfg, const StatePlanner& planner,
                 const ActionPredictor& predictor, EventLog& log) {
  const auto u = on_policy_entropies(cfg.env, planner, predictor, cfg.eval.calibration_episodes,
                                     cfg.eval.calibration_seed, cfg.eval.workers);
  const double eps = quantile(u, cfg.eval.calibration_quantile);
  log.event("calibrated", {{"epsilon", eps},
                           {"samples", u.size()},
                           {"quantile", cfg.eval.calibration_quantile},
                           {"seed", cfg.eval.calibration_seed}});
  return eps;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaplan: uncertainty-gated adaptive replanning benchmark"};
  app.require_subcommand(1);

  Common gen_c;
  std::size_t gen_steps = 100000;
  std::uint64_t gen_seed = 0;
  std::optional<double> gen_eps;
  auto* gen = app.add_subcommand("gen-data", "roll the behavior policy into an offline dataset");
  add_common(gen, gen_c);
  gen->add_option("--steps", gen_steps, "transitions to collect")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--behavior-epsilon", gen_eps, "override behavior.epsilon")
      ->check(CLI::Range(0.0, 1.0));

  Common td_c;
  std::string td_data;
  std::uint64_t td_steps = 20000, td_seed = 0;
  auto* td = app.add_subcommand("train-diffuser", "train the state-plan denoiser");
  add_common(td, td_c);
  td->add_option("--data", td_data, "dataset file or gen-data directory")->required();
  td->add_option("--steps", td_steps, "optimizer steps")->check(CLI::PositiveNumber);
  td->add_option("--seed", td_seed, "training seed");

  Common ti_c;
  std::string ti_data;
  std::optional<int> ti_members;
  std::uint64_t ti_seed = 0;
  auto* ti = app.add_subcommand("train-invdyn", "train the inverse-dynamics ensemble");
  add_common(ti, ti_c);
  ti->add_option("--data", ti_data, "dataset file or gen-data directory")->required();
  ti->add_option("--members", ti_members, "ensemble size M")->check(CLI::PositiveNumber);
  ti->add_option("--seed", ti_seed, "base seed; member m uses seed + m");

  Common ev_c;
  std::string ev_mode = "adaptive", ev_diffuser, ev_ensemble;
  std::optional<double> ev_eps;
  std::optional<int> ev_episodes, ev_workers;
  std::optional<std::uint64_t> ev_seed;
  bool ev_calibrate = false;
  auto* ev = app.add_subcommand("eval", "evaluate one planner mode on shared seeds");
  add_common(ev, ev_c);
  ev->add_option("--mode", ev_mode, "adaptive | continuous | no-replan")
      ->check(CLI::IsMember({"adaptive", "continuous", "no-replan", "no_replan"}));
  ev->add_option("--epsilon", ev_eps, "entropy threshold in nats")
      ->check(CLI::NonNegativeNumber);
  ev->add_option("--episodes", ev_episodes, "episodes")->check(CLI::PositiveNumber);
  ev->add_option("--seed", ev_seed, "base env seed");
  ev->add_option("--workers", ev_workers, "parallel episodes")->check(CLI::PositiveNumber);
  ev->add_option("--diffuser", ev_diffuser, "denoiser checkpoint")->required();
  ev->add_option("--ensemble", ev_ensemble, "ensemble directory")->required();
  ev->add_flag("--calibrate", ev_calibrate,
               "set epsilon to the configured quantile of on-policy entropies");

  Common sw_c;
  std::vector<double> sw_eps;
  std::string sw_diffuser, sw_ensemble;
  std::optional<int> sw_episodes, sw_workers;
  std::optional<std::uint64_t> sw_seed;
  auto* sw = app.add_subcommand("sweep", "adaptive evaluation over a list of thresholds");
  add_common(sw, sw_c);
  sw->add_option("--epsilons", sw_eps, "comma separated, strictly increasing")
      ->required()
      ->delimiter(',');
  sw->add_option("--episodes", sw_episodes, "episodes per threshold")
      ->check(CLI::PositiveNumber);
  sw->add_option("--seed", sw_seed, "base env seed");
  sw->add_option("--workers", sw_workers, "parallel episodes")->check(CLI::PositiveNumber);
  sw->add_option("--diffuser", sw_diffuser, "denoiser checkpoint")->required();
  sw->add_option("--ensemble", sw_ensemble, "ensemble directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig cfg = load_config(gen_c);
      if (gen_eps) cfg.behavior.epsilon = *gen_eps;
      EventLog log(gen_c.out);
      const Dataset ds = collect(cfg.env, cfg.behavior, gen_steps, gen_seed);
      const fs::path out(gen_c.out);
      write_dataset(out / "dataset.jsonl", ds);
      const NormStats stats = norm_stats(ds);
      write_json_file(out / "norm_stats.json",
                      {{"norm_stats", stats}, {"hash", stats.hash_hex()}});
      log.event("gen-data", {{"seed", gen_seed},
                             {"transitions", ds.transitions.size()},
                             {"episodes", ds.num_episodes()},
                             {"collisions", ds.header["collisions"]}});
      std::cout << "wrote " << ds.transitions.size() << " transitions in "
                << ds.num_episodes() << " episodes to " << (out / "dataset.jsonl").string()
                << '\n';
    } else if (*td) {
      const RunConfig cfg = load_config(td_c);
      EventLog log(td_c.out);
      const Dataset ds = load_data(td_data);
      const NormStats stats = norm_stats(ds);
      const fs::path out(td_c.out);
      std::ofstream curve(out / "train_diffuser.csv", std::ios::trunc);
      curve << "step,loss\n";
      const std::uint64_t every = std::max<std::uint64_t>(1, td_steps / 100);
      auto result = train_diffuser(ds, stats, cfg.diffuser, td_steps, td_seed,
                                   [&](std::uint64_t s, double loss) {
                                     if (s % every == 0 || s == td_steps) {
                                       curve << s << ',' << format_exact(loss) << '\n';
                                       log.event("diffuser-step", {{"step", s}, {"loss", loss}});
                                     }
                                   });
      save_denoiser(out / "denoiser.ckpt", result.model, build_schedule(cfg.diffuser.diffusion_steps),
                    {{"seed", td_seed}, {"steps", td_steps}});
      log.event("train-diffuser", {{"seed", td_seed}, {"steps", td_steps},
                                   {"final_loss", result.losses.back()}});
      std::cout << "denoiser trained for " << td_steps << " steps, final loss "
                << result.losses.back() << '\n';
    } else if (*ti) {
      RunConfig cfg = load_config(ti_c);
      if (ti_members) cfg.invdyn.members = *ti_members;
      EventLog log(ti_c.out);
      const Dataset ds = load_data(ti_data);
      const NormStats stats = norm_stats(ds);
      const fs::path out(ti_c.out);
      std::ofstream curve(out / "train_invdyn.csv", std::ios::trunc);
      curve << "member,epoch,loss\n";
      const Ensemble ens = train_ensemble(ds, stats, cfg.invdyn, ti_seed,
                                          [&](int m, int epoch, double loss) {
                                            curve << m << ',' << epoch << ','
                                                  << format_exact(loss) << '\n';
                                            log.event("invdyn-epoch", {{"member", m},
                                                                       {"epoch", epoch},
                                                                       {"loss", loss}});
                                          });
      save_ensemble(out / "ensemble", ens, cfg.invdyn);
      const PairBatch pairs = all_pairs(ds, stats);
      nlohmann::json acc = nlohmann::json::array();
      for (std::size_t m = 0; m < ens.size(); ++m) acc.push_back(action_accuracy(ens, m, pairs));
      log.event("train-invdyn", {{"seed", ti_seed}, {"members", ens.size()},
                                 {"train_accuracy", acc}});
      std::cout << "ensemble of " << ens.size() << " trained, train accuracy " << acc.dump()
                << '\n';
    } else if (*ev) {
      RunConfig cfg = load_config(ev_c);
      if (ev_episodes) cfg.eval.episodes = *ev_episodes;
      if (ev_seed) cfg.eval.seed = *ev_seed;
      if (ev_workers) cfg.eval.workers = *ev_workers;
      PlannerConfig pc = cfg.planner;
      pc.mode = mode_from_name(ev_mode);
      if (ev_eps) pc.epsilon = *ev_eps;
      EventLog log(ev_c.out);
      const Models m = load_models(ev_diffuser, ev_ensemble);
      const DiffusionPlanner planner(m.denoiser, m.schedule);
      if (ev_calibrate && pc.mode == PlannerMode::kAdaptive) {
        pc.epsilon = calibrate(cfg, planner, m.ensemble, log);
      }
      std::vector<EpisodeLog> logs;
      const MetricsRow row = evaluate(cfg.env, planner, m.ensemble, pc, cfg.eval.episodes,
                                      cfg.eval.seed, cfg.eval.workers, &logs);
      const fs::path out(ev_c.out);
      write_metrics_csv(out / "metrics.csv", {row});
      write_episodes(out / "episodes.jsonl", logs);
      log.event("eval", {{"mode", row.mode}, {"epsilon", pc.epsilon},
                         {"episodes", row.episodes}, {"seed", cfg.eval.seed},
                         {"mean_len", row.mean_len}, {"collisions", row.collisions},
                         {"saved_nfe_pct", row.saved_nfe_pct}});
      std::cout << render_table({row});
    } else if (*sw) {
      RunConfig cfg = load_config(sw_c);
      if (sw_episodes) cfg.eval.episodes = *sw_episodes;
      if (sw_seed) cfg.eval.seed = *sw_seed;
      if (sw_workers) cfg.eval.workers = *sw_workers;
      EventLog log(sw_c.out);
      const Models m = load_models(sw_diffuser, sw_ensemble);
      const DiffusionPlanner planner(m.denoiser, m.schedule);
      const SweepReport report = sweep(cfg.env, planner, m.ensemble, sw_eps, cfg.eval.episodes,
                                       cfg.eval.seed, cfg.eval.workers);
      const fs::path out(sw_c.out);
      write_sweep_csv(out / "sweep.csv", report);
      write_json_file(out / "sweep.json", sweep_summary(report));
      log.event("sweep", sweep_summary(report));
      std::cout << render_sweep(report);
    }
  } catch (const std::exception& e) {
    std::cerr << "adaplan " << app.get_subcommands().front()->get_name() << ": error: "
              << e.what() << '\n';
    return 1;
  }
  return 0;
}

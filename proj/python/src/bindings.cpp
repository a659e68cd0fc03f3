// Python bindings: simulator, data generation, training and evaluation.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adaplan/bench.hpp"
#include "adaplan/checkpoint.hpp"
#include "adaplan/config.hpp"
#include "adaplan/errors.hpp"
#include "adaplan/prob.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace adaplan;

namespace {

RunConfig parse_config(const std::string& text) {
  RunConfig cfg = nlohmann::json::parse(text.empty() ? "{}" : text).get<RunConfig>();
  cfg.validate();
  return cfg;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::dict metrics_dict(const MetricsRow& r) {
  py::dict d;
  d["mode"] = r.mode;
  d["mean_len"] = r.mean_len;
  d["std_len"] = r.std_len;
  d["collisions"] = r.collisions;
  d["collision_rate"] = r.collision_rate;
  d["mean_reward"] = r.mean_reward;
  d["std_reward"] = r.std_reward;
  d["hs_reward"] = r.hs_reward;
  d["saved_nfe_pct"] = r.saved_nfe_pct;
  d["episodes"] = r.episodes;
  d["lengths"] = r.lengths;
  d["plan_counts"] = r.plan_counts;
  return d;
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& config) : config_(parse_config(config).env) {}

  Observation reset(std::uint64_t seed) {
    ResetResult r = adaplan::reset(config_, seed);
    state_ = std::move(r.state);
    return r.obs;
  }

  py::tuple step(int action) {
    if (!state_) throw std::logic_error("reset() before step()");
    StepResult r = adaplan::step(config_, *state_, action_from_id(action));
    state_ = std::move(r.state);
    return py::make_tuple(r.obs, r.reward, r.done, cause_name(r.cause));
  }

  int obs_dim() const { return config_.obs_dim(); }
  double ego_speed() const { return state().ego.speed; }
  int ego_lane() const { return state().ego.lane; }
  int steps() const { return state().step; }

 private:
  const EnvState& state() const {
    if (!state_) throw std::logic_error("reset() first");
    return *state_;
  }
  EnvConfig config_;
  std::optional<EnvState> state_;
};

class PyPlanner {
 public:
  PyPlanner(const std::string& diffuser, const std::string& ensemble, const std::string& config)
      : config_(parse_config(config)) {
    denoiser_ = load_denoiser(diffuser, &schedule_);
    ensemble_ = load_ensemble(ensemble);
    if (denoiser_.stats.hash() != ensemble_.stats().hash()) {
      throw std::runtime_error("diffuser and ensemble were trained with different normalization");
    }
    planner_ = std::make_unique<DiffusionPlanner>(denoiser_, schedule_);
  }

  py::object episode(const std::string& mode, double epsilon, std::uint64_t seed) {
    EpisodeLog log;
    {
      py::gil_scoped_release release;
      log = run_episode(config_.env, *planner_, ensemble_, {mode_from_name(mode), epsilon}, seed);
    }
    return to_python(to_json_summary(log));
  }

  py::dict evaluate(const std::string& mode, double epsilon, int episodes, std::uint64_t seed,
                    int workers) {
    MetricsRow row;
    {
      py::gil_scoped_release release;
      row = adaplan::evaluate(config_.env, *planner_, ensemble_, {mode_from_name(mode), epsilon},
                              episodes, seed, workers);
    }
    return metrics_dict(row);
  }

  double calibrate(int episodes, std::uint64_t seed, double q) {
    py::gil_scoped_release release;
    return quantile(on_policy_entropies(config_.env, *planner_, ensemble_, episodes, seed), q);
  }

  py::tuple predict(const std::vector<double>& s, const std::vector<double>& s_next) const {
    const EnsemblePrediction p = ensemble_.predict(s, s_next);
    return py::make_tuple(p.probabilities, p.entropy, p.action);
  }

 private:
  RunConfig config_;
  DenoiserModel denoiser_;
  NoiseSchedule schedule_;
  Ensemble ensemble_;
  std::unique_ptr<DiffusionPlanner> planner_;
};

}  // namespace

PYBIND11_MODULE(_adaplan, m) {
  m.doc() = "adaplan core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def("entropy", [](const std::vector<double>& p) { return entropy(p); });
  m.def("softmax", [](const std::vector<double>& x) { return softmax(x); });
  m.def("combine_members", [](const std::vector<std::vector<double>>& members) {
    const EnsemblePrediction p = combine_members(members);
    return py::make_tuple(p.probabilities, p.entropy, p.action);
  });
  m.def("cosine_schedule", [](int steps) {
    const NoiseSchedule s = build_schedule(steps);
    py::dict d;
    d["alpha"] = s.alpha;
    d["alpha_bar"] = s.alpha_bar;
    return d;
  });

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&>(), py::arg("config") = "{}")
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("obs_dim", &PyEnv::obs_dim)
      .def_property_readonly("ego_speed", &PyEnv::ego_speed)
      .def_property_readonly("ego_lane", &PyEnv::ego_lane)
      .def_property_readonly("steps", &PyEnv::steps);

  m.def(
      "generate_dataset",
      [](const std::string& path, std::size_t steps, std::uint64_t seed, const std::string& config,
         std::optional<double> behavior_epsilon) {
        RunConfig cfg = parse_config(config);
        if (behavior_epsilon) cfg.behavior.epsilon = *behavior_epsilon;
        Dataset ds;
        {
          py::gil_scoped_release release;
          ds = collect(cfg.env, cfg.behavior, steps, seed);
          write_dataset(path, ds);
        }
        return to_python(ds.header);
      },
      py::arg("path"), py::arg("steps"), py::arg("seed"), py::arg("config") = "{}",
      py::arg("behavior_epsilon") = py::none());

  m.def(
      "train_diffuser",
      [](const std::string& data, const std::string& out, std::uint64_t steps, std::uint64_t seed,
         const std::string& config) {
        const RunConfig cfg = parse_config(config);
        py::gil_scoped_release release;
        const Dataset ds = read_dataset(data);
        auto result = adaplan::train_diffuser(ds, norm_stats(ds), cfg.diffuser, steps, seed);
        save_denoiser(out, result.model, build_schedule(cfg.diffuser.diffusion_steps),
                      {{"seed", seed}, {"steps", steps}});
        return result.losses;
      },
      py::arg("data"), py::arg("out"), py::arg("steps"), py::arg("seed"),
      py::arg("config") = "{}");

  m.def(
      "train_invdyn",
      [](const std::string& data, const std::string& out, std::uint64_t seed,
         const std::string& config, std::optional<int> members) {
        RunConfig cfg = parse_config(config);
        if (members) cfg.invdyn.members = *members;
        py::gil_scoped_release release;
        const Dataset ds = read_dataset(data);
        const NormStats stats = norm_stats(ds);
        const Ensemble ens = train_ensemble(ds, stats, cfg.invdyn, seed);
        save_ensemble(out, ens, cfg.invdyn);
        const PairBatch pairs = all_pairs(ds, stats);
        std::vector<double> acc;
        for (std::size_t m = 0; m < ens.size(); ++m) acc.push_back(action_accuracy(ens, m, pairs));
        return acc;
      },
      py::arg("data"), py::arg("out"), py::arg("seed"), py::arg("config") = "{}",
      py::arg("members") = py::none());

  py::class_<PyPlanner>(m, "Planner")
      .def(py::init<const std::string&, const std::string&, const std::string&>(),
           py::arg("diffuser"), py::arg("ensemble"), py::arg("config") = "{}")
      .def("episode", &PyPlanner::episode, py::arg("mode"), py::arg("epsilon"), py::arg("seed"))
      .def("evaluate", &PyPlanner::evaluate, py::arg("mode"), py::arg("epsilon"),
           py::arg("episodes"), py::arg("seed"), py::arg("workers") = 1)
      .def("calibrate", &PyPlanner::calibrate, py::arg("episodes"), py::arg("seed"),
           py::arg("quantile") = 0.7)
      .def("predict", &PyPlanner::predict, py::arg("s"), py::arg("s_next"));
}

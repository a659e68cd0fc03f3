#include "adaplan/config.hpp"

#include <stdexcept>

#include "adaplan/checkpoint.hpp"

namespace adaplan {

void RunConfig::validate() const {
  env.validate();
  behavior.validate();
  diffuser.validate();
  invdyn.validate();
  planner.validate();
  if (eval.episodes < 1) throw std::invalid_argument("eval.episodes must be >= 1");
  if (eval.workers < 1) throw std::invalid_argument("eval.workers must be >= 1");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"env", c.env},         {"behavior", c.behavior}, {"diffuser", c.diffuser},
       {"invdyn", c.invdyn},   {"planner", c.planner},   {"eval", c.eval}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  static const char* kSections[] = {"env", "behavior", "diffuser", "invdyn", "planner", "eval"};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* s : kSections) known = known || key == s;
    if (!known) throw std::invalid_argument("config: unknown section '" + key + "'");
  }
  const RunConfig d;
  c.env = j.value("env", d.env);
  c.behavior = j.value("behavior", d.behavior);
  c.diffuser = j.value("diffuser", d.diffuser);
  c.invdyn = j.value("invdyn", d.invdyn);
  c.planner = j.value("planner", d.planner);
  c.eval = j.value("eval", d.eval);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = read_json_file(path).get<RunConfig>();
  c.validate();
  return c;
}

}  // namespace adaplan

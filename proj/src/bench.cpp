#include "adaplan/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<EpisodeLog> run_all(const EnvConfig& env, const StatePlanner& planner,
                                const ActionPredictor& predictor,
                                const PlannerConfig& config, int episodes,
                                std::uint64_t base_seed, int workers) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  std::vector<EpisodeLog> logs(static_cast<std::size_t>(episodes));
  const int threads = std::clamp(workers, 1, episodes);
  if (threads == 1) {
    for (int e = 0; e < episodes; ++e) {
      logs[e] = run_episode(env, planner, predictor, config,
                            base_seed + static_cast<std::uint64_t>(e));
    }
    return logs;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int e = next++; e < episodes; e = next++) {
          logs[e] = run_episode(env, planner, predictor, config,
                                base_seed + static_cast<std::uint64_t>(e));
        }
      } catch (...) {
        errors[w] = std::current_exception();
        next = episodes;
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return logs;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("metrics csv: bad number '" + s + "'");
  }
  return v;
}

}  // namespace

MetricsRow aggregate(const std::string& mode, const std::vector<EpisodeLog>& logs) {
  if (logs.empty()) throw std::invalid_argument("aggregate: empty episode set");
  MetricsRow row;
  row.mode = mode;
  row.episodes = static_cast<int>(logs.size());
  std::vector<double> lens, rewards;
  double hs = 0.0, saved = 0.0;
  for (const auto& log : logs) {
    lens.push_back(log.length());
    rewards.push_back(log.episode_return);
    hs += log.high_speed_reward();
    saved += saved_nfe(log);
    if (log.collided()) ++row.collisions;
    row.seeds.push_back(log.seed);
    row.lengths.push_back(log.length());
    row.plan_counts.push_back(log.plan_count());
  }
  const double n = static_cast<double>(logs.size());
  const MeanStd l = mean_std(lens), r = mean_std(rewards);
  row.mean_len = l.mean;
  row.std_len = l.std;
  row.mean_reward = r.mean;
  row.std_reward = r.std;
  row.hs_reward = hs / n;
  row.saved_nfe_pct = saved / n;
  row.collision_rate = row.collisions / n;
  return row;
}

std::string mode_label(const PlannerConfig& config) {
  if (config.mode != PlannerMode::kAdaptive) return mode_name(config.mode);
  std::ostringstream os;
  os << "adaptive(eps=" << config.epsilon << ")";
  return os.str();
}

MetricsRow evaluate(const EnvConfig& env, const StatePlanner& planner,
                    const ActionPredictor& predictor, const PlannerConfig& config,
                    int episodes, std::uint64_t base_seed, int workers,
                    std::vector<EpisodeLog>* logs) {
  std::vector<EpisodeLog> all =
      run_all(env, planner, predictor, config, episodes, base_seed, workers);
  MetricsRow row = aggregate(mode_label(config), all);
  if (logs) *logs = std::move(all);
  return row;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const MeanStd mx = mean_std(rx), my = mean_std(ry);
  if (mx.std == 0.0 || my.std == 0.0) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - mx.mean) * (ry[i] - my.mean);
  cov /= static_cast<double>(rx.size() - 1);
  return cov / (mx.std * my.std);
}

void compute_correlations(SweepReport& report) {
  std::vector<double> eps, len, rew, col, nfe;
  for (const auto& p : report.points) {
    eps.push_back(p.epsilon);
    len.push_back(p.row.mean_len);
    rew.push_back(p.row.mean_reward);
    col.push_back(p.row.collision_rate);
    nfe.push_back(p.row.saved_nfe_pct);
  }
  report.rho_length = spearman(eps, len);
  report.rho_reward = spearman(eps, rew);
  report.rho_collision_rate = spearman(eps, col);
  report.rho_saved_nfe = spearman(eps, nfe);
}

SweepReport sweep(const EnvConfig& env, const StatePlanner& planner,
                  const ActionPredictor& predictor, const std::vector<double>& epsilons,
                  int episodes, std::uint64_t base_seed, int workers) {
  if (epsilons.size() < 3) throw std::invalid_argument("sweep: needs at least 3 epsilon values");
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > epsilons[i - 1])) {
      throw std::invalid_argument("sweep: epsilon values must be strictly increasing");
    }
  }
  SweepReport report;
  for (double eps : epsilons) {
    const PlannerConfig config{PlannerMode::kAdaptive, eps};
    report.points.push_back(
        {eps, evaluate(env, planner, predictor, config, episodes, base_seed, workers)});
  }
  compute_correlations(report);
  return report;
}

bool plan_counts_monotone(const SweepReport& report) {
  for (std::size_t p = 1; p < report.points.size(); ++p) {
    const auto& prev = report.points[p - 1].row.plan_counts;
    const auto& cur = report.points[p].row.plan_counts;
    if (prev.size() != cur.size()) return false;
    for (std::size_t s = 0; s < cur.size(); ++s) {
      if (cur[s] > prev[s]) return false;
    }
  }
  return true;
}

std::string render_table(const std::vector<MetricsRow>& rows) {
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.mode.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Model"
     << " | Mean Trajectory Length | Num. Collisions | Mean Reward      "
        "| Mean High-Speed Reward | Saved NFE (%)\n";
  os << std::string(width, '-')
     << "-+------------------------+-----------------+------------------"
        "+------------------------+--------------\n";
  char buf[160];
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << r.mode;
    std::snprintf(buf, sizeof buf, " | %8.2f +- %-10.2f | %7d / %-5d | %6.2f +- %-6.2f | %22.3f | %12.2f\n",
                  r.mean_len, r.std_len, r.collisions, r.episodes, r.mean_reward,
                  r.std_reward, r.hs_reward, r.saved_nfe_pct);
    os << buf;
  }
  return os.str();
}

std::string render_sweep(const SweepReport& report) {
  std::vector<MetricsRow> rows;
  for (const auto& p : report.points) rows.push_back(p.row);
  std::ostringstream os;
  os << render_table(rows);
  os << "spearman(eps, length)=" << report.rho_length
     << " spearman(eps, reward)=" << report.rho_reward
     << " spearman(eps, collision_rate)=" << report.rho_collision_rate
     << " spearman(eps, saved_nfe)=" << report.rho_saved_nfe << '\n';
  return os.str();
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string csv_cells(const MetricsRow& r) {
  if (r.mode.find_first_of(",\n\"") != std::string::npos) {
    throw std::invalid_argument("metrics csv: mode label may not contain , \" or newline");
  }
  std::ostringstream os;
  os << r.mode << ',' << format_exact(r.mean_len) << ',' << format_exact(r.std_len) << ','
     << r.collisions << ',' << format_exact(r.mean_reward) << ','
     << format_exact(r.std_reward) << ',' << format_exact(r.hs_reward) << ','
     << format_exact(r.saved_nfe_pct) << ',' << r.episodes;
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("write_metrics_csv: no rows");
  std::ofstream out = open_out(path);
  out << kCsvColumns << '\n';
  for (const auto& r : rows) out << csv_cells(r) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvColumns) {
    throw FormatError("metrics csv: unexpected header in " + path.string());
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw FormatError("metrics csv: expected 9 columns");
    MetricsRow r;
    r.mode = c[0];
    r.mean_len = parse_double(c[1]);
    r.std_len = parse_double(c[2]);
    r.collisions = std::stoi(c[3]);
    r.mean_reward = parse_double(c[4]);
    r.std_reward = parse_double(c[5]);
    r.hs_reward = parse_double(c[6]);
    r.saved_nfe_pct = parse_double(c[7]);
    r.episodes = std::stoi(c[8]);
    r.collision_rate = r.episodes > 0 ? static_cast<double>(r.collisions) / r.episodes : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report) {
  std::ofstream out = open_out(path);
  out << "epsilon," << kCsvColumns << '\n';
  for (const auto& p : report.points) {
    out << format_exact(p.epsilon) << ',' << csv_cells(p.row) << '\n';
  }
}

nlohmann::json sweep_summary(const SweepReport& report) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& p : report.points) eps.push_back(p.epsilon);
  return {{"epsilons", eps},
          {"spearman_length", report.rho_length},
          {"spearman_reward", report.rho_reward},
          {"spearman_collision_rate", report.rho_collision_rate},
          {"spearman_saved_nfe", report.rho_saved_nfe},
          {"plan_counts_monotone", plan_counts_monotone(report)}};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<double> on_policy_entropies(const EnvConfig& env, const StatePlanner& planner,
                                        const ActionPredictor& predictor, int episodes,
                                        std::uint64_t base_seed, int workers) {
  const PlannerConfig config{PlannerMode::kNoReplan, 0.0};
  std::vector<double> out;
  for (const auto& log : run_all(env, planner, predictor, config, episodes, base_seed, workers)) {
    for (const auto& s : log.steps) {
      if (s.plan_age >= 1) out.push_back(s.entropy);
    }
  }
  return out;
}

}  // namespace adaplan

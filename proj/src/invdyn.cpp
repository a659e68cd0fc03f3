#include "adaplan/invdyn.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "adaplan/checkpoint.hpp"
#include "adaplan/dynalanes.hpp"
#include "adaplan/errors.hpp"
#include "adaplan/prob.hpp"

namespace adaplan {

double entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p < 0.0) throw std::invalid_argument("entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

EnsemblePrediction combine_members(std::span<const std::vector<double>> member_probs) {
  if (member_probs.empty()) throw std::invalid_argument("combine_members: no members");
  const std::size_t k = member_probs.front().size();
  EnsemblePrediction out;
  out.probabilities.assign(k, 0.0);
  for (const auto& p : member_probs) {
    if (p.size() != k) throw ShapeError("combine_members: member widths differ");
    for (std::size_t i = 0; i < k; ++i) out.probabilities[i] += p[i];
  }
  const double m = static_cast<double>(member_probs.size());
  for (double& p : out.probabilities) p /= m;
  out.entropy = entropy(out.probabilities);
  out.action = argmax(out.probabilities);
  return out;
}

void InvDynConfig::validate() const {
  if (members < 1) throw std::invalid_argument("InvDynConfig: members must be >= 1");
  if (epochs < 1 || batch < 1) throw std::invalid_argument("InvDynConfig: epochs/batch >= 1");
  adam.validate();
}

void to_json(nlohmann::json& j, const InvDynConfig& c) {
  j = {{"members", c.members}, {"hidden", c.hidden}, {"activation", c.activation},
       {"epochs", c.epochs},   {"batch", c.batch},   {"adam", c.adam}};
}

void from_json(const nlohmann::json& j, InvDynConfig& c) {
  const InvDynConfig d;
  c.members = j.value("members", d.members);
  c.hidden = j.value("hidden", d.hidden);
  c.activation = j.value("activation", d.activation);
  c.epochs = j.value("epochs", d.epochs);
  c.batch = j.value("batch", d.batch);
  c.adam = j.value("adam", d.adam);
}

Ensemble::Ensemble(std::vector<ActionModel> members, NormStats stats)
    : members_(std::move(members)), stats_(std::move(stats)) {
  if (members_.empty()) throw std::invalid_argument("Ensemble: needs at least one member");
  const NetSpec& first = members_.front().spec;
  for (const auto& m : members_) {
    if (!(m.spec == first)) throw ShapeError("Ensemble: members must share one spec");
    if (!m.params.matches(m.spec)) throw ShapeError("Ensemble: member params/spec mismatch");
  }
  if (first.input_dim() != 2 * static_cast<int>(stats_.dim()) ||
      first.output_dim() != kNumActions) {
    throw ShapeError("Ensemble: member widths disagree with observation/action sizes");
  }
}

EnsemblePrediction Ensemble::predict(std::span<const double> s,
                                     std::span<const double> s_next) const {
  if (s.size() != stats_.dim() || s_next.size() != stats_.dim()) {
    throw ShapeError("Ensemble::predict: observation dimension mismatch");
  }
  const auto a = normalize(s, stats_);
  const auto b = normalize(s_next, stats_);
  std::vector<double> input(a);
  input.insert(input.end(), b.begin(), b.end());
  std::vector<std::vector<double>> probs;
  probs.reserve(members_.size());
  for (const auto& m : members_) probs.push_back(softmax(forward(m.spec, m.params, input)));
  return combine_members(probs);
}

Matrix Ensemble::member_probabilities(std::size_t m, const Matrix& inputs) const {
  const ActionModel& model = members_.at(m);
  Matrix logits = forward_batch(model.spec, model.params, inputs);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(std::span<const double>(logits.row(r).data(), logits.cols()));
    std::copy(p.begin(), p.end(), logits.row(r).data());
  }
  return logits;
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix& d_logits) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  }
  const double n = static_cast<double>(logits.rows());
  d_logits.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(std::span<const double>(logits.row(r).data(), logits.cols()));
    total += cross_entropy(p, labels[r]);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      d_logits(r, c) = (p[c] - (c == labels[r] ? 1.0 : 0.0)) / n;
    }
  }
  return total / n;
}

ActionModel train_action_model(const PairBatch& data, int obs_dim,
                               const InvDynConfig& config, std::uint64_t seed,
                               const EpochFn& progress, int member) {
  config.validate();
  if (data.inputs.rows() == 0) throw std::invalid_argument("train_action_model: no data");
  const Rng root(seed);
  Rng init_rng = root.split("init");
  Rng shuffle_rng = root.split("shuffle");
  ActionModel model;
  model.seed = seed;
  model.spec = NetSpec::mlp(2 * obs_dim, config.hidden, kNumActions, config.activation);
  model.params = NetParams::glorot(model.spec, init_rng);
  OptimState opt(model.params.size(), config.adam);

  const auto n = static_cast<std::size_t>(data.inputs.rows());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch);
  Matrix inputs;
  std::vector<int> labels;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < n; first += batch) {
      const std::size_t rows = std::min(batch, n - first);
      inputs.resize(static_cast<Eigen::Index>(rows), data.inputs.cols());
      labels.resize(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        inputs.row(static_cast<Eigen::Index>(i)) =
            data.inputs.row(static_cast<Eigen::Index>(order[first + i]));
        labels[i] = data.actions[order[first + i]];
      }
      BatchLoss loss = [&](const Matrix& out, Matrix& d_out) {
        return softmax_cross_entropy(out, labels, d_out);
      };
      loss_sum += train_step(model.spec, model.params, opt, inputs, loss);
      ++batches;
    }
    if (progress) progress(member, epoch, loss_sum / static_cast<double>(batches));
  }
  return model;
}

Ensemble train_ensemble(const Dataset& dataset, const NormStats& stats,
                        const InvDynConfig& config, std::uint64_t base_seed,
                        const EpochFn& progress) {
  config.validate();
  if (dataset.transitions.empty()) throw std::invalid_argument("train_ensemble: empty dataset");
  const PairBatch data = all_pairs(dataset, stats);
  std::vector<ActionModel> members;
  for (int m = 0; m < config.members; ++m) {
    members.push_back(train_action_model(data, static_cast<int>(stats.dim()), config,
                                         base_seed + static_cast<std::uint64_t>(m),
                                         progress, m));
  }
  return Ensemble(std::move(members), stats);
}

double action_accuracy(const Ensemble& ensemble, std::size_t member,
                       const PairBatch& data) {
  if (data.inputs.rows() == 0) return 0.0;
  const Matrix probs = ensemble.member_probabilities(member, data.inputs);
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    if (argmax(std::span<const double>(probs.row(r).data(), probs.cols())) ==
        data.actions[static_cast<std::size_t>(r)]) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

void save_ensemble(const std::filesystem::path& dir, const Ensemble& ensemble,
                   const InvDynConfig& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json seeds = nlohmann::json::array();
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const ActionModel& member = ensemble.members()[m];
    save_checkpoint(dir / ("member_" + std::to_string(m) + ".ckpt"), member.spec,
                    member.params, {{"seed", member.seed}, {"member", m}});
    seeds.push_back(member.seed);
  }
  const nlohmann::json manifest = {{"members", ensemble.size()},
                                   {"seeds", seeds},
                                   {"spec", ensemble.members().front().spec},
                                   {"config", config},
                                   {"norm_stats", ensemble.stats()},
                                   {"norm_stats_hash", ensemble.stats().hash_hex()}};
  write_json_file(dir / "manifest.json", manifest);
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  NormStats stats = manifest.at("norm_stats").get<NormStats>();
  if (manifest.at("norm_stats_hash").get<std::string>() != stats.hash_hex()) {
    throw FormatError("ensemble manifest: normalization hash mismatch");
  }
  const NetSpec spec = manifest.at("spec").get<NetSpec>();
  const auto count = manifest.at("members").get<std::size_t>();
  std::vector<ActionModel> members;
  for (std::size_t m = 0; m < count; ++m) {
    Checkpoint ckpt = load_checkpoint(dir / ("member_" + std::to_string(m) + ".ckpt"));
    if (!(ckpt.spec == spec)) throw FormatError("ensemble member spec differs from manifest");
    members.push_back({std::move(ckpt.spec), std::move(ckpt.params),
                       ckpt.meta.value("seed", std::uint64_t{0})});
  }
  return Ensemble(std::move(members), std::move(stats));
}

}  // namespace adaplan

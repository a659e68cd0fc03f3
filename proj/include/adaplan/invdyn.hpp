#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "adaplan/datagen.hpp"
#include "adaplan/mlp.hpp"
#include "adaplan/optim.hpp"

namespace adaplan {

// Shannon entropy in nats, 0 log 0 := 0. Throws on negative entries.
double entropy(std::span<const double> probabilities);

struct EnsemblePrediction {
  std::vector<double> probabilities;  // member mean
  double entropy = 0.0;
  int action = 0;  // argmax, lowest id on ties
};

// Mean of member probability vectors, its entropy and argmax.
EnsemblePrediction combine_members(std::span<const std::vector<double>> member_probs);

// Anything that maps (s_t, s_{t+1}) to an action distribution.
class ActionPredictor {
 public:
  virtual ~ActionPredictor() = default;
  virtual EnsemblePrediction predict(std::span<const double> s,
                                     std::span<const double> s_next) const = 0;
  virtual int obs_dim() const = 0;
};

struct InvDynConfig {
  int members = 5;
  std::vector<int> hidden = {256, 256};
  Activation activation = Activation::kRelu;
  int epochs = 10;
  int batch = 128;
  AdamConfig adam;

  void validate() const;
};

void to_json(nlohmann::json& j, const InvDynConfig& c);
void from_json(const nlohmann::json& j, InvDynConfig& c);

// f(s_t, s_{t+1}) -> K logits over normalized, concatenated observations.
struct ActionModel {
  NetSpec spec;
  NetParams params;
  std::uint64_t seed = 0;
};

class Ensemble final : public ActionPredictor {
 public:
  Ensemble() = default;
  Ensemble(std::vector<ActionModel> members, NormStats stats);

  EnsemblePrediction predict(std::span<const double> s,
                             std::span<const double> s_next) const override;
  int obs_dim() const override { return static_cast<int>(stats_.dim()); }

  std::size_t size() const { return members_.size(); }
  const std::vector<ActionModel>& members() const { return members_; }
  const NormStats& stats() const { return stats_; }

  // probabilities of one member for already-normalized inputs (rows of 2D)
  Matrix member_probabilities(std::size_t m, const Matrix& inputs) const;

 private:
  std::vector<ActionModel> members_;
  NormStats stats_;
};

// Softmax cross-entropy over a batch; returns the mean loss.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix& d_logits);

using EpochFn = std::function<void(int member, int epoch, double mean_loss)>;

ActionModel train_action_model(const PairBatch& data, int obs_dim,
                               const InvDynConfig& config, std::uint64_t seed,
                               const EpochFn& progress = nullptr, int member = 0);

// M members on identical data, member m seeded with base_seed + m.
Ensemble train_ensemble(const Dataset& dataset, const NormStats& stats,
                        const InvDynConfig& config, std::uint64_t base_seed,
                        const EpochFn& progress = nullptr);

// fraction of rows whose argmax matches the label
double action_accuracy(const Ensemble& ensemble, std::size_t member,
                       const PairBatch& data);

// <dir>/member_<m>.ckpt plus <dir>/manifest.json
void save_ensemble(const std::filesystem::path& dir, const Ensemble& ensemble,
                   const InvDynConfig& config);
Ensemble load_ensemble(const std::filesystem::path& dir);

}  // namespace adaplan

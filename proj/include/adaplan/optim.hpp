#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adaplan/mlp.hpp"

namespace adaplan {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;

  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, learning_rate, beta1,
                                                beta2, delta)

// Adaptive-moment optimizer state for one parameter vector.
struct OptimState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  OptimState() = default;
  OptimState(std::size_t param_count, const AdamConfig& cfg = {});
};

void adam_update(std::span<double> params, std::span<const double> grad,
                 OptimState& state);

// One optimizer step on a batch. Returns the batch-mean loss.
// Throws NumericError naming the layer if the loss or a gradient is not
// finite; parameters are left untouched in that case.
double train_step(const NetSpec& spec, NetParams& params, OptimState& opt,
                  const Matrix& inputs, const BatchLoss& loss);

}  // namespace adaplan

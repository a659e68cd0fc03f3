#include "adaplan/optim.hpp"

#include <cmath>
#include <string>

#include "adaplan/errors.hpp"

namespace adaplan {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam: lr must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam: betas must lie in (0, 1)");
  }
  if (!(delta > 0.0)) throw std::invalid_argument("Adam: delta must be > 0");
}

OptimState::OptimState(std::size_t param_count, const AdamConfig& cfg)
    : config(cfg), first_moment(param_count, 0.0), second_moment(param_count, 0.0) {
  config.validate();
}

void adam_update(std::span<double> params, std::span<const double> grad,
                 OptimState& state) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ShapeError("adam_update: parameter/gradient/moment sizes differ");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  double* m = state.first_moment.data();
  double* v = state.second_moment.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.delta);
  }
}

double train_step(const NetSpec& spec, NetParams& params, OptimState& opt,
                  const Matrix& inputs, const BatchLoss& loss) {
  if (inputs.rows() == 0) throw std::invalid_argument("train_step: empty batch");
  AlignedVector grad(params.size());
  const double value = loss_and_gradient(spec, params, inputs, loss, grad);
  if (!std::isfinite(value)) throw NumericError("train_step: non-finite loss");
  for (int l = 0; l < spec.num_layers(); ++l) {
    const LayerShape& s = params.layers()[l];
    const std::size_t end = s.bias_offset + s.out;
    for (std::size_t i = s.weight_offset; i < end; ++i) {
      if (!std::isfinite(grad[i])) {
        throw NumericError("train_step: non-finite gradient in layer " +
                           std::to_string(l) +
                           (i < s.bias_offset ? " (weights)" : " (bias)"));
      }
    }
  }
  adam_update(params.values(), grad, opt);
  return value;
}

}  // namespace adaplan

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "adaplan/rng.hpp"
#include "json.hpp"

namespace adaplan {

// Batches are row-major: one sample per row.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { kRelu, kGelu };
enum class OutputHead { kLinear, kNone };

NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::kRelu, "relu"},
                                          {Activation::kGelu, "gelu"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OutputHead, {{OutputHead::kLinear, "linear"},
                                          {OutputHead::kNone, "none"}})

// Fully connected feed-forward topology. widths = {in, h1, ..., out}; one
// activation per hidden layer. With OutputHead::kNone the final layer is
// activated as well (by the last hidden activation, ReLU if there is none).
struct NetSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;
  OutputHead head = OutputHead::kLinear;

  static NetSpec mlp(int in, const std::vector<int>& hidden, int out,
                     Activation act, OutputHead head = OutputHead::kLinear);

  void validate() const;
  int num_layers() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t param_count() const;
  std::optional<Activation> layer_activation(int layer) const;

  bool operator==(const NetSpec&) const = default;
};

void to_json(nlohmann::json& j, const NetSpec& spec);
void from_json(const nlohmann::json& j, NetSpec& spec);

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;

  bool operator==(const LayerShape&) const = default;
};

// Vectorized kernels pick their loop split from buffer alignment; keeping
// every buffer on the same alignment keeps results independent of where a
// copy happens to live.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

// Flat parameter vector plus per-layer offsets.
class NetParams {
 public:
  NetParams() = default;
  explicit NetParams(const NetSpec& spec);  // all zeros

  // uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases
  static NetParams glorot(const NetSpec& spec, Rng& rng);

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<LayerShape>& layers() const { return layers_; }

  std::span<double> weights(int layer);
  std::span<double> bias(int layer);
  std::span<const double> weights(int layer) const;
  std::span<const double> bias(int layer) const;

  bool all_finite() const;
  bool matches(const NetSpec& spec) const;

  bool operator==(const NetParams&) const = default;

 private:
  AlignedVector values_;
  std::vector<LayerShape> layers_;
};

// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Matrix> layer_inputs;  // input to each affine layer
  std::vector<Matrix> pre_activations;
};

std::vector<double> forward(const NetSpec& spec, const NetParams& params,
                            std::span<const double> input);

// Each output row depends only on the matching input row: a sample gives
// bitwise identical results whatever batch it is evaluated in.
Matrix forward_batch(const NetSpec& spec, const NetParams& params,
                     const Matrix& inputs, ForwardCache* cache = nullptr);

// Writes dLoss/dparams into grad (size params.size()), given dLoss/doutputs.
void backward(const NetSpec& spec, const NetParams& params,
              const ForwardCache& cache, const Matrix& d_outputs,
              std::span<double> grad);

// Batch loss: returns the batch-mean loss and fills d_outputs with its
// gradient with respect to the network outputs.
using BatchLoss = std::function<double(const Matrix& outputs, Matrix& d_outputs)>;

// Loss and parameter gradient in one pass.
double loss_and_gradient(const NetSpec& spec, const NetParams& params,
                         const Matrix& inputs, const BatchLoss& loss,
                         std::span<double> grad);

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t max_coords = 256;  // sampled coordinates; all if fewer params
  std::uint64_t seed = 0;
};

// Max relative error between an analytic gradient and central differences:
// |a - n| / max(|a|, |n|, 1e-8) over the sampled coordinates.
double compare_gradient(const NetSpec& spec, const NetParams& params,
                        const Matrix& inputs, const BatchLoss& loss,
                        std::span<const double> analytic,
                        const GradCheckOptions& options = {});

double grad_check(const NetSpec& spec, const NetParams& params,
                  const Matrix& inputs, const BatchLoss& loss,
                  const GradCheckOptions& options = {});

// Common losses.
double mse_loss(const Matrix& outputs, const Matrix& targets, Matrix& d_outputs);

}  // namespace adaplan

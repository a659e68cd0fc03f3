#include "adaplan/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

using ConstRowMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;
using RowMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// rows of W handled per gemv call; fixed so per-row summation order never
// depends on the batch
constexpr int kRowBlock = 32;

constexpr double kInvSqrt2 = 0.5 * std::numbers::sqrt2;

double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf =
      std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2;
  return cdf + x * pdf;
}

void activate(Activation act, const Matrix& z, Matrix& a) {
  a.resize(z.rows(), z.cols());
  const double* src = z.data();
  double* dst = a.data();
  const Eigen::Index n = z.size();
  if (act == Activation::kRelu) {
    for (Eigen::Index i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) dst[i] = gelu(src[i]);
  }
}

void activation_backward(Activation act, const Matrix& z, Matrix& d) {
  const double* src = z.data();
  double* dst = d.data();
  const Eigen::Index n = z.size();
  if (act == Activation::kRelu) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (src[i] <= 0.0) dst[i] = 0.0;
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) dst[i] *= gelu_grad(src[i]);
  }
}

// Y = X W^T + b, one gemv per (row block, sample).
void affine(const NetParams& params, int layer, const Matrix& x, Matrix& y) {
  const LayerShape& shape = params.layers()[layer];
  const double* w = params.values().data() + shape.weight_offset;
  const double* b = params.values().data() + shape.bias_offset;
  y.resize(x.rows(), shape.out);
  for (int o = 0; o < shape.out; o += kRowBlock) {
    const int rows = std::min(kRowBlock, shape.out - o);
    ConstRowMap block(w + static_cast<std::size_t>(o) * shape.in, rows, shape.in);
    Eigen::Map<const Eigen::VectorXd> bias(b + o, rows);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      y.row(r).segment(o, rows).transpose().noalias() =
          block * x.row(r).transpose();
      y.row(r).segment(o, rows).transpose() += bias;
    }
  }
}

}  // namespace

NetSpec NetSpec::mlp(int in, const std::vector<int>& hidden, int out,
                     Activation act, OutputHead head) {
  NetSpec spec;
  spec.widths.push_back(in);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(out);
  spec.activations.assign(hidden.size(), act);
  spec.head = head;
  spec.validate();
  return spec;
}

void NetSpec::validate() const {
  if (widths.size() < 2) {
    throw ShapeError("NetSpec: need at least input and output widths");
  }
  for (int w : widths) {
    if (w < 1) throw ShapeError("NetSpec: widths must be >= 1");
  }
  if (activations.size() != widths.size() - 2) {
    throw ShapeError("NetSpec: expected one activation per hidden layer");
  }
}

std::size_t NetSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    n += static_cast<std::size_t>(widths[l]) * widths[l + 1] + widths[l + 1];
  }
  return n;
}

std::optional<Activation> NetSpec::layer_activation(int layer) const {
  if (layer < num_layers() - 1) return activations[layer];
  if (head == OutputHead::kLinear) return std::nullopt;
  return activations.empty() ? Activation::kRelu : activations.back();
}

void to_json(nlohmann::json& j, const NetSpec& spec) {
  j = nlohmann::json{{"widths", spec.widths},
                     {"activations", spec.activations},
                     {"head", spec.head}};
}

void from_json(const nlohmann::json& j, NetSpec& spec) {
  j.at("widths").get_to(spec.widths);
  j.at("activations").get_to(spec.activations);
  j.at("head").get_to(spec.head);
  spec.validate();
}

NetParams::NetParams(const NetSpec& spec) {
  spec.validate();
  std::size_t offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    LayerShape shape;
    shape.in = spec.widths[l];
    shape.out = spec.widths[l + 1];
    shape.weight_offset = offset;
    offset += static_cast<std::size_t>(shape.in) * shape.out;
    shape.bias_offset = offset;
    offset += shape.out;
    layers_.push_back(shape);
  }
  values_.assign(offset, 0.0);
}

NetParams NetParams::glorot(const NetSpec& spec, Rng& rng) {
  NetParams params(spec);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const LayerShape& shape = params.layers_[l];
    const double limit = std::sqrt(6.0 / (shape.in + shape.out));
    for (double& w : params.weights(l)) w = rng.uniform(-limit, limit);
  }
  return params;
}

std::span<double> NetParams::weights(int layer) {
  const LayerShape& s = layers_.at(layer);
  return {values_.data() + s.weight_offset,
          static_cast<std::size_t>(s.in) * s.out};
}

std::span<double> NetParams::bias(int layer) {
  const LayerShape& s = layers_.at(layer);
  return {values_.data() + s.bias_offset, static_cast<std::size_t>(s.out)};
}

std::span<const double> NetParams::weights(int layer) const {
  const LayerShape& s = layers_.at(layer);
  return {values_.data() + s.weight_offset,
          static_cast<std::size_t>(s.in) * s.out};
}

std::span<const double> NetParams::bias(int layer) const {
  const LayerShape& s = layers_.at(layer);
  return {values_.data() + s.bias_offset, static_cast<std::size_t>(s.out)};
}

bool NetParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

bool NetParams::matches(const NetSpec& spec) const {
  if (static_cast<int>(layers_.size()) != spec.num_layers()) return false;
  for (int l = 0; l < spec.num_layers(); ++l) {
    if (layers_[l].in != spec.widths[l] || layers_[l].out != spec.widths[l + 1]) {
      return false;
    }
  }
  return true;
}

Matrix forward_batch(const NetSpec& spec, const NetParams& params,
                     const Matrix& inputs, ForwardCache* cache) {
  if (!params.matches(spec)) {
    throw ShapeError("forward: parameters do not match the network spec");
  }
  if (inputs.cols() != spec.input_dim()) {
    throw ShapeError("forward: input width " + std::to_string(inputs.cols()) +
                     " != " + std::to_string(spec.input_dim()));
  }
  if (cache) {
    cache->layer_inputs.resize(spec.num_layers());
    cache->pre_activations.resize(spec.num_layers());
  }
  Matrix x = inputs;
  Matrix z;
  for (int l = 0; l < spec.num_layers(); ++l) {
    affine(params, l, x, z);
    const auto act = spec.layer_activation(l);
    if (cache) {
      cache->layer_inputs[l] = std::move(x);
      cache->pre_activations[l] = z;
    }
    if (act) {
      activate(*act, z, x);
    } else {
      x = std::move(z);
    }
  }
  return x;
}

std::vector<double> forward(const NetSpec& spec, const NetParams& params,
                            std::span<const double> input) {
  if (static_cast<int>(input.size()) != spec.input_dim()) {
    throw ShapeError("forward: input length " + std::to_string(input.size()) +
                     " != " + std::to_string(spec.input_dim()));
  }
  Matrix x(1, spec.input_dim());
  std::copy(input.begin(), input.end(), x.data());
  Matrix y = forward_batch(spec, params, x);
  return {y.data(), y.data() + y.size()};
}

void backward(const NetSpec& spec, const NetParams& params,
              const ForwardCache& cache, const Matrix& d_outputs,
              std::span<double> grad) {
  if (grad.size() != params.size()) {
    throw ShapeError("backward: gradient buffer has the wrong size");
  }
  Matrix d = d_outputs;
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const LayerShape& shape = params.layers()[l];
    if (const auto act = spec.layer_activation(l)) {
      activation_backward(*act, cache.pre_activations[l], d);
    }
    RowMap dw(grad.data() + shape.weight_offset, shape.out, shape.in);
    dw.noalias() = d.transpose() * cache.layer_inputs[l];
    double* db = grad.data() + shape.bias_offset;
    std::fill(db, db + shape.out, 0.0);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
      const double* row = d.row(r).data();
      for (int o = 0; o < shape.out; ++o) db[o] += row[o];
    }
    if (l > 0) {
      ConstRowMap w(params.values().data() + shape.weight_offset, shape.out,
                    shape.in);
      Matrix dx = d * w;
      d = std::move(dx);
    }
  }
}

double loss_and_gradient(const NetSpec& spec, const NetParams& params,
                         const Matrix& inputs, const BatchLoss& loss,
                         std::span<double> grad) {
  ForwardCache cache;
  Matrix out = forward_batch(spec, params, inputs, &cache);
  Matrix d_out(out.rows(), out.cols());
  const double value = loss(out, d_out);
  backward(spec, params, cache, d_out, grad);
  return value;
}

double compare_gradient(const NetSpec& spec, const NetParams& params,
                        const Matrix& inputs, const BatchLoss& loss,
                        std::span<const double> analytic,
                        const GradCheckOptions& options) {
  if (analytic.size() != params.size()) {
    throw ShapeError("compare_gradient: gradient size mismatch");
  }
  std::vector<std::size_t> coords(params.size());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (coords.size() > options.max_coords) {
    Rng rng(options.seed);
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(options.max_coords);
  }
  NetParams probe = params;
  Matrix scratch;
  auto eval = [&]() {
    Matrix out = forward_batch(spec, probe, inputs);
    scratch.resize(out.rows(), out.cols());
    return loss(out, scratch);
  };
  double worst = 0.0;
  for (std::size_t c : coords) {
    const double saved = probe.values()[c];
    probe.values()[c] = saved + options.step;
    const double up = eval();
    probe.values()[c] = saved - options.step;
    const double down = eval();
    probe.values()[c] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

double grad_check(const NetSpec& spec, const NetParams& params,
                  const Matrix& inputs, const BatchLoss& loss,
                  const GradCheckOptions& options) {
  AlignedVector grad(params.size());
  loss_and_gradient(spec, params, inputs, loss, grad);
  return compare_gradient(spec, params, inputs, loss, grad, options);
}

double mse_loss(const Matrix& outputs, const Matrix& targets, Matrix& d_outputs) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw ShapeError("mse_loss: shape mismatch");
  }
  const double n = static_cast<double>(outputs.size());
  Matrix diff = outputs - targets;
  d_outputs = diff * (2.0 / n);
  return diff.squaredNorm() / n;
}

}  // namespace adaplan

#include "adaplan/diffuser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "adaplan/checkpoint.hpp"
#include "adaplan/errors.hpp"

namespace adaplan {

namespace {

constexpr const char* kScheduleType = "cosine";

double cosine_f(double t) {
  const double angle = (t + kCosineOffset) / (1.0 + kCosineOffset) * std::numbers::pi / 2.0;
  const double c = std::cos(angle);
  return c * c;
}

}  // namespace

NoiseSchedule NoiseSchedule::from_alphas(const std::vector<double>& alphas) {
  NoiseSchedule s;
  s.steps = static_cast<int>(alphas.size());
  s.alpha.assign(alphas.size() + 1, 1.0);
  s.alpha_bar.assign(alphas.size() + 1, 1.0);
  s.posterior_variance.assign(alphas.size() + 1, 0.0);
  for (std::size_t k = 1; k <= alphas.size(); ++k) {
    s.alpha[k] = alphas[k - 1];
    s.alpha_bar[k] = s.alpha_bar[k - 1] * s.alpha[k];
    s.posterior_variance[k] =
        (1.0 - s.alpha_bar[k - 1]) / (1.0 - s.alpha_bar[k]) * (1.0 - s.alpha[k]);
  }
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (steps < 1) throw std::invalid_argument("NoiseSchedule: no steps");
  if (alpha.size() != static_cast<std::size_t>(steps) + 1 ||
      alpha_bar.size() != alpha.size() || posterior_variance.size() != alpha.size()) {
    throw std::invalid_argument("NoiseSchedule: array sizes disagree with K");
  }
  if (alpha_bar[0] != 1.0) throw std::invalid_argument("NoiseSchedule: alpha_bar_0 != 1");
  for (int k = 1; k <= steps; ++k) {
    if (!(alpha[k] > 0.0 && alpha[k] < 1.0)) {
      throw std::invalid_argument("NoiseSchedule: alpha_k outside (0, 1)");
    }
    if (!(alpha_bar[k] < alpha_bar[k - 1])) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing");
    }
  }
  if (!(alpha_bar[steps] < 1e-3)) {
    throw std::invalid_argument("NoiseSchedule: alpha_bar_K must be < 1e-3");
  }
}

NoiseSchedule build_schedule(int steps) {
  if (steps < 2) throw std::invalid_argument("build_schedule: K must be >= 2");
  const double f0 = cosine_f(0.0);
  std::vector<double> alphas(steps);
  double previous = 1.0;
  for (int k = 1; k <= steps; ++k) {
    const double bar = cosine_f(static_cast<double>(k) / steps) / f0;
    alphas[k - 1] = std::max(bar / previous, kMinAlpha);
    previous = bar;
  }
  return NoiseSchedule::from_alphas(alphas);
}

std::vector<double> q_sample(std::span<const double> x0, int k,
                             std::span<const double> noise,
                             const NoiseSchedule& schedule) {
  if (x0.size() != noise.size()) throw ShapeError("q_sample: noise shape mismatch");
  if (k < 1 || k > schedule.steps) throw std::out_of_range("q_sample: k outside [1, K]");
  const double a = std::sqrt(schedule.alpha_bar[k]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[k]);
  std::vector<double> xk(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xk[i] = a * x0[i] + b * noise[i];
  return xk;
}

std::vector<double> step_embedding(int k, int dim) {
  std::vector<double> e(static_cast<std::size_t>(dim), 0.0);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
    e[i] = std::sin(k * freq);
    e[half + i] = std::cos(k * freq);
  }
  return e;
}

void DiffuserConfig::validate() const {
  if (horizon < 2) throw std::invalid_argument("DiffuserConfig: horizon must be >= 2");
  if (diffusion_steps < 1) throw std::invalid_argument("DiffuserConfig: K must be >= 1");
  if (embed_dim < 2 || embed_dim % 2) {
    throw std::invalid_argument("DiffuserConfig: embed_dim must be even and >= 2");
  }
  if (batch < 1) throw std::invalid_argument("DiffuserConfig: batch must be >= 1");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) {
    throw std::invalid_argument("DiffuserConfig: ema_decay must be in [0, 1)");
  }
  adam.validate();
}

void to_json(nlohmann::json& j, const DiffuserConfig& c) {
  j = {{"horizon", c.horizon},       {"diffusion_steps", c.diffusion_steps},
       {"hidden", c.hidden},         {"embed_dim", c.embed_dim},
       {"activation", c.activation}, {"batch", c.batch},
       {"adam", c.adam},
       {"relative_window", c.relative_window},
       {"ema_decay", c.ema_decay}};
}

void from_json(const nlohmann::json& j, DiffuserConfig& c) {
  const DiffuserConfig d;
  c.horizon = j.value("horizon", d.horizon);
  c.diffusion_steps = j.value("diffusion_steps", d.diffusion_steps);
  c.hidden = j.value("hidden", d.hidden);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.activation = j.value("activation", d.activation);
  c.batch = j.value("batch", d.batch);
  c.adam = j.value("adam", d.adam);
  c.relative_window = j.value("relative_window", d.relative_window);
  c.ema_decay = j.value("ema_decay", d.ema_decay);
}

DenoiserModel DenoiserModel::create(int horizon, int obs_dim,
                                    const DiffuserConfig& config,
                                    const NormStats& stats, Rng& rng) {
  config.validate();
  if (static_cast<std::size_t>(obs_dim) != stats.dim()) {
    throw ShapeError("DenoiserModel: stats dimension differs from obs_dim");
  }
  DenoiserModel m;
  m.horizon = horizon;
  m.obs_dim = obs_dim;
  m.embed_dim = config.embed_dim;
  m.stats = stats;
  m.spec = NetSpec::mlp(m.window_dim() + config.embed_dim, config.hidden,
                        m.window_dim(), config.activation);
  m.params = NetParams::glorot(m.spec, rng);
  const int last = m.spec.num_layers() - 1;
  for (double& w : m.params.weights(last)) w = 0.0;
  m.skip.assign(static_cast<std::size_t>(m.window_dim()), 0.0);
  return m;
}

void DenoiserModel::validate() const {
  if (horizon < 2) throw ShapeError("DenoiserModel: horizon must be >= 2");
  if (spec.input_dim() != window_dim() + embed_dim || spec.output_dim() != window_dim()) {
    throw ShapeError("DenoiserModel: network widths disagree with H x D");
  }
  if (stats.dim() != static_cast<std::size_t>(obs_dim)) {
    throw ShapeError("DenoiserModel: normalization dimension mismatch");
  }
  if (!params.matches(spec)) throw ShapeError("DenoiserModel: params/spec mismatch");
  if (skip.size() != static_cast<std::size_t>(window_dim())) {
    throw ShapeError("DenoiserModel: skip gains disagree with H x D");
  }
  if (!delta_scale.empty() && delta_scale.size() != skip.size()) {
    throw ShapeError("DenoiserModel: relative scale disagrees with H x D");
  }
}

void DenoiserModel::encode(Matrix& windows) const {
  if (delta_scale.empty()) return;
  if (windows.cols() != window_dim()) throw ShapeError("DenoiserModel::encode: width");
  for (Eigen::Index r = 0; r < windows.rows(); ++r) {
    for (int c = obs_dim; c < window_dim(); ++c) {
      windows(r, c) = (windows(r, c) - windows(r, c % obs_dim)) / delta_scale[c];
    }
  }
}

void DenoiserModel::decode(Matrix& coded) const {
  if (delta_scale.empty()) return;
  if (coded.cols() != window_dim()) throw ShapeError("DenoiserModel::decode: width");
  for (Eigen::Index r = 0; r < coded.rows(); ++r) {
    for (int c = obs_dim; c < window_dim(); ++c) {
      coded(r, c) = coded(r, c % obs_dim) + coded(r, c) * delta_scale[c];
    }
  }
}

std::vector<double> relative_scale(const WindowSampler& sampler, int obs_dim,
                                   std::size_t max_windows) {
  if (sampler.count() == 0) throw std::invalid_argument("relative_scale: no windows");
  const std::size_t n = std::min(sampler.count(), std::max<std::size_t>(max_windows, 1));
  const std::size_t stride = sampler.count() / n;
  const int width = sampler.horizon() * obs_dim;
  std::vector<double> sum(static_cast<std::size_t>(width), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix w = sampler.window(i * stride);
    for (int c = obs_dim; c < width; ++c) {
      const double d = w(0, c) - w(0, c % obs_dim);
      sum[c] += d * d;
    }
  }
  std::vector<double> scale(static_cast<std::size_t>(width), 1.0);
  for (int c = obs_dim; c < width; ++c) {
    scale[c] = std::max(std::sqrt(sum[c] / static_cast<double>(n)), 1e-6);
  }
  return scale;
}

Matrix DenoiserModel::inputs(const Matrix& noisy, std::span<const int> steps) const {
  if (noisy.cols() != window_dim() || static_cast<std::size_t>(noisy.rows()) != steps.size()) {
    throw ShapeError("DenoiserModel: batch shape mismatch");
  }
  Matrix in(noisy.rows(), window_dim() + embed_dim);
  in.leftCols(window_dim()) = noisy;
  for (Eigen::Index r = 0; r < noisy.rows(); ++r) {
    const auto e = step_embedding(steps[r], embed_dim);
    std::copy(e.begin(), e.end(), in.row(r).data() + window_dim());
  }
  return in;
}

Matrix DenoiserModel::predict_noise(const Matrix& noisy, std::span<const int> steps,
                                    const NoiseSchedule& schedule) const {
  Matrix out = forward_batch(spec, params, inputs(noisy, steps));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double a = std::sqrt(schedule.alpha_bar.at(steps[r]));
    const double b = std::sqrt(1.0 - schedule.alpha_bar.at(steps[r]));
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      out(r, c) = a * out(r, c) + skip[c] * b * noisy(r, c);
    }
  }
  return out;
}

std::vector<double> skip_gradient(const Matrix& noisy, std::span<const int> steps,
                                  const NoiseSchedule& schedule, const Matrix& d_eps) {
  std::vector<double> g(static_cast<std::size_t>(noisy.cols()), 0.0);
  for (Eigen::Index r = 0; r < noisy.rows(); ++r) {
    const double scale = std::sqrt(1.0 - schedule.alpha_bar.at(steps[r]));
    for (Eigen::Index c = 0; c < noisy.cols(); ++c) g[c] += d_eps(r, c) * scale * noisy(r, c);
  }
  return g;
}

DenoiserOptim::DenoiserOptim(const DenoiserModel& model, const AdamConfig& config)
    : net(model.params.size(), config), skip(model.skip.size(), config) {}

double diffusion_train_step(DenoiserModel& model, const NoiseSchedule& schedule,
                            const Matrix& windows, Rng& rng, DenoiserOptim& opt) {
  const Eigen::Index batch = windows.rows();
  const int width = model.window_dim();
  const int cond = model.obs_dim;
  if (batch == 0) throw std::invalid_argument("diffusion_train_step: empty batch");
  if (windows.cols() != width) throw ShapeError("diffusion_train_step: window width");

  Matrix noisy(batch, width);
  Matrix noise(batch, width);
  std::vector<int> ks(static_cast<std::size_t>(batch));
  for (Eigen::Index r = 0; r < batch; ++r) {
    const int k = 1 + static_cast<int>(rng.uniform_int(schedule.steps));
    ks[r] = k;
    const double a = std::sqrt(schedule.alpha_bar[k]);
    const double b = std::sqrt(1.0 - schedule.alpha_bar[k]);
    for (int c = 0; c < width; ++c) {
      const double eps = rng.normal();
      noise(r, c) = eps;
      noisy(r, c) = a * windows(r, c) + b * eps;
    }
    noisy.row(r).head(cond) = windows.row(r).head(cond);
  }

  const double count = static_cast<double>(batch) * (width - cond);
  std::vector<double> skip_grad;
  BatchLoss loss = [&](const Matrix& out, Matrix& d_out) {
    // d_out holds d loss / d eps until the last loop rescales it onto the
    // network output
    d_out.resize(batch, width);
    for (Eigen::Index r = 0; r < batch; ++r) {
      const double a = std::sqrt(schedule.alpha_bar[ks[r]]);
      const double b = std::sqrt(1.0 - schedule.alpha_bar[ks[r]]);
      for (int c = 0; c < width; ++c) {
        d_out(r, c) = a * out(r, c) + model.skip[c] * b * noisy(r, c) - noise(r, c);
      }
    }
    d_out.leftCols(cond).setZero();
    const double value = d_out.squaredNorm() / count;
    d_out *= 2.0 / count;
    skip_grad = skip_gradient(noisy, ks, schedule, d_out);
    for (Eigen::Index r = 0; r < batch; ++r) d_out.row(r) *= std::sqrt(schedule.alpha_bar[ks[r]]);
    return value;
  };
  const double value =
      train_step(model.spec, model.params, opt.net, model.inputs(noisy, ks), loss);
  adam_update(model.skip, skip_grad, opt.skip);
  model.trained_steps += 1;
  return value;
}

PlanBuffer sample_plan(const DenoiserModel& model, const NoiseSchedule& schedule,
                       std::span<const double> observation, Rng& rng,
                       NfeCounter& nfe) {
  if (static_cast<int>(observation.size()) != model.obs_dim) {
    throw ShapeError("sample_plan: observation dimension " +
                     std::to_string(observation.size()) + " != " +
                     std::to_string(model.obs_dim));
  }
  if (model.trained_steps == 0 || !model.params.all_finite()) {
    throw NumericError("sample_plan: denoiser is untrained or has non-finite weights");
  }
  const int width = model.window_dim();
  const int cond = model.obs_dim;
  const auto z0 = normalize(observation, model.stats);

  Matrix x(1, width);
  for (int c = 0; c < width; ++c) x(0, c) = rng.normal();
  std::copy(z0.begin(), z0.end(), x.data());

  for (int k = schedule.steps; k >= 1; --k) {
    const int step_id = k;
    const Matrix eps = model.predict_noise(x, std::span<const int>(&step_id, 1), schedule);
    nfe.evaluations += 1;
    const double alpha = schedule.alpha[k];
    const double coef = (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar[k]);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double sigma = std::sqrt(schedule.posterior_variance[k]);
    for (int c = 0; c < width; ++c) {
      double mean = (x(0, c) - coef * eps(0, c)) * inv_sqrt_alpha;
      x(0, c) = k > 1 ? mean + sigma * rng.normal() : mean;
    }
    std::copy(z0.begin(), z0.end(), x.data());
  }
  model.decode(x);
  if (!x.allFinite()) throw NumericError("sample_plan: non-finite plan");

  PlanBuffer plan;
  plan.states.reserve(model.horizon);
  plan.states.emplace_back(observation.begin(), observation.end());
  for (int h = 1; h < model.horizon; ++h) {
    plan.states.push_back(denormalize(
        std::span<const double>(x.data() + static_cast<std::size_t>(h) * cond, cond),
        model.stats));
  }
  return plan;
}

DiffuserTrainResult train_diffuser(const Dataset& dataset, const NormStats& stats,
                                   const DiffuserConfig& config, std::uint64_t steps,
                                   std::uint64_t seed, const ProgressFn& progress) {
  config.validate();
  const Rng root(seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  Rng noise_rng = root.split("noise");
  DiffuserTrainResult result{
      DenoiserModel::create(config.horizon, dataset.obs_dim(), config, stats, init_rng),
      {}};
  const NoiseSchedule schedule = build_schedule(config.diffusion_steps);
  const WindowSampler sampler(dataset, stats, config.horizon);
  DenoiserModel& model = result.model;
  if (config.relative_window) model.delta_scale = relative_scale(sampler, model.obs_dim);
  DenoiserOptim opt(model, config.adam);
  NetParams avg_params = model.params;
  std::vector<double> avg_skip = model.skip;
  result.losses.reserve(steps);
  for (std::uint64_t s = 0; s < steps; ++s) {
    Matrix windows = sampler.sample(config.batch, batch_rng);
    model.encode(windows);
    const double loss = diffusion_train_step(model, schedule, windows, noise_rng, opt);
    if (config.ema_decay > 0.0) {
      // warm-up keeps short runs from averaging in the initial weights
      const double decay = std::min(config.ema_decay, (1.0 + s) / (10.0 + s));
      const auto live = model.params.values();
      const auto avg = avg_params.values();
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = decay * avg[i] + (1.0 - decay) * live[i];
      for (std::size_t i = 0; i < avg_skip.size(); ++i) {
        avg_skip[i] = decay * avg_skip[i] + (1.0 - decay) * model.skip[i];
      }
    }
    result.losses.push_back(loss);
    if (progress) progress(s + 1, loss);
  }
  if (config.ema_decay > 0.0) {
    model.params = std::move(avg_params);
    model.skip = std::move(avg_skip);
  }
  return result;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model,
                   const NoiseSchedule& schedule, const nlohmann::json& meta) {
  model.validate();
  nlohmann::json header_meta = meta.is_null() ? nlohmann::json::object() : meta;
  header_meta["trained_steps"] = model.trained_steps;
  save_checkpoint(path, model.spec, model.params, header_meta);
  const nlohmann::json sidecar = {{"horizon", model.horizon},
                                  {"obs_dim", model.obs_dim},
                                  {"embed_dim", model.embed_dim},
                                  {"diffusion_steps", schedule.steps},
                                  {"schedule", kScheduleType},
                                  {"skip", model.skip},
                                  {"delta_scale", model.delta_scale},
                                  {"norm_stats", model.stats},
                                  {"norm_stats_hash", model.stats.hash_hex()}};
  write_json_file(sidecar_path(path), sidecar);
}

DenoiserModel load_denoiser(const std::filesystem::path& path, NoiseSchedule* schedule) {
  Checkpoint ckpt = load_checkpoint(path);
  const nlohmann::json side = read_json_file(sidecar_path(path));
  if (side.value("schedule", "") != kScheduleType) {
    throw FormatError("denoiser sidecar: unsupported schedule type");
  }
  DenoiserModel m;
  m.horizon = side.at("horizon").get<int>();
  m.obs_dim = side.at("obs_dim").get<int>();
  m.embed_dim = side.at("embed_dim").get<int>();
  m.skip = side.at("skip").get<std::vector<double>>();
  m.delta_scale = side.value("delta_scale", std::vector<double>{});
  m.stats = side.at("norm_stats").get<NormStats>();
  if (side.at("norm_stats_hash").get<std::string>() != m.stats.hash_hex()) {
    throw FormatError("denoiser sidecar: normalization hash mismatch");
  }
  m.spec = std::move(ckpt.spec);
  m.params = std::move(ckpt.params);
  m.trained_steps = ckpt.meta.value("trained_steps", std::uint64_t{0});
  m.validate();
  if (schedule) *schedule = build_schedule(side.at("diffusion_steps").get<int>());
  return m;
}

}  // namespace adaplan

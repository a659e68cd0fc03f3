#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "adaplan/datagen.hpp"
#include "adaplan/mlp.hpp"
#include "adaplan/optim.hpp"
#include "adaplan/rng.hpp"

namespace adaplan {

// DDPM noise schedule. Arrays are indexed by diffusion step k; entry 0 of
// alpha and posterior_variance is a placeholder, alpha_bar[0] == 1.
struct NoiseSchedule {
  int steps = 0;  // K
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> posterior_variance;

  // alphas[k-1] is alpha_k; alpha_bar is their running product.
  static NoiseSchedule from_alphas(const std::vector<double>& alphas);
  void validate() const;
};

inline constexpr double kCosineOffset = 0.008;
inline constexpr double kMinAlpha = 1e-3;

// Cosine alpha_bar schedule, alpha_k clipped below at 1e-3. K >= 2.
NoiseSchedule build_schedule(int steps);

// x_k = sqrt(alpha_bar_k) x0 + sqrt(1 - alpha_bar_k) eps
std::vector<double> q_sample(std::span<const double> x0, int k,
                             std::span<const double> noise,
                             const NoiseSchedule& schedule);

// Sinusoidal embedding of the diffusion step: [sin(k f_i), cos(k f_i)].
std::vector<double> step_embedding(int k, int dim);

struct DiffuserConfig {
  int horizon = 16;
  int diffusion_steps = 100;
  std::vector<int> hidden = {512, 512, 512};
  int embed_dim = 64;
  Activation activation = Activation::kGelu;
  int batch = 64;
  AdamConfig adam;
  // Slots h >= 1 are diffused as (z_h - z_0) / scale_h,d instead of z_h.
  bool relative_window = true;
  // Decay of the parameter moving average returned by training, warmed up as
  // min(decay, (1 + s) / (10 + s)); 0 disables.
  double ema_decay = 0.999;

  void validate() const;
};

void to_json(nlohmann::json& j, const DiffuserConfig& c);
void from_json(const nlohmann::json& j, DiffuserConfig& c);

// Noise predictor over flattened H x D windows plus the step embedding:
// eps(x_k, k) = sqrt(alpha_bar_k) * mlp([x_k, embed(k)])
//             + skip * sqrt(1 - alpha_bar_k) * x_k.
// At skip = 1 the network predicts v = sqrt(ab) eps - sqrt(1 - ab) x_0.
// The skip term carries x_k through to the output at high noise, which the
// 512-wide hidden layers cannot reproduce for a 560-wide window.
struct DenoiserModel {
  int horizon = 0;
  int obs_dim = 0;
  int embed_dim = 0;
  NetSpec spec;
  NetParams params;
  std::vector<double> skip;  // one gain per window entry
  // Per-entry scale of the relative coding; empty means windows are
  // diffused as plain normalized states.
  std::vector<double> delta_scale;
  NormStats stats;
  std::uint64_t trained_steps = 0;

  // Glorot init; the output layer and the skip gains start at zero so an
  // untrained model predicts zero noise.
  static DenoiserModel create(int horizon, int obs_dim, const DiffuserConfig& config,
                              const NormStats& stats, Rng& rng);

  int window_dim() const { return horizon * obs_dim; }
  Matrix inputs(const Matrix& noisy, std::span<const int> steps) const;
  Matrix predict_noise(const Matrix& noisy, std::span<const int> steps,
                       const NoiseSchedule& schedule) const;
  // In place, row-wise: normalized window <-> diffusion coordinates. Slot 0
  // is unchanged by both.
  void encode(Matrix& windows) const;
  void decode(Matrix& coded) const;
  void validate() const;
};

// RMS of z_h - z_0 over the sampler's windows (at most `max_windows`, evenly
// spaced), floored at 1e-6. Entries of slot 0 are 1.
std::vector<double> relative_scale(const WindowSampler& sampler, int obs_dim,
                                   std::size_t max_windows = 20000);

// d loss / d skip, given d loss / d eps for each row of x_k.
std::vector<double> skip_gradient(const Matrix& noisy, std::span<const int> steps,
                                  const NoiseSchedule& schedule, const Matrix& d_eps);

struct DenoiserOptim {
  OptimState net;
  OptimState skip;

  DenoiserOptim(const DenoiserModel& model, const AdamConfig& config);
};

// One epsilon-matching update on a batch of clean windows in diffusion
// coordinates (see DenoiserModel::encode). Each
// row gets k ~ U{1..K} and eps ~ N(0, I); the first state slot of x_k is
// replaced by the clean slot and excluded from the loss. Returns the mean
// squared error per unmasked entry.
double diffusion_train_step(DenoiserModel& model, const NoiseSchedule& schedule,
                            const Matrix& windows, Rng& rng, DenoiserOptim& opt);

// Denoiser evaluations spent by one caller.
struct NfeCounter {
  std::uint64_t evaluations = 0;
};

// H planned observations; states[0] is the conditioning observation.
struct PlanBuffer {
  std::vector<Observation> states;
  int cursor = 0;
  int created_at = 0;

  int horizon() const { return static_cast<int>(states.size()); }
};

// Reverse diffusion from pure noise, clamping the first slot to the current
// observation after every step. Adds exactly K to `nfe`.
PlanBuffer sample_plan(const DenoiserModel& model, const NoiseSchedule& schedule,
                       std::span<const double> observation, Rng& rng,
                       NfeCounter& nfe);

struct DiffuserTrainResult {
  DenoiserModel model;
  std::vector<double> losses;
};

using ProgressFn = std::function<void(std::uint64_t step, double loss)>;

// Full training loop over windows sampled from the dataset. With
// ema_decay > 0 the returned model carries the averaged parameters.
DiffuserTrainResult train_diffuser(const Dataset& dataset, const NormStats& stats,
                                   const DiffuserConfig& config, std::uint64_t steps,
                                   std::uint64_t seed,
                                   const ProgressFn& progress = nullptr);

// <path> holds the network checkpoint, <path>.json the sidecar with
// horizon, dimensions, schedule and normalization.
void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model,
                   const NoiseSchedule& schedule, const nlohmann::json& meta = {});
DenoiserModel load_denoiser(const std::filesystem::path& path,
                            NoiseSchedule* schedule = nullptr);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace adaplan

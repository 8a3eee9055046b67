#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <thread>
#include <vector>

#include "entdiff/guidance.hpp"
#include "entdiff/linalg.hpp"
#include "entdiff/mlp.hpp"
#include "entdiff/rng.hpp"
#include "entdiff/schedule.hpp"

namespace entdiff {

enum class SamplerMethod { Ddpm, Ddim };

inline const char* sampler_method_name(SamplerMethod m) {
  return m == SamplerMethod::Ddpm ? "ddpm" : "ddim";
}

inline SamplerMethod parse_sampler_method(const std::string& s) {
  if (s == "ddpm") return SamplerMethod::Ddpm;
  if (s == "ddim") return SamplerMethod::Ddim;
  throw std::invalid_argument("unknown sampler method: " + s);
}

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::Ddpm;
  std::size_t ddim_steps = 25;  // grid size; the ddpm path visits every t
  double ddim_sigma = 0.0;      // 0 keeps the ddim update deterministic
  SigmaVariant sigma_variant = SigmaVariant::BetaTilde;
  GuidanceScheme scheme = NoGuidance{};
  std::uint64_t seed = 99;
  std::size_t batch = 2000;
  std::size_t threads = 1;
};

// One generated sample with its per-step guidance instrumentation.
struct Trajectory {
  std::size_t sample_id = 0;
  std::size_t label = 0;
  std::vector<GuidanceStepRecord> records;
  DenseVector final_x;
};

// Reverse mean: mu = (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps_pred) / sqrt(alpha_t).
inline DenseVector ddpm_mean(const NoiseSchedule& s, std::size_t t,
                             const DenseVector& x_t, const DenseVector& eps_pred) {
  require_size(eps_pred, x_t.size(), "ddpm_mean");
  const double a = s.alpha(t);
  const double ab = s.alpha_bar(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
  const double inv_sqrt_a = 1.0 / std::sqrt(a);
  DenseVector mu(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i)
    mu[i] = inv_sqrt_a * (x_t[i] - coef * eps_pred[i]);
  return mu;
}

// Guided ancestral transition: x_{t-1} = mu + sigma_t^2 * g + sigma_t * z.
// The caller draws z for every step; the last step suppresses it so the
// final sample is the shifted mean under either variance variant.
inline DenseVector ddpm_step(const NoiseSchedule& s, std::size_t t,
                             const DenseVector& x_t, const DenseVector& eps_pred,
                             const DenseVector& g, SigmaVariant variant,
                             const DenseVector& z) {
  require_size(g, x_t.size(), "ddpm_step guidance");
  require_size(z, x_t.size(), "ddpm_step noise");
  const double sig2 = posterior_variance(s, t, variant);
  const double noise_scale = t == 1 ? 0.0 : std::sqrt(sig2);
  DenseVector x = ddpm_mean(s, t, x_t, eps_pred);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] += sig2 * g[i] + noise_scale * z[i];
  return x;
}

// Deterministic (or sigma-noised) ddim transition t -> t_prev. Guidance
// enters by shifting the predicted noise: eps_hat = eps - sqrt(1-abar_t) g.
// `z` may be null when sigma == 0.
inline DenseVector ddim_step(const NoiseSchedule& s, std::size_t t, std::size_t t_prev,
                             const DenseVector& x_t, const DenseVector& eps_pred,
                             const DenseVector& g, double sigma,
                             const DenseVector* z) {
  require_size(eps_pred, x_t.size(), "ddim_step eps");
  require_size(g, x_t.size(), "ddim_step guidance");
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be below t");
  if (sigma < 0.0) throw std::invalid_argument("ddim_step: sigma must be >= 0");
  const double ab_t = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  const double dir_var = 1.0 - ab_prev - sigma * sigma;
  if (dir_var < 0.0)
    throw std::invalid_argument("ddim_step: sigma^2 exceeds 1 - alpha_bar(t_prev)");
  if (sigma > 0.0 && z == nullptr)
    throw std::invalid_argument("ddim_step: sigma > 0 requires noise");

  const double sq_1mab = std::sqrt(1.0 - ab_t);
  const double inv_sq_ab = 1.0 / std::sqrt(ab_t);
  const double sq_ab_prev = std::sqrt(ab_prev);
  const double dir_coef = std::sqrt(dir_var);
  DenseVector x(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double eps_hat = eps_pred[i] - sq_1mab * g[i];
    const double x0_pred = (x_t[i] - sq_1mab * eps_hat) * inv_sq_ab;
    x[i] = sq_ab_prev * x0_pred + dir_coef * eps_hat;
    if (sigma > 0.0) x[i] += sigma * (*z)[i];
  }
  return x;
}

// Descending ddim grid: t_k = round(T - k * T/steps) clamped to >= 1, with 1
// appended so the walk always finishes at the cleanest model step. For
// T=1000, steps=25 this yields 1000, 960, ..., 40, 1.
inline std::vector<std::size_t> ddim_timesteps(std::size_t t_steps, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("ddim_timesteps: steps must be positive");
  if (steps > t_steps)
    throw std::invalid_argument("ddim_timesteps: steps must not exceed t_steps");
  const double stride = static_cast<double>(t_steps) / static_cast<double>(steps);
  std::vector<std::size_t> grid;
  for (std::size_t k = 0; k < steps; ++k) {
    const double raw = static_cast<double>(t_steps) - static_cast<double>(k) * stride;
    auto t = static_cast<std::size_t>(std::llround(raw));
    if (t < 1) t = 1;
    if (grid.empty() || t < grid.back()) grid.push_back(t);
  }
  if (grid.back() != 1) grid.push_back(1);
  return grid;
}

namespace detail {

inline std::size_t sample_dim(const MlpModel& eps_model) {
  const std::size_t dim = eps_model.output_dim();
  if (eps_model.input_dim() != dim + kTimeFeatureCount)
    throw std::invalid_argument("sampler: eps model input dim must be output dim plus time features");
  return dim;
}

}  // namespace detail

// Generate a single trajectory. Each sample owns RngStream(seed, sample_id);
// the first draws produce x_T, then one noise vector per visited step (the
// sigma=0 ddim path draws nothing after x_T).
inline Trajectory sample_one(const MlpModel& eps_model, const MlpModel* classifier,
                             const NoiseSchedule& schedule, const SamplerConfig& cfg,
                             std::size_t sample_id, std::size_t label) {
  const std::size_t dim = detail::sample_dim(eps_model);
  const std::size_t big_t = schedule.t_steps;
  RngStream rng(cfg.seed, sample_id);

  Trajectory traj;
  traj.sample_id = sample_id;
  traj.label = label;
  DenseVector x = gaussian_sample(rng, dim);

  if (cfg.method == SamplerMethod::Ddpm) {
    traj.records.reserve(big_t);
    for (std::size_t t = big_t; t >= 1; --t) {
      GuidedGradient gg = guided_gradient(classifier, x, t, big_t, label, cfg.scheme);
      const DenseVector eps_pred = forward(eps_model, with_time(x, t, big_t));
      const DenseVector z = gaussian_sample(rng, dim);
      x = ddpm_step(schedule, t, x, eps_pred, gg.g, cfg.sigma_variant, z);
      traj.records.push_back(std::move(gg.record));
    }
  } else {
    const std::vector<std::size_t> grid = ddim_timesteps(big_t, cfg.ddim_steps);
    traj.records.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::size_t t = grid[i];
      const std::size_t t_prev = i + 1 < grid.size() ? grid[i + 1] : 0;
      GuidedGradient gg = guided_gradient(classifier, x, t, big_t, label, cfg.scheme);
      const DenseVector eps_pred = forward(eps_model, with_time(x, t, big_t));
      // At the final hop abar(0)=1 forces sigma to 0.
      const double sigma = t_prev == 0 ? 0.0 : cfg.ddim_sigma;
      if (sigma > 0.0) {
        const DenseVector z = gaussian_sample(rng, dim);
        x = ddim_step(schedule, t, t_prev, x, eps_pred, gg.g, sigma, &z);
      } else {
        x = ddim_step(schedule, t, t_prev, x, eps_pred, gg.g, 0.0, nullptr);
      }
      traj.records.push_back(std::move(gg.record));
    }
  }
  traj.final_x = std::move(x);
  return traj;
}

// Batch generation with labels assigned round-robin over the classes. The
// per-sample streams make the result independent of the thread count, so a
// parallel run reproduces the sequential one bit for bit.
inline std::vector<Trajectory> sample_batch(const MlpModel& eps_model,
                                            const MlpModel* classifier,
                                            const NoiseSchedule& schedule,
                                            const SamplerConfig& cfg,
                                            std::size_t num_classes) {
  if (cfg.batch == 0) throw std::invalid_argument("sample_batch: batch must be positive");
  if (num_classes == 0) throw std::invalid_argument("sample_batch: need at least one class");
  std::vector<Trajectory> out(cfg.batch);
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.batch));
  auto worker = [&](std::size_t first) {
    for (std::size_t i = first; i < cfg.batch; i += threads)
      out[i] = sample_one(eps_model, classifier, schedule, cfg, i, i % num_classes);
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }
  return out;
}

}  // namespace entdiff

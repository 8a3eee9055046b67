#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "entdiff/linalg.hpp"

namespace entdiff {

// Which per-step variance the reverse process uses: the forward beta_t or the
// posterior beta-tilde_t.
enum class SigmaVariant { Beta, BetaTilde };

inline const char* sigma_variant_name(SigmaVariant v) {
  return v == SigmaVariant::Beta ? "beta" : "beta_tilde";
}

inline SigmaVariant parse_sigma_variant(const std::string& s) {
  if (s == "beta") return SigmaVariant::Beta;
  if (s == "beta_tilde") return SigmaVariant::BetaTilde;
  throw std::invalid_argument("unknown sigma variant: " + s);
}

// Precomputed diffusion schedule. Timesteps are 1-based: beta(1) is the first
// step and alpha_bar(0) == 1 so that t=0 means clean data.
struct NoiseSchedule {
  std::size_t t_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;      // alpha_bars[t] = prod_{s<=t} alpha_s, alpha_bars[0] = 1
  std::vector<double> posterior_vars;  // beta-tilde_t, 1-based via index t-1

  double beta(std::size_t t) const { return betas.at(check(t) - 1); }
  double alpha(std::size_t t) const { return alphas.at(check(t) - 1); }
  double alpha_bar(std::size_t t) const {
    if (t > t_steps) throw std::out_of_range("alpha_bar: t out of range");
    return alpha_bars[t];
  }
  double posterior_var(std::size_t t) const { return posterior_vars.at(check(t) - 1); }

 private:
  std::size_t check(std::size_t t) const {
    if (t < 1 || t > t_steps) throw std::out_of_range("schedule: t out of range");
    return t;
  }
};

// Default endpoints were tuned for 1000 steps; shorter schedules scale them
// up by 1000/T so the total corruption stays comparable.
inline double default_beta_start(std::size_t t_steps) {
  return 1e-4 * 1000.0 / static_cast<double>(t_steps);
}

inline double default_beta_end(std::size_t t_steps) {
  return 0.02 * 1000.0 / static_cast<double>(t_steps);
}

inline NoiseSchedule build_linear(std::size_t t_steps, double beta_start,
                                  double beta_end) {
  if (t_steps < 2) throw std::invalid_argument("schedule: t_steps must be at least 2");
  if (!(beta_start > 0.0) || !(beta_end > 0.0))
    throw std::invalid_argument("schedule: beta endpoints must be positive");
  if (beta_end >= 1.0) throw std::invalid_argument("schedule: beta_end must be < 1");
  if (beta_end < beta_start)
    throw std::invalid_argument("schedule: beta_end must be >= beta_start");

  NoiseSchedule s;
  s.t_steps = t_steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.resize(t_steps);
  s.alphas.resize(t_steps);
  s.alpha_bars.resize(t_steps + 1);
  s.posterior_vars.resize(t_steps);

  s.alpha_bars[0] = 1.0;
  for (std::size_t i = 0; i < t_steps; ++i) {
    // Interpolation written so the first and last betas hit the endpoints
    // exactly instead of accumulating a rounded stride.
    const double frac = static_cast<double>(i) / static_cast<double>(t_steps - 1);
    s.betas[i] = beta_start * (1.0 - frac) + beta_end * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    s.alpha_bars[i + 1] = s.alpha_bars[i] * s.alphas[i];
  }
  for (std::size_t i = 0; i < t_steps; ++i) {
    const std::size_t t = i + 1;
    // beta-tilde_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t; zero at t=1
    // since abar_0 = 1.
    s.posterior_vars[i] =
        (1.0 - s.alpha_bars[t - 1]) / (1.0 - s.alpha_bars[t]) * s.betas[i];
  }
  return s;
}

inline NoiseSchedule build_linear(std::size_t t_steps) {
  return build_linear(t_steps, default_beta_start(t_steps), default_beta_end(t_steps));
}

// Forward marginal draw: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline DenseVector q_sample(const NoiseSchedule& s, const DenseVector& x0,
                            std::size_t t, const DenseVector& eps) {
  require_size(eps, x0.size(), "q_sample");
  const double ab = s.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  DenseVector xt(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) xt[i] = a * x0[i] + b * eps[i];
  return xt;
}

inline double posterior_variance(const NoiseSchedule& s, std::size_t t,
                                 SigmaVariant variant) {
  return variant == SigmaVariant::Beta ? s.beta(t) : s.posterior_var(t);
}

}  // namespace entdiff

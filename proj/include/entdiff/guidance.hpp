#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "entdiff/linalg.hpp"
#include "entdiff/mlp.hpp"

namespace entdiff {

// Guidance scale schemes. Each one decides the multiplier s applied to the
// classifier gradient at a given reverse step.
struct NoGuidance {};

struct FixedScale {
  double s = 1.0;
};

// s = 1 early (t > t_cut), then jumps to c for the low-noise tail.
struct RangeConstant {
  double c = 10.0;
  std::size_t t_cut = 700;
};

// s = c * (T - t): zero at the start of the trajectory, growing linearly.
struct TimeAware {
  double c = 1.0;
};

// s = 1 while the raw gradient is still large, c once its norm drops below m.
struct GradNorm {
  double c = 10.0;
  double m = 0.2;
};

// Entropy-driven scale: s = gamma * ln(K) / H(p), with H clamped into
// [entropy_floor, ln K] and the result capped at s_max.
struct EntropyDriven {
  double gamma = 1.0;
  double entropy_floor = 1e-8;
  double s_max = 1e4;
};

using GuidanceScheme = std::variant<NoGuidance, FixedScale, RangeConstant,
                                    TimeAware, GradNorm, EntropyDriven>;

inline std::string scheme_name(const GuidanceScheme& scheme) {
  struct Namer {
    std::string operator()(const NoGuidance&) const { return "none"; }
    std::string operator()(const FixedScale&) const { return "fixed"; }
    std::string operator()(const RangeConstant&) const { return "range_constant"; }
    std::string operator()(const TimeAware&) const { return "time_aware"; }
    std::string operator()(const GradNorm&) const { return "grad_norm"; }
    std::string operator()(const EntropyDriven&) const { return "eds"; }
  };
  return std::visit(Namer{}, scheme);
}

// Shannon entropy in nats. Zero-probability terms contribute nothing.
inline double entropy(const ClassDistribution& dist) {
  if (dist.probs.empty()) throw std::invalid_argument("entropy: empty distribution");
  double h = 0.0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i)
    if (dist.probs[i] > 0.0) h -= dist.probs[i] * dist.log_probs[i];
  return h;
}

inline double max_entropy(std::size_t num_classes) {
  if (num_classes == 0) throw std::invalid_argument("max_entropy: no classes");
  return std::log(static_cast<double>(num_classes));
}

// Entropy-driven scale from a raw entropy value. Clamping H to at most ln K
// keeps the ratio at least 1, so the scale never drops below gamma even when
// rounding pushes a near-uniform entropy past the theoretical maximum.
inline double eds_scale_from_entropy(double h, std::size_t num_classes, double gamma,
                                     double entropy_floor, double s_max) {
  const double h_max = max_entropy(num_classes);
  double h_clamped = h;
  if (h_clamped > h_max) h_clamped = h_max;
  if (h_clamped < entropy_floor) h_clamped = entropy_floor;
  double s = gamma * h_max / h_clamped;
  if (s > s_max) s = s_max;
  return s;
}

inline double eds_scale(const ClassDistribution& dist, double gamma,
                        double entropy_floor, double s_max) {
  return eds_scale_from_entropy(entropy(dist), dist.size(), gamma, entropy_floor,
                                s_max);
}

// Scale multiplier for one reverse step. `h` and `grad_norm` describe the
// classifier output at this step; schemes that ignore them accept any value.
inline double scale_factor(const GuidanceScheme& scheme, std::size_t t, std::size_t big_t,
                           double h, double grad_norm, std::size_t num_classes) {
  struct Eval {
    std::size_t t;
    std::size_t big_t;
    double h;
    double grad_norm;
    std::size_t num_classes;
    double operator()(const NoGuidance&) const { return 0.0; }
    double operator()(const FixedScale& f) const { return f.s; }
    double operator()(const RangeConstant& r) const { return t > r.t_cut ? 1.0 : r.c; }
    double operator()(const TimeAware& a) const {
      return a.c * static_cast<double>(big_t - t);
    }
    double operator()(const GradNorm& g) const { return grad_norm < g.m ? 1.0 : g.c; }
    double operator()(const EntropyDriven& e) const {
      return eds_scale_from_entropy(h, num_classes, e.gamma, e.entropy_floor, e.s_max);
    }
  };
  return std::visit(Eval{t, big_t, h, grad_norm, num_classes}, scheme);
}

// Per-step instrumentation emitted alongside every guided transition.
struct GuidanceStepRecord {
  std::size_t t = 0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double scale = 0.0;
  std::string scheme;
};

struct GuidedGradient {
  DenseVector g;
  GuidanceStepRecord record;
};

// Scaled classifier gradient s * grad_x log p(y | x_t, t). The classifier
// sees [x, time features]; only the coordinate block of the input gradient
// feeds back into the sampler. The recorded grad_norm is taken before
// scaling, so it instruments the raw classifier signal.
inline GuidedGradient guided_gradient(const MlpModel* classifier, const DenseVector& x_t,
                                      std::size_t t, std::size_t big_t, std::size_t label,
                                      const GuidanceScheme& scheme) {
  GuidedGradient out;
  out.record.t = t;
  out.record.scheme = scheme_name(scheme);
  if (std::holds_alternative<NoGuidance>(scheme)) {
    out.g.assign(x_t.size(), 0.0);
    return out;
  }
  if (classifier == nullptr)
    throw std::invalid_argument("guided_gradient: scheme requires a classifier");

  const ClassGradResult res =
      class_log_prob_grad(*classifier, with_time(x_t, t, big_t), label);
  out.g.assign(res.dinput.begin(), res.dinput.begin() + static_cast<std::ptrdiff_t>(x_t.size()));
  out.record.entropy = entropy(res.dist);
  out.record.grad_norm = norm2(out.g);
  out.record.scale = scale_factor(scheme, t, big_t, out.record.entropy,
                                  out.record.grad_norm, res.dist.size());
  scale_in_place(out.g, out.record.scale);
  return out;
}

}  // namespace entdiff

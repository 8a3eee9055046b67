#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "entdiff/linalg.hpp"
#include "entdiff/rng.hpp"

namespace entdiff {

// Hidden-layer nonlinearities. Both are smooth, which keeps finite-difference
// gradient checks free of kink artifacts.
enum class Activation { SiLU, Tanh };

inline const char* activation_name(Activation a) {
  return a == Activation::SiLU ? "silu" : "tanh";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + s);
}

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double activate(Activation a, double x) {
  return a == Activation::SiLU ? x * sigmoid(x) : std::tanh(x);
}

inline double activate_deriv(Activation a, double x) {
  if (a == Activation::SiLU) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
  }
  const double t = std::tanh(x);
  return 1.0 - t * t;
}

}  // namespace detail

// Fully connected network. Hidden layers use `activation`; the output layer
// is linear. weights[l] maps layer_dims[l] -> layer_dims[l+1].
struct MlpModel {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseMatrix> weights;
  std::vector<DenseVector> biases;
  Activation activation = Activation::SiLU;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += weights[l].data.size() + biases[l].size();
    return n;
  }
};

inline MlpModel make_mlp(std::vector<std::size_t> dims,
                         Activation activation = Activation::SiLU) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least two layer dims");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("mlp layer dims must be positive");
  MlpModel m;
  m.layer_dims = std::move(dims);
  m.activation = activation;
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    m.weights.emplace_back(m.layer_dims[l + 1], m.layer_dims[l], 0.0);
    m.biases.emplace_back(m.layer_dims[l + 1], 0.0);
  }
  return m;
}

// Gaussian init scaled by 1/sqrt(fan_in); biases start at zero. Weights are
// drawn layer by layer in row-major order so the init is reproducible from
// the stream alone.
inline MlpModel random_mlp(std::vector<std::size_t> dims, RngStream& rng,
                           Activation activation = Activation::SiLU) {
  MlpModel m = make_mlp(std::move(dims), activation);
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.weights[l].cols));
    for (double& w : m.weights[l].data) w = scale * rng.next_gaussian();
  }
  return m;
}

// Intermediate activations kept for reverse-mode passes.
// acts[0] is the input; pre[l] is the affine output of layer l.
struct ForwardTrace {
  std::vector<DenseVector> acts;
  std::vector<DenseVector> pre;
};

inline DenseVector forward_trace(const MlpModel& m, const DenseVector& input,
                                 ForwardTrace& trace) {
  require_size(input, m.input_dim(), "mlp forward");
  trace.acts.assign(1, input);
  trace.pre.clear();
  const std::size_t last = m.num_layers() - 1;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    DenseVector z = matvec(m.weights[l], trace.acts[l]);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += m.biases[l][i];
    trace.pre.push_back(z);
    if (l == last) {
      trace.acts.push_back(std::move(z));
    } else {
      for (double& x : z) x = detail::activate(m.activation, x);
      trace.acts.push_back(std::move(z));
    }
  }
  return trace.acts.back();
}

inline DenseVector forward(const MlpModel& m, const DenseVector& input) {
  ForwardTrace trace;
  return forward_trace(m, input, trace);
}

// Parameter-shaped container used for gradients and optimizer moments.
struct MlpGrads {
  std::vector<DenseMatrix> weights;
  std::vector<DenseVector> biases;

  void zero() {
    for (auto& w : weights) w.fill(0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
  }

  void scale(double alpha) {
    for (auto& w : weights)
      for (double& x : w.data) x *= alpha;
    for (auto& b : biases)
      for (double& x : b) x *= alpha;
  }
};

inline MlpGrads make_grads(const MlpModel& m) {
  MlpGrads g;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    g.weights.emplace_back(m.weights[l].rows, m.weights[l].cols, 0.0);
    g.biases.emplace_back(m.biases[l].size(), 0.0);
  }
  return g;
}

// Reverse-mode pass from d(loss)/d(output). Accumulates into `grads` when
// given, and writes d(loss)/d(input) when `dinput` is given.
inline void backprop(const MlpModel& m, const ForwardTrace& trace,
                     const DenseVector& doutput, MlpGrads* grads,
                     DenseVector* dinput) {
  require_size(doutput, m.output_dim(), "backprop");
  DenseVector delta = doutput;
  for (std::size_t li = m.num_layers(); li-- > 0;) {
    if (grads != nullptr) {
      add_outer(grads->weights[li], delta, trace.acts[li]);
      axpy(1.0, delta, grads->biases[li]);
    }
    if (li > 0 || dinput != nullptr) {
      DenseVector prev = matvec_transposed(m.weights[li], delta);
      if (li > 0) {
        const DenseVector& z = trace.pre[li - 1];
        for (std::size_t i = 0; i < prev.size(); ++i)
          prev[i] *= detail::activate_deriv(m.activation, z[i]);
        delta = std::move(prev);
      } else {
        *dinput = std::move(prev);
      }
    }
  }
}

// Mean-batch loss gradient w.r.t. every parameter. `loss_fn(output, target,
// doutput)` returns the per-example loss and fills d(loss)/d(output).
// Examples are accumulated in batch order, so the reduction is deterministic.
template <typename Target, typename LossFn>
double grad_params(const MlpModel& m,
                   const std::vector<std::pair<DenseVector, Target>>& batch,
                   LossFn&& loss_fn, MlpGrads& grads) {
  if (batch.empty()) throw std::invalid_argument("grad_params: empty batch");
  grads.zero();
  ForwardTrace trace;
  DenseVector doutput;
  double total = 0.0;
  for (const auto& [input, target] : batch) {
    const DenseVector out = forward_trace(m, input, trace);
    total += loss_fn(out, target, doutput);
    backprop(m, trace, doutput, &grads, nullptr);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  return total * inv;
}

// Probability vector over K classes with matching log-probabilities.
struct ClassDistribution {
  DenseVector probs;
  DenseVector log_probs;

  std::size_t size() const { return probs.size(); }
};

inline ClassDistribution softmax(const DenseVector& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double lse = logsumexp(logits);
  ClassDistribution d;
  d.log_probs.resize(logits.size());
  d.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.log_probs[i] = logits[i] - lse;
    d.probs[i] = std::exp(d.log_probs[i]);
  }
  return d;
}

inline double cross_entropy(const ClassDistribution& dist, std::size_t label) {
  if (label >= dist.size()) throw std::out_of_range("cross_entropy: label out of range");
  return -dist.log_probs[label];
}

// Gradient of log softmax(forward(m, input))[label] w.r.t. the input, along
// with the predicted distribution from the same forward pass.
struct ClassGradResult {
  ClassDistribution dist;
  DenseVector dinput;
};

inline ClassGradResult class_log_prob_grad(const MlpModel& m, const DenseVector& input,
                                           std::size_t label) {
  ForwardTrace trace;
  const DenseVector logits = forward_trace(m, input, trace);
  ClassGradResult res;
  res.dist = softmax(logits);
  if (label >= res.dist.size())
    throw std::out_of_range("class_log_prob_grad: label out of range");
  // d log p[label] / d logits = e_label - p
  DenseVector dlogits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    dlogits[i] = (i == label ? 1.0 : 0.0) - res.dist.probs[i];
  backprop(m, trace, dlogits, nullptr, &res.dinput);
  return res;
}

inline DenseVector grad_input_log_prob(const MlpModel& m, const DenseVector& input,
                                       std::size_t label) {
  return class_log_prob_grad(m, input, label).dinput;
}

// Adam state: first/second moments plus the step counter for bias correction.
struct AdamState {
  std::size_t step = 0;
  MlpGrads m;
  MlpGrads v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const MlpModel& model) {
  AdamState s;
  s.m = make_grads(model);
  s.v = make_grads(model);
  return s;
}

inline void adam_step(MlpModel& model, const MlpGrads& grads, AdamState& state,
                      double lr) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](double& p, double g, double& m1, double& v2) {
    m1 = state.beta1 * m1 + (1.0 - state.beta1) * g;
    v2 = state.beta2 * v2 + (1.0 - state.beta2) * g * g;
    p -= lr * (m1 / bc1) / (std::sqrt(v2 / bc2) + state.eps);
  };
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto& w = model.weights[l].data;
    const auto& gw = grads.weights[l].data;
    auto& mw = state.m.weights[l].data;
    auto& vw = state.v.weights[l].data;
    for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], mw[i], vw[i]);
    auto& b = model.biases[l];
    const auto& gb = grads.biases[l];
    auto& mb = state.m.biases[l];
    auto& vb = state.v.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) update(b[i], gb[i], mb[i], vb[i]);
  }
}

// Scalar timestep encoding fed to both networks alongside the sample
// coordinates: [t/T, sin(2*pi*t/T), cos(2*pi*t/T)].
constexpr std::size_t kTimeFeatureCount = 3;

inline void append_time_features(DenseVector& x, std::size_t t, std::size_t big_t) {
  const double frac = static_cast<double>(t) / static_cast<double>(big_t);
  const double ang = 2.0 * 3.14159265358979323846 * frac;
  x.push_back(frac);
  x.push_back(std::sin(ang));
  x.push_back(std::cos(ang));
}

inline DenseVector with_time(const DenseVector& x, std::size_t t, std::size_t big_t) {
  DenseVector out;
  out.reserve(x.size() + kTimeFeatureCount);
  out = x;
  append_time_features(out, t, big_t);
  return out;
}

}  // namespace entdiff

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "entdiff/dataset.hpp"
#include "entdiff/guidance.hpp"
#include "entdiff/mlp.hpp"
#include "entdiff/rng.hpp"
#include "entdiff/schedule.hpp"

namespace entdiff {

struct TrainConfig {
  double eta = 0.2;  // weight of the entropy-constraint term
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t total_steps = 20000;
  std::uint64_t seed = 1;
  std::size_t eval_interval = 1000;
  double val_fraction = 0.1;
};

struct LossBreakdown {
  double ce = 0.0;
  double ect = 0.0;
  double total = 0.0;
};

// Entropy-constraint term: maximizing predictive entropy means minimizing -H.
inline double ect_loss(const ClassDistribution& dist) { return -entropy(dist); }

inline LossBreakdown classifier_loss(const ClassDistribution& dist, std::size_t label,
                                     double eta) {
  LossBreakdown l;
  l.ce = cross_entropy(dist, label);
  l.ect = ect_loss(dist);
  l.total = l.ce + eta * l.ect;
  return l;
}

// Gradient of ce + eta * (-H) w.r.t. the logits:
//   d ce / dz_j   = p_j - [j == label]
//   d (-H) / dz_j = p_j * (log p_j + H)
inline DenseVector classifier_loss_dlogits(const ClassDistribution& dist,
                                           std::size_t label, double eta) {
  if (label >= dist.size())
    throw std::out_of_range("classifier_loss_dlogits: label out of range");
  const double h = entropy(dist);
  DenseVector d(dist.size());
  for (std::size_t j = 0; j < dist.size(); ++j) {
    const double p = dist.probs[j];
    d[j] = p - (j == label ? 1.0 : 0.0);
    if (p > 0.0) d[j] += eta * p * (dist.log_probs[j] + h);
  }
  return d;
}

// One telemetry row per evaluation point. For the epsilon model the ce/total
// columns carry the denoising MSE and the validation columns are NaN.
struct TelemetryRow {
  std::size_t step = 0;
  double ce = 0.0;
  double ect = 0.0;
  double total = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
  double val_mean_entropy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  MlpModel model;
  std::vector<TelemetryRow> telemetry;
};

namespace detail {

// Stream roles under one training seed, so init, batching, the validation
// split, validation noise, and the telemetry probe batch never share draws.
constexpr std::uint64_t kStreamInit = 0;
constexpr std::uint64_t kStreamTrain = 1;
constexpr std::uint64_t kStreamSplit = 2;
constexpr std::uint64_t kStreamValNoise = 3;
constexpr std::uint64_t kStreamProbe = 4;

inline void check_train_inputs(const LabeledDataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
  if (cfg.total_steps == 0) throw std::invalid_argument("train: total_steps must be positive");
  if (cfg.eval_interval == 0)
    throw std::invalid_argument("train: eval_interval must be positive");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw std::invalid_argument("train: val_fraction must be in [0, 1)");
}

inline std::size_t argmax(const DenseVector& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

inline std::size_t num_classes_of(const LabeledDataset& data) {
  std::size_t k = 0;
  for (std::size_t label : data.labels) k = std::max(k, label + 1);
  return k;
}

// Noisy-input classifier trained with cross entropy plus the eta-weighted
// entropy constraint. Validation reports accuracy at t=1 (barely corrupted)
// and mean predictive entropy at t=T/2, both on a held-out split with noise
// that is fixed up front so successive rows are comparable.
inline TrainResult train_classifier(const LabeledDataset& data,
                                    const NoiseSchedule& schedule,
                                    const TrainConfig& cfg,
                                    const std::vector<std::size_t>& hidden_dims,
                                    Activation activation = Activation::SiLU) {
  detail::check_train_inputs(data, cfg);
  const std::size_t dim = data.points.front().size();
  const std::size_t num_classes = num_classes_of(data);
  if (num_classes < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");

  std::vector<std::size_t> dims;
  dims.push_back(dim + kTimeFeatureCount);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(num_classes);

  RngStream init_rng(cfg.seed, detail::kStreamInit);
  TrainResult result;
  result.model = random_mlp(dims, init_rng, activation);

  // Held-out split: shuffle indices, take the first floor(n * frac).
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream split_rng(cfg.seed, detail::kStreamSplit);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[split_rng.next_below(i)]);
  const auto n_val = static_cast<std::size_t>(
      static_cast<double>(data.size()) * cfg.val_fraction);
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (train_idx.empty()) throw std::invalid_argument("train_classifier: empty training split");

  RngStream val_noise_rng(cfg.seed, detail::kStreamValNoise);
  std::vector<DenseVector> val_noise;
  val_noise.reserve(val_idx.size());
  for (std::size_t i = 0; i < val_idx.size(); ++i)
    val_noise.push_back(gaussian_sample(val_noise_rng, dim));

  // Fixed probe batch for the loss columns: evaluating a frozen batch makes
  // telemetry rows comparable across steps (and constant when lr is 0),
  // unlike the noise of each step's own minibatch.
  RngStream probe_rng(cfg.seed, detail::kStreamProbe);
  std::vector<std::pair<DenseVector, std::size_t>> probe;
  probe.reserve(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::size_t idx = train_idx[probe_rng.next_below(train_idx.size())];
    const std::size_t t = 1 + static_cast<std::size_t>(probe_rng.next_below(schedule.t_steps));
    const DenseVector eps = gaussian_sample(probe_rng, dim);
    probe.emplace_back(
        with_time(q_sample(schedule, data.points[idx], t, eps), t, schedule.t_steps),
        data.labels[idx]);
  }

  const std::size_t t_mid = std::max<std::size_t>(1, schedule.t_steps / 2);
  auto evaluate = [&](TelemetryRow& row) {
    double ce_sum = 0.0;
    double ect_sum = 0.0;
    for (const auto& [input, label] : probe) {
      const ClassDistribution dist = softmax(forward(result.model, input));
      ce_sum += cross_entropy(dist, label);
      ect_sum += ect_loss(dist);
    }
    row.ce = ce_sum / static_cast<double>(probe.size());
    row.ect = ect_sum / static_cast<double>(probe.size());
    row.total = row.ce + cfg.eta * row.ect;
    if (val_idx.empty()) return;
    std::size_t correct = 0;
    double entropy_sum = 0.0;
    for (std::size_t i = 0; i < val_idx.size(); ++i) {
      const DenseVector& x0 = data.points[val_idx[i]];
      const std::size_t label = data.labels[val_idx[i]];
      const DenseVector x1 = q_sample(schedule, x0, 1, val_noise[i]);
      const DenseVector logits1 =
          forward(result.model, with_time(x1, 1, schedule.t_steps));
      if (detail::argmax(logits1) == label) ++correct;
      const DenseVector xm = q_sample(schedule, x0, t_mid, val_noise[i]);
      const DenseVector logitsm =
          forward(result.model, with_time(xm, t_mid, schedule.t_steps));
      entropy_sum += entropy(softmax(logitsm));
    }
    row.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_idx.size());
    row.val_mean_entropy = entropy_sum / static_cast<double>(val_idx.size());
  };

  RngStream train_rng(cfg.seed, detail::kStreamTrain);
  MlpGrads grads = make_grads(result.model);
  AdamState adam = make_adam_state(result.model);
  std::vector<std::pair<DenseVector, std::size_t>> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    batch.clear();
    // Per example: index, then timestep, then the noise vector.
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = train_idx[train_rng.next_below(train_idx.size())];
      const std::size_t t = 1 + static_cast<std::size_t>(train_rng.next_below(schedule.t_steps));
      const DenseVector eps = gaussian_sample(train_rng, dim);
      batch.emplace_back(with_time(q_sample(schedule, data.points[idx], t, eps), t,
                                   schedule.t_steps),
                         data.labels[idx]);
    }

    auto loss_fn = [&](const DenseVector& logits, std::size_t label,
                       DenseVector& dlogits) {
      const ClassDistribution dist = softmax(logits);
      dlogits = classifier_loss_dlogits(dist, label, cfg.eta);
      return classifier_loss(dist, label, cfg.eta).total;
    };
    grad_params(result.model, batch, loss_fn, grads);
    adam_step(result.model, grads, adam, cfg.learning_rate);

    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
      TelemetryRow row;
      row.step = step;
      evaluate(row);
      if (result.telemetry.empty() || result.telemetry.back().step != step)
        result.telemetry.push_back(row);
    }
  }
  return result;
}

// Noise-prediction network trained on the standard denoising objective: draw
// (x0, t, eps), corrupt, regress eps with per-coordinate mean squared error.
inline TrainResult train_epsilon(const LabeledDataset& data,
                                 const NoiseSchedule& schedule, const TrainConfig& cfg,
                                 const std::vector<std::size_t>& hidden_dims,
                                 Activation activation = Activation::SiLU) {
  detail::check_train_inputs(data, cfg);
  const std::size_t dim = data.points.front().size();

  std::vector<std::size_t> dims;
  dims.push_back(dim + kTimeFeatureCount);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(dim);

  RngStream init_rng(cfg.seed, detail::kStreamInit);
  TrainResult result;
  result.model = random_mlp(dims, init_rng, activation);

  const double inv_dim = 1.0 / static_cast<double>(dim);
  auto mse_of = [&](const DenseVector& out, const DenseVector& eps) {
    double mse = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double r = out[i] - eps[i];
      mse += r * r * inv_dim;
    }
    return mse;
  };
  auto draw_batch = [&](RngStream& rng, std::vector<std::pair<DenseVector, DenseVector>>& batch) {
    batch.clear();
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = static_cast<std::size_t>(rng.next_below(data.size()));
      const std::size_t t = 1 + static_cast<std::size_t>(rng.next_below(schedule.t_steps));
      DenseVector eps = gaussian_sample(rng, dim);
      DenseVector xt = q_sample(schedule, data.points[idx], t, eps);
      batch.emplace_back(with_time(xt, t, schedule.t_steps), std::move(eps));
    }
  };

  RngStream probe_rng(cfg.seed, detail::kStreamProbe);
  std::vector<std::pair<DenseVector, DenseVector>> probe;
  probe.reserve(cfg.batch_size);
  draw_batch(probe_rng, probe);

  RngStream train_rng(cfg.seed, detail::kStreamTrain);
  MlpGrads grads = make_grads(result.model);
  AdamState adam = make_adam_state(result.model);
  std::vector<std::pair<DenseVector, DenseVector>> batch;
  batch.reserve(cfg.batch_size);

  auto loss_fn = [&](const DenseVector& out, const DenseVector& eps,
                     DenseVector& dout) {
    dout.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      dout[i] = 2.0 * (out[i] - eps[i]) * inv_dim;
    return mse_of(out, eps);
  };

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    draw_batch(train_rng, batch);
    grad_params(result.model, batch, loss_fn, grads);
    adam_step(result.model, grads, adam, cfg.learning_rate);

    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
      // The denoising objective has no ce/ect split; the probe-batch mse
      // fills ce and total, ect stays 0, and the val columns stay NaN.
      double mse = 0.0;
      for (const auto& [input, eps] : probe) mse += mse_of(forward(result.model, input), eps);
      mse /= static_cast<double>(probe.size());
      TelemetryRow row;
      row.step = step;
      row.ce = mse;
      row.ect = 0.0;
      row.total = mse;
      if (result.telemetry.empty() || result.telemetry.back().step != step)
        result.telemetry.push_back(row);
    }
  }
  return result;
}

}  // namespace entdiff

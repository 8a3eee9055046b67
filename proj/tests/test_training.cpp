#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "entdiff/dataset.hpp"
#include "entdiff/guidance.hpp"
#include "entdiff/metrics.hpp"
#include "entdiff/samplers.hpp"
#include "entdiff/schedule.hpp"
#include "entdiff/training.hpp"

using namespace entdiff;

namespace {

MixtureSpec small_mixture(std::size_t per_class = 100) {
  MixtureSpec spec;
  spec.per_class = per_class;
  return spec;
}

double mean_val_entropy(const TrainResult& r) { return r.telemetry.back().val_mean_entropy; }

}  // namespace

TEST_CASE("ect loss reference values") {
  REQUIRE(ect_loss(softmax(DenseVector(8, 0.0))) ==
          Catch::Approx(-std::log(8.0)).margin(1e-12));

  ClassDistribution onehot;
  onehot.probs = {1.0, 0.0};
  onehot.log_probs = {0.0, -1e300};
  REQUIRE(ect_loss(onehot) == 0.0);

  ClassDistribution skew;
  skew.probs = {0.9, 0.1};
  skew.log_probs = {std::log(0.9), std::log(0.1)};
  REQUIRE(ect_loss(skew) == Catch::Approx(-0.325083).margin(1e-6));
}

TEST_CASE("ect loss is bounded by [-ln K, 0]") {
  RngStream rng(301, 0);
  for (int rep = 0; rep < 200; ++rep) {
    DenseVector logits(8);
    for (double& v : logits) v = 4.0 * rng.next_gaussian();
    const double l = ect_loss(softmax(logits));
    REQUIRE(l <= 0.0);
    REQUIRE(l >= -std::log(8.0) - 1e-12);
  }
}

TEST_CASE("total loss composes ce and ect") {
  const ClassDistribution uniform10 = softmax(DenseVector(10, 0.0));
  const LossBreakdown off = classifier_loss(uniform10, 4, 0.0);
  REQUIRE(off.total == off.ce);
  REQUIRE(off.ce == Catch::Approx(std::log(10.0)).margin(1e-12));

  const LossBreakdown on = classifier_loss(uniform10, 4, 0.2);
  REQUIRE(on.total == Catch::Approx(0.8 * std::log(10.0)).margin(1e-12));
  REQUIRE(on.total == Catch::Approx(1.842068).margin(1e-6));
  REQUIRE(on.total == Catch::Approx(on.ce + 0.2 * on.ect).margin(1e-12));
}

TEST_CASE("total-loss logit gradient matches finite differences") {
  RngStream rng(303, 0);
  const double eta = 0.2, h = 1e-6;
  for (int rep = 0; rep < 20; ++rep) {
    DenseVector logits(6);
    for (double& v : logits) v = 2.0 * rng.next_gaussian();
    const std::size_t label = rep % 6;
    const DenseVector grad = classifier_loss_dlogits(softmax(logits), label, eta);

    for (std::size_t j = 0; j < logits.size(); ++j) {
      DenseVector up = logits, down = logits;
      up[j] += h;
      down[j] -= h;
      const double fd = (classifier_loss(softmax(up), label, eta).total -
                         classifier_loss(softmax(down), label, eta).total) /
                        (2.0 * h);
      const double tol = 1e-4 * std::max(1.0, std::abs(fd));
      REQUIRE(std::abs(grad[j] - fd) < tol);
    }
  }
}

TEST_CASE("training input validation") {
  const NoiseSchedule s = build_linear(50);
  TrainConfig cfg;
  REQUIRE_THROWS_AS(train_classifier(LabeledDataset{}, s, cfg, {8}),
                    std::invalid_argument);
  LabeledDataset ds = make_mixture(small_mixture(5));
  cfg.batch_size = 0;
  REQUIRE_THROWS_AS(train_classifier(ds, s, cfg, {8}), std::invalid_argument);
  cfg.batch_size = 8;
  cfg.total_steps = 0;
  REQUIRE_THROWS_AS(train_epsilon(ds, s, cfg, {8}), std::invalid_argument);
}

TEST_CASE("one step at zero learning rate leaves the model at its init") {
  const LabeledDataset ds = make_mixture(small_mixture());
  const NoiseSchedule s = build_linear(100);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.total_steps = 1;
  cfg.seed = 5;

  const TrainResult r = train_classifier(ds, s, cfg, {16, 8});
  RngStream init_rng(cfg.seed, detail::kStreamInit);
  const MlpModel expect = random_mlp({5, 16, 8, 8}, init_rng);
  for (std::size_t l = 0; l < expect.num_layers(); ++l) {
    REQUIRE(r.model.weights[l].data == expect.weights[l].data);
    REQUIRE(r.model.biases[l] == expect.biases[l]);
  }
}

TEST_CASE("zero learning rate keeps loss telemetry constant") {
  const LabeledDataset ds = make_mixture(small_mixture());
  const NoiseSchedule s = build_linear(100);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.total_steps = 500;
  cfg.eval_interval = 100;

  const TrainResult eps = train_epsilon(ds, s, cfg, {16});
  REQUIRE(eps.telemetry.size() >= 3);
  for (const auto& row : eps.telemetry) {
    REQUIRE(row.total == eps.telemetry.front().total);
    REQUIRE(row.ect == 0.0);
  }

  const TrainResult clf = train_classifier(ds, s, cfg, {16});
  for (const auto& row : clf.telemetry) {
    REQUIRE(row.ce == clf.telemetry.front().ce);
    REQUIRE(row.ect == clf.telemetry.front().ect);
    REQUIRE(row.total == Catch::Approx(row.ce + cfg.eta * row.ect).margin(1e-12));
  }
}

TEST_CASE("training is bitwise reproducible") {
  const LabeledDataset ds = make_mixture(small_mixture());
  const NoiseSchedule s = build_linear(100);
  TrainConfig cfg;
  cfg.total_steps = 300;
  cfg.batch_size = 16;

  const TrainResult a = train_classifier(ds, s, cfg, {16, 8});
  const TrainResult b = train_classifier(ds, s, cfg, {16, 8});
  for (std::size_t l = 0; l < a.model.num_layers(); ++l)
    REQUIRE(a.model.weights[l].data == b.model.weights[l].data);
  REQUIRE(a.telemetry.size() == b.telemetry.size());
  for (std::size_t i = 0; i < a.telemetry.size(); ++i)
    REQUIRE(a.telemetry[i].total == b.telemetry[i].total);
}

TEST_CASE("classifier reaches 95 percent held-out accuracy on clean data") {
  const LabeledDataset ds = make_mixture(small_mixture(200));
  const NoiseSchedule s = build_linear(200);
  TrainConfig cfg;
  cfg.total_steps = 20000;
  cfg.batch_size = 32;
  const TrainResult r = train_classifier(ds, s, cfg, {32, 16});
  REQUIRE(r.telemetry.back().val_accuracy >= 0.95);
}

TEST_CASE("epsilon trainer approaches the Bayes floor on degenerate data") {
  // With x0 identically zero, x_t = sqrt(1-abar_t) * eps, so eps is a
  // deterministic function of (x_t, t) and the optimal loss is 0.
  const NoiseSchedule s = build_linear(50);
  LabeledDataset zeros;
  for (int i = 0; i < 256; ++i) {
    zeros.points.push_back(DenseVector{0.0, 0.0});
    zeros.labels.push_back(static_cast<std::size_t>(i % 2));
  }
  // Check the closed-form identity the optimum must satisfy.
  RngStream rng(7, 0);
  for (std::size_t t : {1, 25, 50}) {
    const DenseVector eps = gaussian_sample(rng, 2);
    const DenseVector xt = q_sample(s, DenseVector{0.0, 0.0}, t, eps);
    const double scale = 1.0 / std::sqrt(1.0 - s.alpha_bar(t));
    REQUIRE(xt[0] * scale == Catch::Approx(eps[0]).margin(1e-12));
    REQUIRE(xt[1] * scale == Catch::Approx(eps[1]).margin(1e-12));
  }

  TrainConfig cfg;
  cfg.total_steps = 8000;
  cfg.batch_size = 64;
  cfg.val_fraction = 0.0;
  const TrainResult r = train_epsilon(zeros, s, cfg, {32, 32});
  REQUIRE(r.telemetry.back().total < 0.25 * r.telemetry.front().total);
}

TEST_CASE("trained model beats a standard-normal baseline by 5x on frechet") {
  const MixtureSpec spec;  // default 8-class mixture
  const LabeledDataset ds = make_mixture(spec);
  const NoiseSchedule s = build_linear(200);
  TrainConfig cfg;
  cfg.total_steps = 30000;
  cfg.val_fraction = 0.0;
  const MlpModel eps = train_epsilon(ds, s, cfg, {64, 64}).model;

  SamplerConfig sc;
  sc.batch = 1000;
  sc.seed = 31;
  std::vector<DenseVector> generated;
  for (const auto& traj : sample_batch(eps, nullptr, s, sc, spec.num_classes))
    generated.push_back(traj.final_x);

  RngStream rng(32, 0);
  std::vector<DenseVector> normal_baseline;
  for (int i = 0; i < 1000; ++i) normal_baseline.push_back(gaussian_sample(rng, 2));

  const double d_model = frechet_distance(ds.points, generated);
  const double d_normal = frechet_distance(ds.points, normal_baseline);
  REQUIRE(d_model * 5.0 <= d_normal);
}

TEST_CASE("entropy constraint raises validation entropy under matched seeds") {
  const LabeledDataset ds = make_mixture(small_mixture(200));
  const NoiseSchedule s = build_linear(200);
  TrainConfig cfg;
  cfg.total_steps = 4000;
  cfg.batch_size = 32;
  cfg.seed = 11;

  TrainConfig ce_only = cfg;
  ce_only.eta = 0.0;
  const TrainResult with_ect = train_classifier(ds, s, cfg, {32, 16});
  const TrainResult without = train_classifier(ds, s, ce_only, {32, 16});
  REQUIRE(mean_val_entropy(with_ect) > mean_val_entropy(without));
}

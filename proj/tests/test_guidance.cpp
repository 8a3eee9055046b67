#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "entdiff/guidance.hpp"
#include "entdiff/rng.hpp"

using namespace entdiff;

namespace {

ClassDistribution dist_from_probs(const DenseVector& probs) {
  ClassDistribution d;
  d.probs = probs;
  d.log_probs.resize(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    d.log_probs[i] = probs[i] > 0.0 ? std::log(probs[i]) : -1e300;
  return d;
}

ClassDistribution random_dist(RngStream& rng, std::size_t k) {
  DenseVector logits(k);
  for (double& v : logits) v = 3.0 * rng.next_gaussian();
  return softmax(logits);
}

}  // namespace

TEST_CASE("entropy reference values") {
  REQUIRE(entropy(dist_from_probs(DenseVector(1000, 1e-3))) ==
          Catch::Approx(std::log(1000.0)).margin(1e-9));
  REQUIRE(entropy(dist_from_probs(DenseVector{1.0, 0.0, 0.0})) == 0.0);
  const double want = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
  REQUIRE(entropy(dist_from_probs(DenseVector{0.9, 0.1})) ==
          Catch::Approx(want).margin(1e-12));
  REQUIRE(want == Catch::Approx(0.325083).margin(1e-6));
  REQUIRE_THROWS_AS(entropy(ClassDistribution{}), std::invalid_argument);
}

TEST_CASE("entropy of softmax outputs stays in [0, ln K]") {
  RngStream rng(101, 0);
  for (std::size_t k : {2, 8, 1000}) {
    const double h_max = max_entropy(k);
    for (int rep = 0; rep < 200; ++rep) {
      const double h = entropy(random_dist(rng, k));
      REQUIRE(h >= 0.0);
      REQUIRE(h <= h_max + 1e-9);
    }
  }
}

TEST_CASE("eds scale reference values") {
  // Uniform: H = ln K, so the scale equals gamma exactly.
  const ClassDistribution uniform = softmax(DenseVector(8, 0.0));
  REQUIRE(eds_scale(uniform, 2.0, 1e-8, 1e4) == 2.0);

  // Half the maximum entropy doubles the scale.
  const double h_half = max_entropy(8) / 2.0;
  REQUIRE(eds_scale_from_entropy(h_half, 8, 1.0, 1e-8, 1e4) ==
          Catch::Approx(2.0).margin(1e-12));

  // Collapsed distributions cap at s_max via the entropy floor.
  REQUIRE(eds_scale_from_entropy(0.0, 8, 1.0, 1e-8, 1e4) == 1e4);
  REQUIRE(eds_scale_from_entropy(1e-12, 8, 3.0, 1e-8, 3e4) == 3e4);
}

TEST_CASE("eds scale never drops below gamma") {
  RngStream rng(103, 0);
  for (std::size_t k : {2, 8, 1000}) {
    for (int rep = 0; rep < 500; ++rep) {
      const ClassDistribution d = random_dist(rng, k);
      const double s = eds_scale(d, 1.7, 1e-8, 1e4 * 1.7);
      REQUIRE(s >= 1.7);
      REQUIRE(s <= 1e4 * 1.7);
    }
  }
}

TEST_CASE("near-uniform entropy keeps the scale within gamma / 0.99") {
  const double h = 0.995 * max_entropy(8);
  const double s = eds_scale_from_entropy(h, 8, 2.0, 1e-8, 2e4);
  REQUIRE(s >= 2.0);
  REQUIRE(s <= 2.0 / 0.99);
}

TEST_CASE("scale_factor per scheme") {
  const std::size_t T = 1000;
  REQUIRE(scale_factor(NoGuidance{}, 500, T, 1.0, 1.0, 8) == 0.0);
  REQUIRE(scale_factor(FixedScale{3.5}, 500, T, 1.0, 1.0, 8) == 3.5);

  const GuidanceScheme range = RangeConstant{10.0, 700};
  REQUIRE(scale_factor(range, 800, T, 0, 0, 8) == 1.0);
  REQUIRE(scale_factor(range, 701, T, 0, 0, 8) == 1.0);
  REQUIRE(scale_factor(range, 700, T, 0, 0, 8) == 10.0);
  REQUIRE(scale_factor(range, 1, T, 0, 0, 8) == 10.0);

  const GuidanceScheme aware = TimeAware{0.5};
  REQUIRE(scale_factor(aware, T, T, 0, 0, 8) == 0.0);
  REQUIRE(scale_factor(aware, T - 1, T, 0, 0, 8) == 0.5);
  REQUIRE(scale_factor(aware, 1, T, 0, 0, 8) == 0.5 * static_cast<double>(T - 1));

  const GuidanceScheme gnorm = GradNorm{10.0, 0.2};
  REQUIRE(scale_factor(gnorm, 500, T, 0, 0.1, 8) == 1.0);
  REQUIRE(scale_factor(gnorm, 500, T, 0, 0.2, 8) == 10.0);
  REQUIRE(scale_factor(gnorm, 500, T, 0, 5.0, 8) == 10.0);

  const GuidanceScheme eds = EntropyDriven{2.0, 1e-8, 2e4};
  REQUIRE(scale_factor(eds, 500, T, max_entropy(8), 0, 8) == 2.0);
}

TEST_CASE("scheme names round-trip") {
  REQUIRE(scheme_name(NoGuidance{}) == "none");
  REQUIRE(scheme_name(FixedScale{}) == "fixed");
  REQUIRE(scheme_name(RangeConstant{}) == "range_constant");
  REQUIRE(scheme_name(TimeAware{}) == "time_aware");
  REQUIRE(scheme_name(GradNorm{}) == "grad_norm");
  REQUIRE(scheme_name(EntropyDriven{}) == "eds");
}

TEST_CASE("guided_gradient without guidance is exactly zero and needs no model") {
  const DenseVector x{1.0, -2.0};
  const GuidedGradient out = guided_gradient(nullptr, x, 500, 1000, 3, NoGuidance{});
  REQUIRE(out.g == DenseVector{0.0, 0.0});
  REQUIRE(out.record.scale == 0.0);
  REQUIRE(out.record.scheme == "none");
  REQUIRE(out.record.t == 500);
}

TEST_CASE("guided schemes require a classifier") {
  REQUIRE_THROWS_AS(guided_gradient(nullptr, DenseVector{1.0, 2.0}, 5, 10, 0,
                                    FixedScale{1.0}),
                    std::invalid_argument);
}

TEST_CASE("fixed scale 1 reproduces the raw classifier gradient bitwise") {
  RngStream rng(11, 4);
  const MlpModel clf = random_mlp({5, 16, 8}, rng);  // 2 coords + 3 time features
  const DenseVector x{0.7, -0.3};
  const std::size_t t = 250, T = 1000, label = 2;

  const GuidedGradient fixed1 = guided_gradient(&clf, x, t, T, label, FixedScale{1.0});
  const DenseVector raw = grad_input_log_prob(clf, with_time(x, t, T), label);
  REQUIRE(fixed1.g.size() == 2);
  REQUIRE(fixed1.g[0] == raw[0]);
  REQUIRE(fixed1.g[1] == raw[1]);
  REQUIRE(fixed1.record.grad_norm == norm2(fixed1.g));
  REQUIRE(fixed1.record.scale == 1.0);
}

TEST_CASE("entropy-driven guidance amplifies at least by gamma") {
  RngStream rng(12, 4);
  const MlpModel clf = random_mlp({5, 16, 8}, rng);
  const DenseVector x{0.1, 0.4};
  const std::size_t t = 600, T = 1000, label = 5;
  const double gamma = 2.5;

  const GuidedGradient raw = guided_gradient(&clf, x, t, T, label, FixedScale{1.0});
  const GuidedGradient eds =
      guided_gradient(&clf, x, t, T, label, EntropyDriven{gamma, 1e-8, 1e4 * gamma});
  REQUIRE(norm2(eds.g) >= gamma * norm2(raw.g) * (1.0 - 1e-12));
  REQUIRE(eds.record.scale >= gamma);
  REQUIRE(eds.record.entropy == raw.record.entropy);
  REQUIRE(eds.record.grad_norm == raw.record.grad_norm);  // recorded pre-scale
}

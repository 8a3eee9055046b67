#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "entdiff/rng.hpp"
#include "entdiff/schedule.hpp"

using namespace entdiff;

TEST_CASE("linear schedule hits its endpoints exactly") {
  const NoiseSchedule s = build_linear(1000);
  REQUIRE(s.beta(1) == 1e-4);
  REQUIRE(s.beta(1000) == 0.02);
  REQUIRE(s.alpha_bar(0) == 1.0);
  REQUIRE(s.alpha_bar(1) == 1.0 - 1e-4);
}

TEST_CASE("default endpoints rescale with the step count") {
  const NoiseSchedule s = build_linear(500);
  REQUIRE(s.beta(1) == 2e-4);
  REQUIRE(s.beta(500) == 0.04);
  const NoiseSchedule s200 = build_linear(200);
  REQUIRE(s200.beta(1) == Catch::Approx(5e-4).margin(0));
  REQUIRE(s200.beta(200) == Catch::Approx(0.1).margin(0));
}

TEST_CASE("alpha_bar matches a brute-force product") {
  const NoiseSchedule s = build_linear(1000);
  double prod = 1.0;
  for (std::size_t t = 1; t <= 1000; ++t) prod *= 1.0 - s.beta(t);
  REQUIRE(s.alpha_bar(1000) == Catch::Approx(prod).epsilon(1e-12));
  prod = 1.0;
  for (std::size_t t = 1; t <= 137; ++t) prod *= s.alpha(t);
  REQUIRE(s.alpha_bar(137) == Catch::Approx(prod).epsilon(1e-12));
}

TEST_CASE("betas increase monotonically") {
  const NoiseSchedule s = build_linear(1000);
  for (std::size_t t = 2; t <= 1000; ++t) REQUIRE(s.beta(t) > s.beta(t - 1));
}

TEST_CASE("posterior variance reference values") {
  const NoiseSchedule s = build_linear(1000);
  REQUIRE(s.posterior_var(1) == 0.0);
  const std::size_t t = 500;
  const double want =
      (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
  REQUIRE(s.posterior_var(t) == Catch::Approx(want).margin(1e-12));
  for (std::size_t u = 1; u <= 1000; ++u) REQUIRE(s.posterior_var(u) <= s.beta(u));
}

TEST_CASE("posterior_variance selects the requested variant") {
  const NoiseSchedule s = build_linear(1000);
  REQUIRE(posterior_variance(s, 300, SigmaVariant::Beta) == s.beta(300));
  REQUIRE(posterior_variance(s, 300, SigmaVariant::BetaTilde) == s.posterior_var(300));
}

TEST_CASE("construction rejects bad arguments") {
  REQUIRE_THROWS_AS(build_linear(1), std::invalid_argument);
  REQUIRE_THROWS_AS(build_linear(0), std::invalid_argument);
  REQUIRE_THROWS_AS(build_linear(10, 0.0, 0.02), std::invalid_argument);
  REQUIRE_THROWS_AS(build_linear(10, 1e-4, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(build_linear(10, 0.02, 1e-4), std::invalid_argument);
}

TEST_CASE("accessors are range checked") {
  const NoiseSchedule s = build_linear(10, 1e-4, 0.02);
  REQUIRE_THROWS_AS(s.beta(0), std::out_of_range);
  REQUIRE_THROWS_AS(s.beta(11), std::out_of_range);
  REQUIRE_THROWS_AS(s.alpha_bar(11), std::out_of_range);
  REQUIRE_NOTHROW(s.alpha_bar(0));
}

TEST_CASE("q_sample degenerate inputs are exact") {
  const NoiseSchedule s = build_linear(1000);
  const DenseVector x0{2.0, -3.0};
  const DenseVector zero(2, 0.0);
  const DenseVector eps{1.0, 0.5};

  const DenseVector no_noise = q_sample(s, x0, 400, zero);
  const double root_ab = std::sqrt(s.alpha_bar(400));
  REQUIRE(no_noise[0] == root_ab * 2.0);
  REQUIRE(no_noise[1] == root_ab * -3.0);

  const DenseVector pure_noise = q_sample(s, zero, 400, eps);
  const double root_1mab = std::sqrt(1.0 - s.alpha_bar(400));
  REQUIRE(pure_noise[0] == root_1mab * 1.0);
  REQUIRE(pure_noise[1] == root_1mab * 0.5);
}

TEST_CASE("q_sample at t = T has the right marginal moments") {
  const NoiseSchedule s = build_linear(1000);
  const DenseVector x0{1.5};
  RngStream rng(99, 0);
  const std::size_t n = 200000;
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const DenseVector eps{rng.next_gaussian()};
    const double v = q_sample(s, x0, 1000, eps)[0];
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;

  const double want_mean = std::sqrt(s.alpha_bar(1000)) * 1.5;
  const double want_var = 1.0 - s.alpha_bar(1000);
  const double stderr_mean = std::sqrt(want_var / static_cast<double>(n));
  REQUIRE(std::abs(mean - want_mean) < 4.0 * stderr_mean);
  REQUIRE(var == Catch::Approx(want_var).epsilon(0.02));
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "entdiff/linalg.hpp"
#include "entdiff/rng.hpp"

using namespace entdiff;

TEST_CASE("matvec against hand expansion") {
  DenseMatrix a(2, 3);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(0, 2) = 3;
  a(1, 0) = 4;
  a(1, 1) = 5;
  a(1, 2) = 6;
  const DenseVector x{1, -1, 2};
  const DenseVector y = matvec(a, x);
  REQUIRE(y.size() == 2);
  REQUIRE(y[0] == Catch::Approx(1 - 2 + 6).margin(0));
  REQUIRE(y[1] == Catch::Approx(4 - 5 + 12).margin(0));

  const DenseVector yt = matvec_transposed(a, DenseVector{1, 1});
  REQUIRE(yt[0] == 5.0);
  REQUIRE(yt[1] == 7.0);
  REQUIRE(yt[2] == 9.0);
}

TEST_CASE("matmul matches naive triple loop") {
  RngStream rng(3, 0);
  DenseMatrix a(4, 5), b(5, 3);
  for (double& v : a.data) v = rng.next_gaussian();
  for (double& v : b.data) v = rng.next_gaussian();
  const DenseMatrix c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
      REQUIRE(c(i, j) == Catch::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("transpose and trace") {
  DenseMatrix a(2, 3);
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<double>(i);
  const DenseMatrix t = transposed(a);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(t(j, i) == a(i, j));

  DenseMatrix sq(2, 2);
  sq(0, 0) = 3;
  sq(1, 1) = -1;
  REQUIRE(trace(sq) == 2.0);
  REQUIRE_THROWS_AS(trace(a), std::invalid_argument);
}

TEST_CASE("vector helpers") {
  DenseVector x{3, 4};
  REQUIRE(dot(x, x) == 25.0);
  REQUIRE(norm2(x) == 5.0);
  DenseVector y{1, 1};
  axpy(2.0, x, y);
  REQUIRE(y[0] == 7.0);
  REQUIRE(y[1] == 9.0);
  scale_in_place(y, 0.5);
  REQUIRE(y[0] == 3.5);
  const DenseVector z = scaled(x, -1.0);
  REQUIRE(z[0] == -3.0);
}

TEST_CASE("add_outer accumulates u v^T") {
  DenseMatrix a(2, 2);
  a.fill(1.0);
  add_outer(a, DenseVector{1, 2}, DenseVector{3, 4}, 2.0);
  REQUIRE(a(0, 0) == 1 + 2 * 3);
  REQUIRE(a(0, 1) == 1 + 2 * 4);
  REQUIRE(a(1, 0) == 1 + 2 * 6);
  REQUIRE(a(1, 1) == 1 + 2 * 8);
}

TEST_CASE("logsumexp of [0, 0] is ln 2") {
  REQUIRE(logsumexp(DenseVector{0.0, 0.0}) == Catch::Approx(std::log(2.0)).margin(1e-15));
}

TEST_CASE("logsumexp survives large inputs") {
  const double v = logsumexp(DenseVector{1000.0, 1000.0});
  REQUIRE(std::isfinite(v));
  REQUIRE(v == Catch::Approx(1000.0 + std::log(2.0)).margin(1e-12));
}

TEST_CASE("logsumexp matches the naive sum on small inputs") {
  RngStream rng(17, 0);
  for (int rep = 0; rep < 50; ++rep) {
    DenseVector v(5);
    for (double& x : v) x = rng.next_gaussian();
    double naive = 0.0;
    for (double x : v) naive += std::exp(x);
    REQUIRE(logsumexp(v) == Catch::Approx(std::log(naive)).margin(1e-12));
  }
}

TEST_CASE("logsumexp is shift invariant") {
  const DenseVector v{0.3, -1.2, 2.5};
  DenseVector shifted = v;
  for (double& x : shifted) x += 100.0;
  REQUIRE(logsumexp(shifted) == Catch::Approx(logsumexp(v) + 100.0).margin(1e-12));
}

TEST_CASE("logsumexp rejects empty input") {
  REQUIRE_THROWS_AS(logsumexp(DenseVector{}), std::invalid_argument);
}

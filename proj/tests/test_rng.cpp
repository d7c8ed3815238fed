#include <catch_amalgamated.hpp>

#include "xrinit/rng.hpp"

using namespace xrinit;

TEST_CASE("keyed draws are pure functions of (key, counter)") {
  const RandomKey k(42);
  REQUIRE(k.bits(7) == RandomKey(42).bits(7));
  REQUIRE(k.u01(3) == RandomKey(42).u01(3));
  REQUIRE(k.sub(5).normal(11) == RandomKey(42).sub(5).normal(11));
  REQUIRE(k.bits(7) != k.bits(8));
  REQUIRE(RandomKey(42).bits(0) != RandomKey(43).bits(0));
}

TEST_CASE("u01 is uniform enough") {
  const RandomKey k(1);
  double sum = 0.0;
  int below_half = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = k.u01(static_cast<std::uint64_t>(i));
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    if (u < 0.5) ++below_half;
  }
  REQUIRE(sum / n == Catch::Approx(0.5).margin(0.01));
  REQUIRE(static_cast<double>(below_half) / n == Catch::Approx(0.5).margin(0.015));
}

TEST_CASE("normal has unit variance") {
  const RandomKey k(2);
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = k.normal(static_cast<std::uint64_t>(i));
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  REQUIRE(mean == Catch::Approx(0.0).margin(0.03));
  REQUIRE(sum2 / n - mean * mean == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("below stays in range") {
  const RandomKey k(3);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(k.below(static_cast<std::uint64_t>(i), 7) < 7);
  }
}

TEST_CASE("poisson mean tracks lambda") {
  const RandomKey k(4);
  for (double lambda : {0.5, 4.0, 20.0, 120.0}) {
    double sum = 0.0;
    const int n = 4000;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(k.sub(static_cast<std::uint64_t>(lambda * 1000)).poisson(static_cast<std::uint64_t>(i), lambda));
    REQUIRE(sum / n == Catch::Approx(lambda).epsilon(0.08));
  }
}

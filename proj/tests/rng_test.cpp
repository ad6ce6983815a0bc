#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "dsgd/rng.hpp"

using namespace dsgd;

TEST_CASE("counter hash is a pure function of its key") {
  const auto a = counter_hash(42, StreamDomain::gradient_noise, 3, 100, 2, 7);
  const auto b = counter_hash(42, StreamDomain::gradient_noise, 3, 100, 2, 7);
  CHECK(a == b);
  CHECK(a != counter_hash(43, StreamDomain::gradient_noise, 3, 100, 2, 7));
  CHECK(a != counter_hash(42, StreamDomain::dataset, 3, 100, 2, 7));
  CHECK(a != counter_hash(42, StreamDomain::gradient_noise, 4, 100, 2, 7));
  CHECK(a != counter_hash(42, StreamDomain::gradient_noise, 3, 101, 2, 7));
  CHECK(a != counter_hash(42, StreamDomain::gradient_noise, 3, 100, 3, 7));
  CHECK(a != counter_hash(42, StreamDomain::gradient_noise, 3, 100, 2, 8));
}

TEST_CASE("uniform01 stays inside the open unit interval") {
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = uniform01(7, StreamDomain::estimator, 0, i, 0, 0);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  // degenerate bit patterns cannot produce 0 or 1 either
  CHECK(uniform01_from_bits(0) > 0.0);
  CHECK(uniform01_from_bits(~0ull) < 1.0);
}

TEST_CASE("gaussian stream has unit moments") {
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = gaussian(11, StreamDomain::gradient_noise, 1, i, 0, 0);
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_below respects the bound and covers it") {
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = uniform_below(5, StreamDomain::sample_pick, 0, i, 0, 0, 7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

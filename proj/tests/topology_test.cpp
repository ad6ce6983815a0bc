#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dsgd/topology.hpp"

using namespace dsgd;

namespace {

constexpr double kPi = 3.14159265358979323846;

// independent oracle: eigenvalues of the ring matrix are
// (1 + 2 cos(2 pi j / n)) / 3, so for n >= 2
// rho = (max{|l_2|, |l_n|})^2 with l_j from that formula.
double circulant_ring_rho(int n) {
  if (n == 1) return 0.0;
  double second = 0.0;
  for (int j = 1; j < n; ++j)
    second = std::max(second, std::abs((1.0 + 2.0 * std::cos(2.0 * kPi * j / n)) / 3.0));
  return second * second;
}

void check_doubly_stochastic(const WeightMatrix& w) {
  const int n = w.size();
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      CHECK(w.at(i, j) >= 0.0);
      CHECK(w.at(i, j) <= 1.0);
      CHECK(w.at(i, j) == w.at(j, i));
      row += w.at(i, j);
    }
    CHECK(std::abs(row - 1.0) <= 1e-12);
  }
  CHECK(std::abs(w.eigenvalues().front() - 1.0) <= 1e-10);
}

}  // namespace

TEST_CASE("ring constructor shapes") {
  SUBCASE("n=1 is the scalar 1 with rho 0") {
    const auto w = WeightMatrix::ring(1);
    CHECK(w.at(0, 0) == 1.0);
    CHECK(w.rho() == 0.0);
  }
  SUBCASE("n=2 merges the coincident neighbors") {
    const auto w = WeightMatrix::ring(2);
    CHECK(w.at(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(w.at(0, 1) == doctest::Approx(2.0 / 3.0));
    check_doubly_stochastic(w);
  }
  SUBCASE("n=3 is the all-1/3 matrix with rho 0") {
    const auto w = WeightMatrix::ring(3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(w.at(i, j) == doctest::Approx(1.0 / 3.0));
    CHECK(w.rho() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("n=5 has 1/3 exactly on the three ring positions") {
    const auto w = WeightMatrix::ring(5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const bool neighbor = j == i || j == (i + 1) % 5 || j == (i + 4) % 5;
        CHECK(w.at(i, j) == (neighbor ? 1.0 / 3.0 : 0.0));
      }
    check_doubly_stochastic(w);
    CHECK(w.max_degree() == 2);
  }
  SUBCASE("n=0 rejected") { CHECK_THROWS_AS(WeightMatrix::ring(0), std::invalid_argument); }
}

TEST_CASE("complete constructor") {
  const auto w4 = WeightMatrix::complete(4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(w4.at(i, j) == 0.25);
  CHECK(w4.rho() == doctest::Approx(0.0).epsilon(1e-12));
  check_doubly_stochastic(w4);

  CHECK(WeightMatrix::complete(1).at(0, 0) == 1.0);
  const auto w2 = WeightMatrix::complete(2);
  CHECK(w2.at(0, 0) == 0.5);
  CHECK(w2.eigenvalues()[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w2.eigenvalues()[1] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK_THROWS_AS(WeightMatrix::complete(0), std::invalid_argument);
}

TEST_CASE("custom matrices validate") {
  SUBCASE("identity is accepted with a spectral warning") {
    const auto w = WeightMatrix::from_entries(
        {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
    CHECK(w.rho() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.spectral_warning().has_value());
  }
  SUBCASE("2x2 mixing matrix, eigenvalues by hand: {1, 0.2}") {
    const auto w = WeightMatrix::from_entries({{0.6, 0.4}, {0.4, 0.6}});
    CHECK(w.eigenvalues()[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(w.rho() == doctest::Approx(0.04).epsilon(1e-12));
    CHECK_FALSE(w.spectral_warning().has_value());
  }
  SUBCASE("asymmetric rejected with indices in the message") {
    try {
      WeightMatrix::from_entries({{0.9, 0.2}, {0.1, 0.8}});
      FAIL("expected a validation error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("not symmetric") != std::string::npos);
      CHECK(std::string(e.what()).find("(0,1)") != std::string::npos);
    }
  }
  SUBCASE("negative entry rejected") {
    CHECK_THROWS_WITH_AS(
        WeightMatrix::from_entries({{0.5, 0.6, -0.1}, {0.6, 0.3, 0.1}, {-0.1, 0.1, 1.0}}),
        doctest::Contains("negative entry"), std::invalid_argument);
  }
  SUBCASE("bad row sum rejected") {
    CHECK_THROWS_WITH_AS(WeightMatrix::from_entries({{0.5, 0.4}, {0.4, 0.5}}),
                         doctest::Contains("sums to"), std::invalid_argument);
  }
  SUBCASE("non-square rejected") {
    CHECK_THROWS_WITH_AS(WeightMatrix::from_entries({{0.5, 0.5}, {0.5}}),
                         doctest::Contains("not square"), std::invalid_argument);
  }
  SUBCASE("row sums within 1e-9 tolerated for user matrices") {
    const double v = 0.5 + 2e-10;
    CHECK_NOTHROW(WeightMatrix::from_entries({{v, 0.5}, {0.5, v}}));
  }
}

TEST_CASE("spectral gap matches the circulant oracle on rings") {
  CHECK(WeightMatrix::ring(4).rho() == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  for (int n = 4; n <= 64; ++n) {
    const double rho = WeightMatrix::ring(n).rho();
    CHECK(std::abs(rho - circulant_ring_rho(n)) <= 1e-10);
  }
  CHECK(WeightMatrix::complete(8).rho() == doctest::Approx(0.0).epsilon(1e-12));
  // deterministic across instances
  CHECK(WeightMatrix::ring(10).rho() == WeightMatrix::ring(10).rho());
}

TEST_CASE("cached rho agrees with a recomputation from the eigenvalues") {
  for (int n : {2, 5, 8, 17}) {
    const auto w = WeightMatrix::ring(n);
    const auto& eig = w.eigenvalues();
    const double recomputed =
        std::pow(std::max(std::abs(eig[1]), std::abs(eig[n - 1])), 2);
    CHECK(w.rho() == recomputed);
  }
}

TEST_CASE("rho < 1 for connected builtin topologies, identity excepted") {
  for (int n = 2; n <= 32; ++n) {
    CHECK(WeightMatrix::ring(n).rho() < 1.0);
    CHECK(WeightMatrix::complete(n).rho() < 1.0);
  }
  CHECK(WeightMatrix::identity(6).rho() == doctest::Approx(1.0));
}

TEST_CASE("mixing decay") {
  SUBCASE("complete graph mixes in one step") {
    const auto [lhs, bound] = mixing_decay(WeightMatrix::complete(5), 1, 2);
    CHECK(lhs == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(bound == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("identity never mixes: lhs 0.5, bound 1 for n=2, k=5") {
    const auto [lhs, bound] = mixing_decay(WeightMatrix::identity(2), 5, 0);
    CHECK(lhs == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(bound == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("ring n=4, k=2 sits under (1/9)^2") {
    const auto [lhs, bound] = mixing_decay(WeightMatrix::ring(4), 2, 0);
    CHECK(bound == doctest::Approx(1.0 / 81.0).epsilon(1e-12));
    CHECK(lhs <= 1.0 / 81.0 + 1e-12);
  }
  SUBCASE("negative k rejected") {
    CHECK_THROWS_AS(mixing_decay(WeightMatrix::ring(4), -1, 0), std::invalid_argument);
  }
  SUBCASE("decay inequality holds on rings for every node up to k=200") {
    for (int n : {4, 6, 9, 12}) {
      const auto w = WeightMatrix::ring(n);
      for (int i = 0; i < n; ++i)
        for (const auto& point : mixing_decay_curve(w, 200, i))
          CHECK(point.lhs <= point.bound + 1e-12);
    }
  }
}

TEST_CASE("ring rho asymptote fit") {
  SUBCASE("fit over {16,32,64} lands within 5% of the oracle fit") {
    const auto fit = ring_rho_asymptotic_fit({16, 32, 64});
    double oracle = 0.0;
    for (int n : {16, 32, 64}) oracle += (1.0 - circulant_ring_rho(n)) * n * n;
    oracle /= 3.0;
    CHECK(std::abs(fit.fitted_c - oracle) <= 0.05 * oracle);
    // the fitted constant tracks the Taylor value, not its double
    CHECK(std::abs(fit.fitted_c - fit.taylor_c) < std::abs(fit.fitted_c - fit.doubled_taylor_c));
    CHECK(fit.taylor_c == doctest::Approx(8.0 * kPi * kPi / 3.0));
    CHECK(fit.doubled_taylor_c == doctest::Approx(16.0 * kPi * kPi / 3.0));
  }
  SUBCASE("two-point smoke fit {5,6} is finite") {
    const auto fit = ring_rho_asymptotic_fit({5, 6});
    CHECK(std::isfinite(fit.fitted_c));
    CHECK(fit.fitted_c > 0.0);
  }
  SUBCASE("n=4 violates the precondition") {
    CHECK_THROWS_AS(ring_rho_asymptotic_fit({4, 8}), std::invalid_argument);
  }
  SUBCASE("fewer than two values rejected") {
    CHECK_THROWS_AS(ring_rho_asymptotic_fit({8}), std::invalid_argument);
  }
}

TEST_CASE("text round trip") {
  const auto w = WeightMatrix::ring(6);
  const std::string path = (std::filesystem::temp_directory_path() / "w_ring6.txt").string();
  w.save_text(path);
  const auto loaded = WeightMatrix::load_text(path);
  REQUIRE(loaded.size() == 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(loaded.at(i, j) == w.at(i, j));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(WeightMatrix::load_text("/nonexistent/w.txt"), std::invalid_argument);
}

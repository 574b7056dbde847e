#include <doctest.h>

#include <cmath>
#include <vector>

#include "ltsoups/error.hpp"
#include "ltsoups/merge.hpp"
#include "oracles.hpp"

using namespace ltsoups;

namespace {

BackboneConfig cfg() { return {.dim = 4, .hidden = {3}}; }

std::vector<ModelWeights> models(int n, std::uint64_t seed) {
  std::vector<ModelWeights> out;
  for (int i = 0; i < n; ++i) out.push_back(oracle::random_model(cfg(), 2, seed + static_cast<std::uint64_t>(i), 1.0));
  return out;
}

}  // namespace

TEST_SUITE("merge") {

TEST_CASE("uniform average") {
  auto ms = models(3, 1);
  CHECK(uniform_average(std::span(ms.data(), 1)).flat() == ms[0].flat());

  ModelWeights neg = ms[0];
  neg.flat() = -ms[0].flat();
  std::vector<ModelWeights> pair{ms[0], neg};
  CHECK(uniform_average(pair).flat().cwiseAbs().maxCoeff() == 0.0);

  std::vector<ModelWeights> rev{ms[2], ms[0], ms[1]};
  CHECK((uniform_average(ms).flat() - uniform_average(rev).flat()).cwiseAbs().maxCoeff() < 1e-15);

  std::vector<ModelWeights> none;
  CHECK_THROWS_AS(uniform_average(none), Error);
  std::vector<ModelWeights> mixed{ms[0], ModelWeights(cfg(), 3)};
  CHECK_THROWS_AS(uniform_average(mixed), Error);
}

TEST_CASE("bootstrap average") {
  auto ms = models(1, 5);
  CHECK(bootstrap_average(ms).flat() == ms[0].flat());
  ModelWeights a = ms[0], b = ms[0];
  Vector v = oracle::random_model(cfg(), 2, 99).flat();
  b.flat() += 2.0 * v;
  std::vector<ModelWeights> pair{a, b}, rev{b, a};
  CHECK((bootstrap_average(pair).flat() - (a.flat() + v)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(bootstrap_average(pair).flat() == bootstrap_average(rev).flat());
}

TEST_CASE("effective coefficients") {
  CHECK(effective_coefficients(1, 0.5) == std::vector<double>{0.5, 0.5});
  auto c = effective_coefficients(3, 0.7);
  std::vector<double> hand{0.343, 0.147, 0.21, 0.3};
  REQUIRE(c.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(hand[i]).epsilon(1e-14));
  for (int n = 1; n <= 8; ++n)
    for (double lam : {0.0, 0.3, 0.5, 0.7, 1.0}) {
      double s = 0.0;
      for (double x : effective_coefficients(n, lam)) s += x;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("recursive merge closed form and endpoints") {
  for (int n = 1; n <= 8; ++n) {
    auto ms = models(n, 10 * static_cast<std::uint64_t>(n));
    auto theta0 = oracle::random_model(cfg(), 2, 1000, 1.0);
    for (double lam : {0.0, 0.3, 0.5, 0.7, 1.0}) {
      auto merged = recursive_merge(ms, theta0, lam);
      // Expansion oracle written independently of effective_coefficients.
      Vector expect = std::pow(lam, n) * theta0.flat();
      for (int i = 1; i <= n; ++i)
        expect += (1 - lam) * std::pow(lam, n - i) * ms[static_cast<std::size_t>(i - 1)].flat();
      CHECK((merged.flat() - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(recursive_merge(ms, theta0, 0.0).flat() == ms.back().flat());
    CHECK(recursive_merge(ms, theta0, 1.0).flat() == theta0.flat());
  }
  MergeConfig bad{1.5, true};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("EMA recursion") {
  Vector theta = Vector::LinSpaced(5, -2, 2);
  EmaState s{Vector::Constant(5, 3.0), 1.0};
  ema_update(s, theta);
  CHECK(s.theta == theta);

  EmaState frozen{Vector::Constant(5, 3.0), 0.0};
  ema_update(frozen, theta);
  CHECK(frozen.theta == Vector::Constant(5, 3.0));

  const Vector start = Vector::Constant(5, 3.0);
  EmaState e{start, 0.3};
  for (int k = 0; k < 12; ++k) ema_update(e, theta);
  Vector expect = theta + std::pow(1 - 0.3, 12) * (start - theta);
  CHECK((e.theta - expect).cwiseAbs().maxCoeff() < 1e-13);
}

}

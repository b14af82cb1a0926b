#include <doctest.h>

#include <cmath>
#include <numeric>

#include "transcoder/errors.hpp"
#include "transcoder/train/sampling.hpp"

using namespace transcoder;

TEST_CASE("sampling distribution follows the log-smoothed formula") {
  const std::size_t sizes[] = {167288, 24927};
  const auto p = train::sampling_distribution(sizes, 1.0);
  const double a = std::log(167288.0) + 1.0;
  const double b = std::log(24927.0) + 1.0;
  CHECK(p[0] == doctest::Approx(a / (a + b)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(b / (a + b)).epsilon(1e-14));
  CHECK(p[0] == doctest::Approx(0.5394).epsilon(1e-3));
}

TEST_CASE("sampling distribution sums to one and over-samples small tasks") {
  const std::size_t sizes[] = {10, 1000, 100000};
  for (const double delta : {0.5, 1.0, 5.0}) {
    const auto p = train::sampling_distribution(sizes, delta);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    CHECK(p[0] > 10.0 / 101010.0);
    CHECK(p[0] < p[1]);
    CHECK(p[1] < p[2]);
  }
}

TEST_CASE("larger delta flattens the distribution") {
  const std::size_t sizes[] = {100, 100000};
  const auto sharp = train::sampling_distribution(sizes, 0.1);
  const auto flat = train::sampling_distribution(sizes, 50.0);
  CHECK(flat[0] > sharp[0]);
  CHECK(flat[0] < 0.5);
}

TEST_CASE("equal sizes give a uniform distribution") {
  const std::size_t sizes[] = {500, 500, 500, 500};
  for (const double p : train::sampling_distribution(sizes, 1.0)) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("sampling distribution rejects bad input") {
  const std::size_t empty_task[] = {100, 0};
  CHECK_THROWS_AS(train::sampling_distribution(empty_task, 1.0), ConfigError);
  CHECK_THROWS_AS(train::sampling_distribution(std::span<const std::size_t>(), 1.0), ConfigError);
  const std::size_t ok[] = {100, 10};
  CHECK_THROWS_AS(train::sampling_distribution(ok, -1.0), ConfigError);
  CHECK_THROWS_AS(train::sampling_distribution(ok, 0.0), ConfigError);
}

TEST_CASE("apportion uses floors then largest remainders") {
  const double p[] = {0.5394, 0.4606};
  const auto n = train::apportion(p, 200);
  CHECK(n[0] == 108);
  CHECK(n[1] == 92);

  const double thirds[] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto t = train::apportion(thirds, 10);
  CHECK(t == std::vector<std::size_t>{4, 3, 3});  // tie goes to the lower index

  const double skewed[] = {0.98, 0.01, 0.01};
  const auto s = train::apportion(skewed, 10);
  CHECK(std::accumulate(s.begin(), s.end(), std::size_t{0}) == 10);
  CHECK(s[1] >= 1);
  CHECK(s[2] >= 1);

  CHECK_THROWS_AS(train::apportion(thirds, 2), ConfigError);
}

TEST_CASE("sampler draws follow P and are reproducible") {
  train::SamplerState a({"x", "y"}, {167288, 24927}, 1.0, 9);
  train::SamplerState b({"x", "y"}, {167288, 24927}, 1.0, 9);
  std::size_t first = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto k = a.draw();
    CHECK(k == b.draw());
    first += k == 0;
  }
  CHECK(static_cast<double>(first) / 20000.0 == doctest::Approx(a.probabilities()[0]).epsilon(0.03));
}

TEST_CASE("plan_epoch allocates the whole budget") {
  train::SamplerState s({"x", "y", "z"}, {1000, 100, 10}, 1.0, 1);
  const auto plan = train::plan_epoch(s, 60);
  std::size_t total = 0;
  for (const auto& a : plan) total += a.n_batches;
  CHECK(total == 60);
  CHECK(plan.size() == 3);
}

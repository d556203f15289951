#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "sle/driving.hpp"

using namespace sle;
using doctest::Approx;

TEST_CASE("uniform driving grid") {
  auto const path = sample_driving(2.0, 1.0, 0.01, 7);
  CHECK(path.size() == 101);
  CHECK(path.values[0] == 0.0);
  CHECK(path.times.back() == Approx(1.0));
  auto const again = sample_driving(2.0, 1.0, 0.01, 7);
  CHECK(again.values == path.values);
  CHECK(sample_driving(2.0, 1.0, 0.01, 8).values != path.values);
  auto const zero = sample_driving(0.0, 1.0, 0.01, 7);
  CHECK(std::all_of(zero.values.begin(), zero.values.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("increment variance is kappa dt") {
  double const kappa = 3.0, dt = 0.001;
  auto const path = sample_driving(kappa, 100.0, dt, 11);
  auto const n = path.intervals();
  REQUIRE(n == 100000);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += path.values[i + 1] - path.values[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto const d = path.values[i + 1] - path.values[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n - 1);
  // Sample variance of Gaussian increments has standard error sigma^2 sqrt(2/(n-1)).
  auto const se = kappa * dt * std::sqrt(2.0 / static_cast<double>(n - 1));
  CHECK(std::abs(var - kappa * dt) < 3.0 * se);
  CHECK(std::abs(mean) < 3.0 * std::sqrt(kappa * dt / static_cast<double>(n)));
}

TEST_CASE("bridge refinement keeps nodes and is order independent") {
  auto const base = sample_driving(4.0, 1.0, 0.1, 3);
  auto a = base;
  refine_interval(a, 7, 3);
  refine_interval(a, 2, 2);
  auto b = base;
  refine_interval(b, 2, 2);
  // Interval 7 of the base path moved by the 3 nodes inserted before it.
  refine_interval(b, 7 + 3, 3);
  CHECK(a.positions == b.positions);
  CHECK(a.values == b.values);
  CHECK(a.size() == base.size() + 3 + 7);
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto const it = std::find(a.positions.begin(), a.positions.end(), base.positions[i]);
    REQUIRE(it != a.positions.end());
    CHECK(a.values[static_cast<std::size_t>(it - a.positions.begin())] == base.values[i]);
  }
  CHECK(std::is_sorted(a.times.begin(), a.times.end()));

  auto const all = refine_all(base);
  CHECK(all.size() == 2 * base.size() - 1);
  std::vector<int> levels(base.intervals(), 1);
  auto c = base;
  refine_intervals(c, levels);
  CHECK(c.values == all.values);
}

TEST_CASE("bridge midpoint law") {
  // Midpoint of a bridge over [0, dt] between a and b: mean (a+b)/2, variance kappa dt / 4.
  double const kappa = 2.0, dt = 0.04;
  int const n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int s = 0; s < n; ++s) {
    auto p = sample_driving(kappa, dt, dt, static_cast<std::uint64_t>(s) + 100);
    REQUIRE(p.size() == 2);
    refine_interval(p, 0, 1);
    auto const dev = p.values[1] - 0.5 * (p.values[0] + p.values[2]);
    sum += dev;
    sum2 += dev * dev;
  }
  auto const mean = sum / n;
  auto const var = sum2 / n - mean * mean;
  auto const target = kappa * dt / 4.0;
  CHECK(std::abs(mean) < 3.0 * std::sqrt(target / n));
  CHECK(std::abs(var - target) < 3.0 * target * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("growing capacity grid") {
  auto const t = capacity_grid(10.0, 0.01, 2.0, 0.5);
  CHECK(t.front() == 0.0);
  CHECK(t.back() >= 10.0 * (1.0 - 1e-12));
  CHECK(t[t.size() - 2] < 10.0);
  for (std::size_t i = 1; i < t.size(); ++i) {
    CHECK(t[i] > t[i - 1]);
    CHECK(t[i] - t[i - 1] <= 0.5 + 1e-12);
  }
  CHECK(t[1] == Approx(0.01));
  auto const uniform = capacity_grid(1.0, 0.1, 0.0, 0.5);
  CHECK(uniform.size() == 11);
  auto const path = sample_driving_on(2.0, t, 9);
  CHECK(path.size() == t.size());
  CHECK(path.values[0] == 0.0);
}

TEST_CASE("keyed draws and seed schedule") {
  CHECK(keyed_normal(1, 2) == keyed_normal(1, 2));
  CHECK(keyed_normal(1, 2) != keyed_normal(1, 3));
  auto const u = keyed_uniform(4, 5);
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    seeds.insert(sample_seed(42, i));
  }
  CHECK(seeds.size() == 1000);
  CHECK(sample_seed(42, 0) != sample_seed(43, 0));
}

TEST_CASE("value_at is piecewise constant from the left node") {
  auto const p = sample_driving(2.0, 1.0, 0.25, 1);
  CHECK(p.value_at(0.0) == p.values[0]);
  CHECK(p.value_at(0.1) == p.values[0]);
  CHECK(p.value_at(0.3) == p.values[1]);
}

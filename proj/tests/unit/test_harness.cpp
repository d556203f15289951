#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "sle/harness.hpp"

using namespace sle;
using doctest::Approx;

namespace {

Trace segment_trace(double step) {
  // The unit segment from 1 to 0, as the lambda == 0 trace would draw it.
  Trace t;
  for (double x = 1.0; x > -0.5 * step; x -= step) {
    t.points.emplace_back(std::max(x, 0.0), 0.0);
    t.times.push_back(1.0 - x);
  }
  return t;
}

Trace flat_trace() {
  EngineConfig e;
  e.horizon = 4.0;
  e.zero_driving = true;
  return simulate_radial_trace(2.0, 1, e);
}

EngineConfig quick_engine() {
  EngineConfig e;
  e.horizon = 4.0;
  return e;
}

double brute_distance(std::vector<complex> const& pts, complex z) {
  double best = std::abs(pts[0] - z);
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    best = std::min(best, point_segment_distance(z, pts[k], pts[k + 1]));
  }
  return best;
}

}  // namespace

TEST_CASE("Wilson intervals") {
  // Closed forms: 0 of n has upper end z^2/(n + z^2).
  auto const z2 = kWilsonZ * kWilsonZ;
  auto const zero = wilson_interval(0, 10);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == Approx(z2 / (10.0 + z2)));
  auto const half = wilson_interval(5, 10);
  CHECK(half.lo == Approx(0.236593).epsilon(1e-5));
  CHECK(half.hi == Approx(0.763407).epsilon(1e-5));
  auto const all = wilson_interval(10, 10);
  CHECK(all.hi == 1.0);
  CHECK(all.lo == Approx(10.0 / (10.0 + z2)));
  CHECK_THROWS_AS(wilson_interval(11, 10), domain_error);

  auto const p = proportion(3, 40);
  CHECK(p.p_hat == Approx(0.075));
  CHECK(p.ci.lo <= p.p_hat);
  CHECK(p.p_hat <= p.ci.hi);
  CHECK(p.std_err == Approx((p.ci.hi - p.ci.lo) / (2.0 * kWilsonZ)));
  for (std::size_t h = 0; h <= 50; ++h) {
    auto const q = proportion(h, 50);
    CHECK(q.ci.lo <= q.p_hat);
    CHECK(q.p_hat <= q.ci.hi);
  }
}

TEST_CASE("bootstrap interval") {
  std::vector<double> const constant(30, 2.5);
  auto const c = bootstrap_mean_interval(constant, 1);
  CHECK(c.lo == 2.5);
  CHECK(c.hi == 2.5);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(1.0, 1.0);
  std::vector<double> v(400);
  for (auto& x : v) {
    x = g(rng);
  }
  auto const a = bootstrap_mean_interval(v, 7);
  auto const b = bootstrap_mean_interval(v, 7);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  // Width close to 2 * 1.96 / sqrt(n).
  CHECK(a.hi - a.lo == Approx(2.0 * 1.96 / 20.0).epsilon(0.2));
  CHECK_THROWS(bootstrap_mean_interval(std::vector<double>{}, 1));
}

TEST_CASE("exponent fit") {
  std::vector<SweepPoint> exact;
  for (double r : {0.16, 0.08, 0.04, 0.02}) {
    exact.push_back({r, std::sqrt(r), 0.0});
  }
  auto const f = fit_exponent(exact);
  CHECK(f.slope == Approx(0.5).epsilon(1e-12));
  CHECK(f.slope_stderr < 1e-10);

  std::vector<SweepPoint> cubic;
  for (double r : {0.5, 0.25, 0.125}) {
    cubic.push_back({r, 0.3 * r * r * r, 0.0});
  }
  auto const fc = fit_exponent(cubic);
  CHECK(fc.slope == Approx(3.0).epsilon(1e-12));
  CHECK(fc.intercept == Approx(std::log(0.3)).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.01);
  int outside = 0;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<SweepPoint> noisy;
    for (double r = 0.2; r > 0.005; r /= 2.0) {
      auto const p = 0.8 * std::pow(r, 0.75);
      noisy.push_back({r, p * (1.0 + noise(rng)), 0.01 * p});
    }
    auto const fn = fit_exponent(noisy);
    outside += std::abs(fn.slope - 0.75) > 3.0 * fn.slope_stderr;
  }
  CHECK(outside <= 1);

  std::vector<SweepPoint> with_zero = exact;
  with_zero.push_back({0.01, 0.0, 0.0});
  auto const fz = fit_exponent(with_zero);
  REQUIRE(fz.dropped.size() == 1);
  CHECK(fz.dropped[0] == 0.01);
  CHECK(fz.slope == Approx(0.5));
  std::vector<SweepPoint> const equal{{0.1, 0.2, 0.01}, {0.1, 0.3, 0.01}, {0.1, 0.25, 0.01}};
  CHECK_THROWS_AS(fit_exponent(equal), domain_error);
  std::vector<SweepPoint> const two{{0.1, 0.2, 0.01}, {0.2, 0.3, 0.01}};
  CHECK_THROWS_AS(fit_exponent(two), domain_error);
}

TEST_CASE("domination with a single constant") {
  std::vector<double> const kernel{0.5, 0.3, 0.1};
  auto const same = check_domination(kernel, kernel);
  CHECK(same.c_max == Approx(1.0));
  CHECK(same.spread == Approx(1.0));
  CHECK(same.pass);
  // p growing relative to the kernel without bound.
  std::vector<double> const growth{0.5, 0.9, 0.99};
  std::vector<double> const tiny{0.5, 0.05, 0.001};
  auto const bad = check_domination(growth, tiny);
  CHECK_FALSE(bad.pass);
  CHECK(bad.spread > 3.0);
  std::vector<double> const zero{0.0, 0.1, 0.1};
  CHECK_FALSE(check_domination(zero, kernel).pass);
  CHECK_THROWS_AS(check_domination(kernel, std::vector<double>{1.0}), domain_error);
}

TEST_CASE("segment index agrees with brute force") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<complex> pts{{0.0, 0.0}};
  for (int i = 0; i < 300; ++i) {
    pts.push_back(pts.back() + complex(0.05 * u(rng), 0.05 * u(rng)));
  }
  for (double bucket : {0.01, 0.05, 0.2}) {
    SegmentIndex const index(pts, bucket);
    for (int q = 0; q < 2000; ++q) {
      complex const z(0.8 * u(rng), 0.8 * u(rng));
      auto const exact = brute_distance(pts, z);
      auto const got = index.distance(z, bucket);
      CHECK(got == std::min(exact, bucket));
    }
  }
}

TEST_CASE("Minkowski content of a segment") {
  auto const t = segment_trace(1e-3);
  double const r = 0.01;
  auto const est = minkowski_content(t, 1.0, r, r / 8.0, std::nullopt);
  auto const exact = 2.0 + kPi * r;
  CHECK(est.content_lower <= exact);
  CHECK(exact <= est.content_upper);
  CHECK(est.content_lower <= est.content);
  CHECK(est.content <= est.content_upper);
  CHECK(est.content == Approx(exact).epsilon(0.02));
  auto const fine = minkowski_content(t, 1.0, r, r / 16.0, std::nullopt);
  CHECK(std::abs(fine.content - est.content) < est.content_upper - est.content_lower);
  CHECK(fine.content_upper - fine.content_lower < est.content_upper - est.content_lower);
  CHECK(fine.content == Approx(exact).epsilon(0.01));
  CHECK_THROWS_AS(minkowski_content(t, 1.0, r, r / 3.0, std::nullopt), domain_error);
  // Whole-plane region means no restriction.
  auto const plane = minkowski_content(t, 1.0, r, r / 8.0, Region::plane());
  CHECK(plane.cells == est.cells);
  // Restricting to the upper half counts about half the cells.
  auto const upper = minkowski_content(t, 1.0, r, r / 8.0, Region::box(-1.0, 2.0, 0.0, 1.0));
  CHECK(static_cast<double>(upper.cells) == Approx(0.5 * static_cast<double>(est.cells)).epsilon(0.02));
}

TEST_CASE("Minkowski content of the lambda == 0 trace") {
  auto const t = flat_trace();
  double const r = 0.02;
  auto const est = minkowski_content(t, 1.0, r, r / 8.0, Region::unit_disc());
  // The trace ends short of 0, so the neighbourhood is a bit shorter than
  // the unit segment's; the half-disc around 1 falls outside the region.
  auto const tip = std::abs(t.points.back());
  auto const length = 1.0 - tip;
  auto const expected = 2.0 * length + 0.5 * kPi * r;
  CHECK(est.content == Approx(expected).epsilon(0.02));
}

TEST_CASE("saturated neighbourhood fills the region") {
  Trace t;
  t.points = {{0.1, 0.0}, {0.2, 0.1}};
  double const r = 2.5;
  double const d = 1.25;
  auto const est = minkowski_content(t, d, r, 0.005, Region::unit_disc());
  auto const expected = std::pow(r, d - 2.0) * kPi;
  CHECK(est.content == Approx(expected).epsilon(1e-3));
  CHECK(Region::unit_disc().area() == Approx(kPi));
  CHECK(std::isinf(Region::plane().area()));
}

TEST_CASE("regions round-trip through JSON") {
  for (auto const& region : {Region::unit_disc(), Region::disc({0.5, 0.5}, 0.25),
                             Region::box(-1.0, 1.0, 0.0, 0.5), Region::plane()}) {
    auto const back = Region::from_json(region.to_json());
    CHECK(back.to_json() == region.to_json());
  }
  CHECK_THROWS(Region::from_json(nlohmann::json("square")));
  CHECK_THROWS(Region::disc({0.0, 0.0}, -1.0));
  CHECK(Region::box(0.0, 1.0, 0.0, 2.0).area() == Approx(2.0));
}

TEST_CASE("crossings of the lambda == 0 trace") {
  auto const t = flat_trace();
  std::vector<Circle> const circles{{{0.5, 0.0}, 0.2, 0}, {{0.5, 0.0}, 0.05, 0}, {{0.0, 0.8}, 0.05, 1}};
  auto const rec = crossing_times(t, circles);
  REQUIRE(rec.tau[0].has_value());
  REQUIRE(rec.tau[1].has_value());
  CHECK(*rec.tau[0] < *rec.tau[1]);
  CHECK_FALSE(rec.tau[2].has_value());
  CHECK(rec.order() == std::vector<int>{0, 1});
  // The entry point lies on the circle.
  auto const k = static_cast<std::size_t>(*rec.tau[0]);
  auto const frac = *rec.tau[0] - static_cast<double>(k);
  auto const p = t.points[k] + frac * (t.points[k + 1] - t.points[k]);
  CHECK(std::abs(p - complex(0.7, 0.0)) < 1e-9);
}

TEST_CASE("crossings respect enclosure on random traces") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int both = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    auto const t = simulate_radial_trace(4.0, sample_seed(9, s), quick_engine());
    for (int i = 0; i < 20; ++i) {
      auto const c = std::polar(0.2 + 0.6 * u(rng), 2.0 * kPi * u(rng));
      std::vector<Circle> const nested{{c, 0.15, 0}, {c, 0.06, 0}, {c, 0.015, 0}};
      auto const rec = crossing_times(t, nested);
      for (std::size_t a = 0; a < nested.size(); ++a) {
        for (std::size_t b = a + 1; b < nested.size(); ++b) {
          if (rec.tau[b]) {
            REQUIRE(rec.tau[a].has_value());
            CHECK(*rec.tau[a] < *rec.tau[b]);
            ++both;
          }
        }
      }
    }
  }
  CHECK(both > 50);
}

TEST_CASE("ordered chains") {
  std::vector<Trace> traces;
  for (std::uint64_t s = 0; s < 30; ++s) {
    traces.push_back(simulate_radial_trace(2.0, sample_seed(10, s), quick_engine()));
  }
  // A circle of radius > 2 centred in the disc contains every trace.
  std::vector<Circle> const huge{{{0.3, 0.0}, 2.5, 0}};
  OrderedChain const single{{0}, {}};
  // Inner circle strictly before its enclosing circle is impossible.
  std::vector<Circle> const nested{{{-0.4, 0.3}, 0.3, 0}, {{-0.4, 0.3}, 0.1, 0}};
  OrderedChain const backwards{{1, 0}, {true}};
  for (auto const& t : traces) {
    CHECK(chain_occurs(single, crossing_times(t, huge)));
    CHECK_FALSE(chain_occurs(backwards, crossing_times(t, nested)));
  }

  OrderedEvent e;
  e.z0 = {0.4, 0.2};
  e.R0 = 0.3;
  e.r0 = 0.1;
  e.r0_prime = 0.02;
  e.rings = {{{-0.4, -0.3}, 0.2, 0.05}};
  CHECK_NOTHROW(e.validate());
  auto const circles = e.circles();
  REQUIRE(circles.size() == 4);
  CHECK(circles[0].radius == 0.1);
  CHECK(circles[3].radius == 0.02);
  auto const chain = e.chain();
  CHECK(chain.strict == std::vector<bool>{true, false, true});
  auto const params = exponents(2.0);
  std::vector<Ring> const rings{{0.5, 0.05, 0.2}};
  CHECK(e.kernel(params) == Approx(ordered_crossing_kernel(params, 0.1, 0.3, rings)));
  auto const freq = ordered_event_frequency(std::span<Trace const>(traces), e);
  CHECK(freq.n == traces.size());
  CHECK(freq.p_hat <= 1.0);
  CHECK(OrderedEvent::from_json(e.to_json()).to_json() == e.to_json());

  auto bad = e;
  bad.r0_prime = 0.2;
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = e;
  bad.R0 = 0.5;  // encloses 0
  CHECK_THROWS_AS(bad.validate(), domain_error);
  bad = e;
  bad.rings = {{{0.45, 0.2}, 0.2, 0.05}};
  CHECK_THROWS_AS(bad.validate(), domain_error);
}

TEST_CASE("moment tables") {
  std::vector<std::vector<double>> const constant{std::vector<double>(50, 1.7),
                                                  std::vector<double>(50, 1.2)};
  auto const t = moment_table({0.02, 0.01}, constant, 3, 1);
  for (int n = 1; n <= 3; ++n) {
    CHECK(t.at(n, 0).moment == Approx(std::pow(1.7, n)));
    CHECK(t.at(n, 1).moment == Approx(std::pow(1.2, n)));
    CHECK(t.at(n, 0).ci.lo == Approx(std::pow(1.7, n)));
    CHECK(t.at(n, 1).running_min == Approx(std::pow(1.2, n)));
    CHECK(t.at(n, 0).running_min == Approx(std::pow(1.7, n)));
  }
  CHECK_THROWS_AS(t.at(4, 0), domain_error);

  std::mt19937_64 rng(6);
  std::exponential_distribution<double> ex(1.0);
  std::vector<std::vector<double>> random(3, std::vector<double>(200));
  for (auto& col : random) {
    for (auto& x : col) {
      x = ex(rng);
    }
  }
  auto const r = moment_table({0.04, 0.02, 0.01}, random, 4, 2);
  for (std::size_t ri = 0; ri < 3; ++ri) {
    for (int n = 1; n <= 4; ++n) {
      CHECK(std::pow(r.at(1, ri).moment, n) <= r.at(n, ri).moment);
      CHECK(r.at(n, ri).ci.lo <= r.at(n, ri).moment);
      CHECK(r.at(n, ri).moment <= r.at(n, ri).ci.hi);
    }
  }
  auto const again = moment_table({0.04, 0.02, 0.01}, random, 4, 2);
  CHECK(again.at(2, 1).ci.lo == r.at(2, 1).ci.lo);
}

TEST_CASE("hit statistics") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  std::vector<std::vector<double>> dist(500, std::vector<double>(2));
  for (auto& d : dist) {
    d = {u(rng), u(rng)};
  }
  std::vector<std::vector<double>> const sets{{0.02, 0.02}, {0.05, 0.04}, {0.1, 0.1}, {0.1, 0.02}};
  auto const h = evaluate_hits(dist, sets);
  CHECK(h.joint[0].hits <= h.joint[1].hits);
  CHECK(h.joint[1].hits <= h.joint[2].hits);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (auto const& m : h.marginal[s]) {
      CHECK(h.joint[s].hits <= m.hits);
    }
  }
  CHECK(h.marginal[3][0].hits == h.marginal[2][0].hits);

  auto const params = exponents(2.0);
  std::vector<complex> const z{{0.4, 0.2}, {-0.3, 0.1}};
  std::vector<double> const r{2.0, 2.0};
  auto const specs = make_point_specs(Mode::radial, z, r);
  auto const all = estimate_hit_probability(params, Mode::radial, specs, 20, 3, quick_engine(), 2);
  CHECK(all.joint[0].p_hat == 1.0);
  std::vector<double> const small{0.05, 0.05};
  auto const small_specs = make_point_specs(Mode::radial, z, small);
  auto const one = estimate_hit_probability(params, Mode::radial, small_specs, 1, 3, quick_engine());
  CHECK((one.joint[0].p_hat == 0.0 || one.joint[0].p_hat == 1.0));
}

TEST_CASE("Minkowski moments estimator") {
  EngineConfig e;
  e.horizon = 5.0;
  e.zero_driving = true;
  auto const table = minkowski_moments(exponents(2.0), Mode::radial, 2, {0.04, 0.02}, 3, 1,
                                       std::nullopt, e, 1);
  // Deterministic traces: every sample has the same content.
  CHECK(table.at(2, 1).moment == Approx(std::pow(table.at(1, 1).moment, 2)));
  CHECK(table.contents[0][0] == table.contents[0][2]);
}

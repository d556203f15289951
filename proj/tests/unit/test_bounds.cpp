#include <algorithm>
#include <cmath>
#include <random>

#include <doctest.h>

#include "../support/family_oracle.hpp"
#include "sle/bounds.hpp"

using namespace sle;
using doctest::Approx;

namespace {

// Clustered radial configurations so that pruning and interruptions occur.
std::vector<PointSpec> random_config(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<complex> z;
  auto const base = std::polar(0.1 + 0.75 * u(rng), 2.0 * kPi * u(rng));
  z.push_back(base);
  while (static_cast<int>(z.size()) < n) {
    auto const step = std::polar(std::exp(std::log(1e-3) * u(rng)) * 0.3, 2.0 * kPi * u(rng));
    auto const w = z[static_cast<std::size_t>(u(rng) * static_cast<double>(z.size()))] + step;
    if (std::abs(w) < 0.98 && std::abs(w) > 0.02) {
      z.push_back(w);
    }
  }
  auto const l = l_sequence(z, mode_anchors(Mode::radial));
  std::vector<double> r;
  for (auto const lk : l) {
    r.push_back(lk * std::pow(4.0, -7.0 * u(rng)));
  }
  return make_point_specs(Mode::radial, z, r);
}

}  // namespace

TEST_CASE("l sequence examples") {
  std::vector<complex> const a{{0.0, 0.5}, {-0.5, 0.0}};
  auto const l = l_sequence(a, mode_anchors(Mode::radial));
  CHECK(l[0] == Approx(0.5));
  CHECK(l[1] == Approx(0.5));
  std::vector<complex> const b{{2.0, 0.0}, {2.0, 1.0}};
  auto const lb = l_sequence(b, mode_anchors(Mode::whole_plane));
  CHECK(lb[0] == Approx(2.0));
  CHECK(lb[1] == Approx(1.0));
  std::vector<complex> const c{{0.9, 0.0}};
  CHECK(l_sequence(c, mode_anchors(Mode::radial))[0] == Approx(0.1));
  std::vector<complex> const dup{{0.3, 0.1}, {0.3, 0.1}};
  CHECK_THROWS_AS(l_sequence(dup, mode_anchors(Mode::radial)), domain_error);
}

TEST_CASE("radial and whole-plane kernels") {
  auto const k4 = exponents(4.0);
  std::vector<complex> const z{{0.5, 0.0}};
  std::vector<double> const r{0.1};
  auto const specs = make_point_specs(Mode::radial, z, r);
  CHECK(specs[0].y == Approx(0.5));
  CHECK(specs[0].l == Approx(0.5));
  CHECK(radial_bound_kernel(k4, specs) == Approx(0.447214).epsilon(1e-6));
  CHECK(radial_bound_kernel(k4, specs) == Approx(one_point_kernel(k4, 0.5, 0.1, 0.5)));

  std::vector<double> const big{0.7};
  CHECK(radial_bound_kernel(k4, make_point_specs(Mode::radial, z, big)) == 1.0);

  // Far-apart points: product of the one-point kernels.
  std::vector<complex> const two{{0.4, 0.2}, {-0.3, 0.1}};
  std::vector<double> const r2{0.02, 0.03};
  auto const s2 = make_point_specs(Mode::radial, two, r2);
  auto const k2 = exponents(2.0);
  CHECK(radial_bound_kernel(k2, s2) ==
        Approx(py_ratio(k2, s2[0].y, 0.02, s2[0].l) * py_ratio(k2, s2[1].y, 0.03, s2[1].l)));

  std::vector<complex> const w1{{1.0, 0.0}};
  std::vector<double> const wr1{0.1};
  CHECK(whole_plane_bound_kernel(k4, make_point_specs(Mode::whole_plane, w1, wr1)) ==
        Approx(0.316228).epsilon(1e-6));
  std::vector<complex> const w2{{2.0, 0.0}};
  std::vector<double> const wr2{0.5};
  CHECK(whole_plane_bound_kernel(k2, make_point_specs(Mode::whole_plane, w2, wr2)) ==
        Approx(0.353553).epsilon(1e-6));
  std::vector<double> const too_big{2.5};
  CHECK_THROWS_AS(make_point_specs(Mode::whole_plane, w2, too_big), domain_error);
  std::vector<complex> const outside{{1.2, 0.0}};
  CHECK_THROWS_AS(make_point_specs(Mode::radial, outside, wr1), domain_error);
}

TEST_CASE("whole-plane factor is the radial factor deep in the interior") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    auto const p = exponents(0.1 + 7.8 * u(rng));
    PointSpec s;
    s.z = std::polar(1.5 + u(rng), 2.0 * kPi * u(rng));
    s.y = 1.0;
    s.l = 0.01 + 0.99 * u(rng);
    s.r = s.l * u(rng) + 1e-6;
    std::vector<PointSpec> const one{s};
    CHECK(whole_plane_bound_kernel(p, one) == Approx(radial_bound_kernel(p, one)).epsilon(1e-12));
  }
}

TEST_CASE("one-point and ordered crossing kernels") {
  auto const k4 = exponents(4.0);
  CHECK(one_point_kernel(k4, 0.2, 0.1, 0.4) == Approx(0.353553).epsilon(1e-6));
  auto const k2 = exponents(2.0);
  // Interior regime y0 >= R, boundary regime y0 <= r.
  CHECK(one_point_kernel(k2, 0.5, 0.01, 0.1) == Approx(std::pow(0.1, 0.75)));
  CHECK(one_point_kernel(k2, 0.0, 0.01, 0.1) == Approx(std::pow(0.1, 3.0)));
  CHECK_THROWS_AS(one_point_kernel(k2, 0.5, 0.2, 0.1), domain_error);

  CHECK(ordered_crossing_kernel(k2, 0.3, 0.3, {}) == 1.0);
  CHECK(ordered_crossing_kernel(k2, 1.0, 16.0, {}) == Approx(0.125));
  std::vector<Ring> const rings{{0.3, 0.01, 0.1}};
  CHECK(ordered_crossing_kernel(k2, 1.0, 16.0, rings) ==
        Approx(0.125 * one_point_kernel(k2, 0.3, 0.01, 0.1)));
  CHECK_THROWS_AS(ordered_crossing_kernel(k2, 2.0, 1.0, {}), domain_error);
}

TEST_CASE("concentric family kernel") {
  auto const k4 = exponents(4.0);
  CircleFamily single;
  single.groups.push_back({{0.5, 0.0}, {0.2, 0.05}, 1.0, 0});
  CHECK(concentric_family_kernel(k4, single) == Approx(0.5));
  CircleFamily singletons;
  singletons.groups.push_back({{0.5, 0.0}, {0.1}, 0.5, 0});
  singletons.groups.push_back({{-0.5, 0.0}, {0.1}, 0.5, 1});
  CHECK(concentric_family_kernel(k4, singletons) == 1.0);
  CircleFamily pair = single;
  pair.groups.push_back({{-0.5, 0.0}, {0.2, 0.05, 0.0125}, 0.5, 1});
  CHECK(concentric_family_kernel(k4, pair) ==
        Approx(0.5 * py_ratio(k4, 0.5, 0.0125, 0.2)));
}

TEST_CASE("invalid families name the violated hypothesis") {
  auto expect = [](CircleFamily const& f, FamilyHypothesis h) {
    try {
      validate_family(f);
      FAIL("family accepted");
    } catch (FamilyError const& e) {
      CHECK(e.hypothesis() == h);
      CHECK(std::string(e.what()).find(hypothesis_name(h)) != std::string::npos);
    }
  };
  CircleFamily ratio;
  ratio.groups.push_back({{0.5, 0.0}, {0.2, 0.1}, 0.5, 0});
  expect(ratio, FamilyHypothesis::ratio);
  CircleFamily anchor;
  anchor.groups.push_back({{0.5, 0.0}, {0.6, 0.15}, 0.5, 0});
  expect(anchor, FamilyHypothesis::encloses_anchor);
  CircleFamily empty;
  empty.groups.push_back({{0.5, 0.0}, {}, 0.5, 0});
  expect(empty, FamilyHypothesis::empty_group);
  CircleFamily overlap;
  overlap.groups.push_back({{0.5, 0.0}, {0.2, 0.05}, 0.5, 0});
  overlap.groups.push_back({{0.6, 0.0}, {0.04}, 0.4, 1});
  try {
    validate_family(overlap);
    FAIL("family accepted");
  } catch (FamilyError const& e) {
    CHECK(e.hypothesis() == FamilyHypothesis::overlapping_annuli);
    CHECK(e.group_a() == 0);
    CHECK(e.group_b() == 1);
  }
  // Annuli nested without touching are disjoint.
  CircleFamily nested;
  nested.groups.push_back({{0.5, 0.0}, {0.2, 0.05}, 0.5, 0});
  nested.groups.push_back({{0.5, 0.0}, {0.0125}, 0.5, 1});
  CHECK_NOTHROW(validate_family(nested));
}

TEST_CASE("circle family of one point") {
  std::vector<complex> const z{{0.4, 0.2}};
  std::vector<double> const r{0.01};
  auto const specs = make_point_specs(Mode::radial, z, r);
  auto const family = build_circle_family(specs);
  REQUIRE(family.groups.size() == 1);
  auto const l = specs[0].l;
  auto const& radii = family.groups[0].radii;
  CHECK(radii.front() == Approx(l / 4.0));
  CHECK(radii.back() >= 0.01);
  CHECK(radii.back() < 0.04);
  CHECK(family.snaps[0].factor >= 1.0);
  CHECK(family.snaps[0].factor < 4.0);
  CHECK(family.snaps[0].snapped == Approx(radii.back()));
  CHECK(static_cast<int>(radii.size()) == family.snaps[0].h);
}

TEST_CASE("circle family agrees with the brute-force construction") {
  std::mt19937_64 rng(31);
  int nontrivial = 0;
  for (int i = 0; i < 400; ++i) {
    auto const n = 2 + i % 2;
    auto const specs = random_config(rng, n);
    auto const family = build_circle_family(specs);
    auto const expected = oracle::build(specs);
    CHECK(oracle::same_family(expected, family));
    CHECK(family.groups.size() <= family_group_bound(specs.size()));
    for (int j = 0; j < n; ++j) {
      for (int k = j + 1; k < n; ++k) {
        CHECK(expected.pruned_count[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] <= 1);
      }
    }
    CHECK_NOTHROW(validate_family(family));
    auto const kernel = concentric_family_kernel(exponents(2.0), family);
    CHECK(kernel > 0.0);
    CHECK(kernel <= 1.0);
    nontrivial += family.groups.size() > static_cast<std::size_t>(n);
  }
  // The generator must exercise pruning and interruptions.
  CHECK(nontrivial > 20);
  CHECK(family_group_bound(3) == 12);
  std::vector<complex> const same{{0.3, 0.1}, {0.3, 0.1}};
  std::vector<PointSpec> specs(2);
  specs[0] = {same[0], 0.01, 0.5, 0.2};
  specs[1] = {same[1], 0.01, 0.5, 0.2};
  CHECK_THROWS_AS(build_circle_family(specs), domain_error);
}

TEST_CASE("splitting a group costs at most 4^alpha per cut") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    auto const p = exponents(0.1 + 7.8 * u(rng));
    CircleGroup g;
    g.center = {0.5, 0.0};
    g.y = u(rng) < 0.2 ? 0.0 : std::pow(10.0, -4.0 * u(rng));
    auto const size = 2 + static_cast<int>(u(rng) * 8.0);
    auto radius = 0.3 * u(rng) + 1e-3;
    for (int s = 0; s < size; ++s) {
      g.radii.push_back(radius);
      radius /= 4.0;
    }
    std::vector<int> cuts;
    for (int c = 1; c < size; ++c) {
      if (u(rng) < 0.4) {
        cuts.push_back(c);
      }
    }
    auto const split = split_group_kernel(p, g, cuts);
    violations += split.runs_product > split.bound * (1.0 + 1e-12);
    violations += split.runs_product < split.group_kernel * (1.0 - 1e-12);
  }
  CHECK(violations == 0);
  CircleGroup g{{0.5, 0.0}, {0.1, 0.025}, 0.5, 0};
  std::vector<int> const bad{2};
  CHECK_THROWS_AS(split_group_kernel(exponents(2.0), g, bad), domain_error);
}

TEST_CASE("min over orders never exceeds the input-order kernel") {
  std::mt19937_64 rng(13);
  auto const p = exponents(3.0);
  for (int i = 0; i < 200; ++i) {
    auto const specs = random_config(rng, 3);
    std::vector<complex> z;
    std::vector<double> r;
    for (auto const& s : specs) {
      z.push_back(s.z);
      r.push_back(s.r);
    }
    auto const k = radial_bound_kernel(p, specs);
    auto const m = min_over_orders_kernel(Mode::radial, p, z, r);
    CHECK(m <= k * (1.0 + 1e-12));
    CHECK(m > 0.0);
  }
}

TEST_CASE("kernels are monotone in r and l") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    auto const p = exponents(0.1 + 7.8 * u(rng));
    auto const y = u(rng);
    auto const R = 0.05 + u(rng);
    auto const r1 = R * u(rng) + 1e-9;
    auto const r2 = std::min(R * 0.999999, r1 * (1.0 + u(rng)));
    CHECK(one_point_kernel(p, y, r1, R) <= one_point_kernel(p, y, r2, R) * (1.0 + 1e-12));
    CHECK(one_point_kernel(p, y, r1, R * 1.5) <= one_point_kernel(p, y, r1, R) * (1.0 + 1e-12));
    CHECK(one_point_kernel(p, y, r1, R) <= 1.0);
  }
}

TEST_CASE("kernel query document") {
  nlohmann::json const q = {{"kappa", 4.0},
                            {"mode", "radial"},
                            {"points", {{{"z", {0.5, 0.0}}, {"r", 0.1}}}}};
  auto const out = kernel_query(q);
  CHECK(out["kernel"].get<double>() == Approx(0.447214).epsilon(1e-6));
  CHECK(out["l"][0].get<double>() == Approx(0.5));
  CHECK(out["y"][0].get<double>() == Approx(0.5));
  CHECK(out["min_over_orders"].get<double>() == Approx(0.447214).epsilon(1e-6));

  nlohmann::json const w = {{"kappa", 2.0},
                            {"mode", "whole-plane"},
                            {"points", {{{"z", {2.0, 0.0}}, {"r", 0.5}}}}};
  auto const wo = kernel_query(w);
  CHECK(wo["kernel"].get<double>() == Approx(0.353553).epsilon(1e-6));
  CHECK(wo["y"].empty());

  CHECK_THROWS_AS(kernel_query({{"kappa", 9.0}, {"points", nlohmann::json::array()}}), domain_error);
  CHECK_THROWS_AS(kernel_query({{"kappa", 2.0}, {"mode", "chordal"}, {"points", nlohmann::json::array()}}),
                  domain_error);
  CHECK_THROWS_AS(kernel_query({{"kappa", 2.0}, {"points", {{{"z", {0.5}}, {"r", 0.1}}}}}), domain_error);
  CHECK_THROWS_AS(parse_mode("chordal"), domain_error);
}

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "sle/harness.hpp"

namespace sle {

Interval wilson_interval(std::size_t hits, std::size_t n, double z) {
  if (n == 0) {
    return {0.0, 1.0};
  }
  if (hits > n) {
    throw domain_error(fmt::format("hit count {} exceeds sample count {}", hits, n));
  }
  auto const nn = static_cast<double>(n);
  auto const p = static_cast<double>(hits) / nn;
  auto const z2 = z * z;
  auto const denom = 1.0 + z2 / nn;
  auto const center = (p + z2 / (2.0 * nn)) / denom;
  auto const half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // Clamp so the interval always contains p even after rounding.
  return {std::min(p, std::max(0.0, center - half)), std::max(p, std::min(1.0, center + half))};
}

Proportion proportion(std::size_t hits, std::size_t n) {
  Proportion out;
  out.hits = hits;
  out.n = n;
  out.p_hat = n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
  out.ci = wilson_interval(hits, n);
  out.std_err = 0.5 * (out.ci.hi - out.ci.lo) / kWilsonZ;
  return out;
}

Interval bootstrap_mean_interval(std::span<double const> values, std::uint64_t seed, int resamples,
                                 double level) {
  if (values.empty()) {
    throw domain_error("bootstrap needs at least one value");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum += values[pick(rng)];
    }
    m = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  auto const tail = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    auto const pos = q * static_cast<double>(means.size() - 1);
    auto const lo = static_cast<std::size_t>(std::floor(pos));
    auto const hi = std::min(lo + 1, means.size() - 1);
    auto const frac = pos - static_cast<double>(lo);
    return means[lo] + frac * (means[hi] - means[lo]);
  };
  return {quantile(tail), quantile(1.0 - tail)};
}

ExponentFit fit_exponent(std::span<SweepPoint const> sweep) {
  ExponentFit fit;
  bool weighted = true;
  for (auto const& s : sweep) {
    if (!(s.r > 0.0)) {
      throw domain_error(fmt::format("sweep radius must be positive, got {}", s.r));
    }
    if (!(s.p_hat > 0.0)) {
      fit.dropped.push_back(s.r);
      continue;
    }
    fit.radii.push_back(s.r);
    fit.log_p.push_back(std::log(s.p_hat));
    fit.log_se.push_back(s.std_err / s.p_hat);
    weighted = weighted && s.std_err > 0.0;
  }
  auto const m = fit.radii.size();
  if (m < 3) {
    throw domain_error(fmt::format(
        "exponent fit needs at least 3 radii with positive estimates, got {} ({} dropped)", m,
        fit.dropped.size()));
  }
  auto const [lo, hi] = std::minmax_element(fit.radii.begin(), fit.radii.end());
  if (*lo == *hi) {
    throw domain_error("exponent fit is degenerate: all radii are equal");
  }
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    auto const w = weighted ? 1.0 / (fit.log_se[i] * fit.log_se[i]) : 1.0;
    auto const x = std::log(fit.radii[i]);
    auto const y = fit.log_p[i];
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  auto const det = sw * sxx - sx * sx;
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    auto const w = weighted ? 1.0 / (fit.log_se[i] * fit.log_se[i]) : 1.0;
    auto const res = fit.log_p[i] - (fit.intercept + fit.slope * std::log(fit.radii[i]));
    chi2 += w * res * res;
  }
  auto const dof = static_cast<double>(m - 2);
  fit.chi2_red = chi2 / dof;
  if (weighted) {
    fit.slope_stderr = std::sqrt(sw / det * std::max(1.0, fit.chi2_red));
  } else {
    fit.slope_stderr = std::sqrt(sw / det * fit.chi2_red);
  }
  return fit;
}

DominationCheck check_domination(std::span<double const> p_hat, std::span<double const> kernel,
                                 double max_spread) {
  if (p_hat.size() != kernel.size() || p_hat.empty()) {
    throw domain_error("domination check needs one kernel value per estimate");
  }
  DominationCheck check;
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    if (!(kernel[i] > 0.0)) {
      throw domain_error("kernel values must be positive");
    }
    check.c_hat.push_back(p_hat[i] / kernel[i]);
  }
  auto const [lo, hi] = std::minmax_element(check.c_hat.begin(), check.c_hat.end());
  check.c_min = *lo;
  check.c_max = *hi;
  check.spread = check.c_min > 0.0 ? check.c_max / check.c_min
                                   : std::numeric_limits<double>::infinity();
  check.pass = check.spread <= max_spread;
  return check;
}

}  // namespace sle

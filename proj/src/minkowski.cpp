#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sle/harness.hpp"

namespace sle {

namespace {

std::uint64_t bucket_key(std::int64_t ix, std::int64_t iy) {
  // Offset keeps realistic indices positive; the key is only used for sorting
  // and lookup, so any injective packing works.
  constexpr std::int64_t offset = std::int64_t{1} << 31;
  return (static_cast<std::uint64_t>(ix + offset) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(iy + offset));
}

}  // namespace

SegmentIndex::SegmentIndex(std::span<complex const> points, double bucket)
    : points_(points), bucket_(bucket) {
  if (!(bucket > 0.0)) {
    throw domain_error("segment index bucket size must be positive");
  }
  if (points.size() < 2) {
    return;
  }
  std::vector<std::pair<std::uint64_t, std::uint32_t>> entries;
  for (std::uint32_t s = 0; s + 1 < points.size(); ++s) {
    auto const p = points[s];
    auto const q = points[s + 1];
    auto const x0 = bucket_of(std::min(p.real(), q.real()));
    auto const x1 = bucket_of(std::max(p.real(), q.real()));
    auto const y0 = bucket_of(std::min(p.imag(), q.imag()));
    auto const y1 = bucket_of(std::max(p.imag(), q.imag()));
    // Bounding-box registration: conservative, exactness comes from the
    // distance evaluation.
    for (auto ix = x0; ix <= x1; ++ix) {
      for (auto iy = y0; iy <= y1; ++iy) {
        entries.emplace_back(bucket_key(ix, iy), s);
      }
    }
  }
  std::sort(entries.begin(), entries.end());
  keys_.reserve(entries.size());
  ids_.reserve(entries.size());
  for (auto const& [key, id] : entries) {
    keys_.push_back(key);
    ids_.push_back(id);
  }
}

std::int64_t SegmentIndex::bucket_of(double coordinate) const {
  return static_cast<std::int64_t>(std::floor(coordinate / bucket_));
}

std::span<std::uint32_t const> SegmentIndex::segments_in(std::int64_t ix, std::int64_t iy) const {
  auto const key = bucket_key(ix, iy);
  auto const [lo, hi] = std::equal_range(keys_.begin(), keys_.end(), key);
  return {ids_.data() + (lo - keys_.begin()), static_cast<std::size_t>(hi - lo)};
}

std::vector<std::pair<std::int64_t, std::int64_t>> SegmentIndex::occupied() const {
  constexpr std::int64_t offset = std::int64_t{1} << 31;
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (i > 0 && keys_[i] == keys_[i - 1]) {
      continue;
    }
    auto const key = keys_[i];
    out.emplace_back(static_cast<std::int64_t>(key >> 32) - offset,
                     static_cast<std::int64_t>(key & 0xffffffffULL) - offset);
  }
  return out;
}

double SegmentIndex::distance(complex z, double cutoff) const {
  if (cutoff > bucket_ * (1.0 + 1e-12)) {
    throw domain_error("segment index cutoff exceeds the bucket size");
  }
  if (points_.size() == 1) {
    return std::min(cutoff, std::abs(z - points_[0]));
  }
  auto best = cutoff;
  auto const cx = bucket_of(z.real());
  auto const cy = bucket_of(z.imag());
  for (auto ix = cx - 1; ix <= cx + 1; ++ix) {
    for (auto iy = cy - 1; iy <= cy + 1; ++iy) {
      for (auto const s : segments_in(ix, iy)) {
        best = std::min(best, point_segment_distance(z, a(s), b(s)));
      }
    }
  }
  return best;
}

Region Region::disc(complex c, double r) {
  if (!(r > 0.0)) {
    throw domain_error("region disc radius must be positive");
  }
  Region out;
  out.kind = Kind::disc;
  out.center = c;
  out.radius = r;
  return out;
}

Region Region::box(double x0, double x1, double y0, double y1) {
  if (!(x0 < x1 && y0 < y1)) {
    throw domain_error("region box needs x0 < x1 and y0 < y1");
  }
  Region out;
  out.kind = Kind::box;
  out.x0 = x0;
  out.x1 = x1;
  out.y0 = y0;
  out.y1 = y1;
  return out;
}

Region Region::plane() {
  Region out;
  out.kind = Kind::plane;
  return out;
}

bool Region::contains(complex z) const {
  if (kind == Kind::plane) {
    return true;
  }
  if (kind == Kind::disc) {
    return std::norm(z - center) <= radius * radius;
  }
  return z.real() >= x0 && z.real() <= x1 && z.imag() >= y0 && z.imag() <= y1;
}

double Region::area() const {
  if (kind == Kind::plane) {
    return std::numeric_limits<double>::infinity();
  }
  return kind == Kind::disc ? kPi * radius * radius : (x1 - x0) * (y1 - y0);
}

nlohmann::json Region::to_json() const {
  if (kind == Kind::plane) {
    return "plane";
  }
  if (kind == Kind::disc) {
    return {{"disc", {{"center", {center.real(), center.imag()}}, {"radius", radius}}}};
  }
  return {{"box", {x0, x1, y0, y1}}};
}

Region Region::from_json(nlohmann::json const& j) {
  if (j.is_string() && j.get<std::string>() == "plane") {
    return plane();
  }
  if (!j.is_object()) {
    throw domain_error("region must be \"plane\", {\"disc\": {...}} or {\"box\": [...]}");
  }
  if (j.contains("disc")) {
    auto const& d = j["disc"];
    auto const c = d.value("center", std::vector<double>{0.0, 0.0});
    if (c.size() != 2) {
      throw domain_error("region disc center must be [re, im]");
    }
    return disc({c[0], c[1]}, d.at("radius").get<double>());
  }
  if (j.contains("box")) {
    auto const b = j["box"].get<std::vector<double>>();
    if (b.size() != 4) {
      throw domain_error("region box must be [x0, x1, y0, y1]");
    }
    return box(b[0], b[1], b[2], b[3]);
  }
  throw domain_error("region must be {\"disc\": {...}} or {\"box\": [x0, x1, y0, y1]}");
}

MinkowskiEstimate minkowski_content(Trace const& trace, double d, double r, double grid_h,
                                    std::optional<Region> const& region) {
  if (trace.points.empty()) {
    throw domain_error("Minkowski content of an empty trace");
  }
  if (!(r > 0.0)) {
    throw domain_error(fmt::format("Minkowski radius must be positive, got {}", r));
  }
  if (!(grid_h > 0.0 && grid_h <= r / 4.0 * (1.0 + 1e-12))) {
    throw domain_error(
        fmt::format("grid pitch {} is too coarse for r = {}: need 0 < grid_h <= r/4", grid_h, r));
  }
  MinkowskiEstimate est;
  est.r = r;
  est.d = d;
  est.grid_h = grid_h;
  est.region = region;
  auto const half_diag = grid_h * std::sqrt(0.5);
  auto const reach = r + half_diag;
  // Buckets of size >= reach: a point within reach of a segment sees it in
  // its own or a neighbouring bucket.
  std::vector<complex> lone;
  std::span<complex const> points = trace.points;
  if (points.size() == 1) {
    lone = {points[0], points[0]};
    points = lone;
  }
  SegmentIndex index(points, reach);
  auto const per_bucket = reach / grid_h;
  // Cells within reach of a segment lie in its buckets or their neighbours.
  std::vector<std::pair<std::int64_t, std::int64_t>> buckets;
  for (auto const& [ox, oy] : index.occupied()) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        buckets.emplace_back(ox + dx, oy + dy);
      }
    }
  }
  std::sort(buckets.begin(), buckets.end());
  buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());
  for (auto const& [bx, by] : buckets) {
    // Cells are attributed to the bucket containing their center, so each
    // cell is visited once even though neighbouring buckets overlap in reach.
    auto const x_lo = static_cast<std::int64_t>(std::ceil(static_cast<double>(bx) * per_bucket - 0.5));
    auto const x_hi = static_cast<std::int64_t>(std::ceil(static_cast<double>(bx + 1) * per_bucket - 0.5));
    auto const y_lo = static_cast<std::int64_t>(std::ceil(static_cast<double>(by) * per_bucket - 0.5));
    auto const y_hi = static_cast<std::int64_t>(std::ceil(static_cast<double>(by + 1) * per_bucket - 0.5));
    for (auto cx = x_lo - 1; cx <= x_hi; ++cx) {
      auto const x = (static_cast<double>(cx) + 0.5) * grid_h;
      if (index.bucket_of(x) != bx) {
        continue;
      }
      for (auto cy = y_lo - 1; cy <= y_hi; ++cy) {
        auto const y = (static_cast<double>(cy) + 0.5) * grid_h;
        if (index.bucket_of(y) != by) {
          continue;
        }
        complex const c(x, y);
        if (region && region->kind != Region::Kind::plane && !region->contains(c)) {
          continue;
        }
        auto const dist = index.distance(c, reach);
        if (dist < reach) {
          ++est.outer_cells;
          if (dist < r) {
            ++est.cells;
          }
          if (dist <= r - half_diag) {
            ++est.inner_cells;
          }
        }
      }
    }
  }
  auto const cell = grid_h * grid_h;
  auto const scale = std::pow(r, d - 2.0);
  est.area = static_cast<double>(est.cells) * cell;
  est.area_lower = static_cast<double>(est.inner_cells) * cell;
  est.area_upper = static_cast<double>(est.outer_cells) * cell;
  est.content = scale * est.area;
  est.content_lower = scale * est.area_lower;
  est.content_upper = scale * est.area_upper;
  return est;
}

MinkowskiEstimate minkowski_content(Trace const& trace, double r, double grid_h,
                                    std::optional<Region> const& region) {
  auto const d = trace.kappa > 0.0 ? exponents(trace.kappa).d : 1.0;
  return minkowski_content(trace, d, r, grid_h, region);
}

}  // namespace sle

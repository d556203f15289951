#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "sle/trace.hpp"

namespace sle {

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) {
    bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  out.write(bytes, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw std::runtime_error("truncated trace record");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= std::uint64_t{bytes[i]} << (8 * i);
  }
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_trace_binary(Trace const& trace, std::ostream& out) {
  put_f64(out, trace.kappa);
  put_f64(out, trace.dt);
  put_f64(out, trace.horizon);
  put_u64(out, trace.seed);
  put_u64(out, trace.points.size());
  for (auto const& p : trace.points) {
    put_f64(out, p.real());
    put_f64(out, p.imag());
  }
  for (std::size_t j = 0; j < trace.points.size(); ++j) {
    put_f64(out, j < trace.times.size() ? trace.times[j] : 0.0);
  }
}

Trace read_trace_binary(std::istream& in) {
  Trace trace;
  trace.kappa = get_f64(in);
  trace.dt = get_f64(in);
  trace.horizon = get_f64(in);
  trace.seed = get_u64(in);
  auto const count = get_u64(in);
  if (count > (std::uint64_t{1} << 32)) {
    throw std::runtime_error(fmt::format("implausible trace point count {}", count));
  }
  trace.points.resize(count);
  for (auto& p : trace.points) {
    auto const re = get_f64(in);
    p = complex(re, get_f64(in));
  }
  trace.times.resize(count);
  for (auto& t : trace.times) {
    t = get_f64(in);
  }
  return trace;
}

void write_trace_csv(Trace const& trace, std::ostream& out) {
  out << "t,re,im\n";
  for (std::size_t j = 0; j < trace.points.size(); ++j) {
    out << fmt::format("{:.17g},{:.17g},{:.17g}\n", j < trace.times.size() ? trace.times[j] : 0.0,
                       trace.points[j].real(), trace.points[j].imag());
  }
}

Trace read_trace_csv(std::istream& in) {
  Trace trace;
  std::string line;
  if (!std::getline(in, line) || line != "t,re,im") {
    throw std::runtime_error("trace CSV must start with the header t,re,im");
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::istringstream row(line);
    double t = 0, re = 0, im = 0;
    char c1 = 0, c2 = 0;
    if (!(row >> t >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',') {
      throw std::runtime_error(fmt::format("malformed trace CSV row '{}'", line));
    }
    trace.times.push_back(t);
    trace.points.emplace_back(re, im);
  }
  trace.horizon = trace.times.empty() ? 0.0 : trace.times.back();
  return trace;
}

}  // namespace sle

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/log.hpp"
#include "flowlens/packet.hpp"

namespace flowlens {

// Sample skewness g1 = m3 / m2^(3/2) with 1/n central moments.
inline double skewness(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 3) throw DomainError("skewness needs at least 3 values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) throw DomainError("degenerate series (zero variance)");
  double sum = 0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(n);
  double m2 = 0, m3 = 0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  if (m2 <= 0) throw DomainError("degenerate series (zero variance)");
  return m3 / (m2 * std::sqrt(m2));
}

// Throughput ("traffic variability") time series of a trace.
struct ThroughputSeries {
  double interval = 0.1;              // seconds
  std::vector<std::uint64_t> bytes;   // IP bytes per interval
  std::vector<double> values;         // bit/s per interval
  double mean_bps = 0;
  std::optional<double> skewness;     // nullopt when undefined

  std::uint64_t total_bytes() const {
    std::uint64_t s = 0;
    for (auto b : bytes) s += b;
    return s;
  }
};

inline ThroughputSeries throughput_series(std::span<const PacketRecord> packets, double interval) {
  const std::int64_t step_us = std::llround(interval * 1e6);
  if (!(interval > 0) || step_us < 1) throw DomainError("throughput interval must be positive (>= 1 us)");
  ThroughputSeries s;
  s.interval = interval;
  if (packets.empty()) {
    log::warn("empty trace: throughput skewness undefined");
    return s;
  }
  std::int64_t last = 0;
  for (const auto& p : packets) {
    if (p.ts_us < 0) throw DomainError("negative packet timestamp");
    last = std::max(last, p.ts_us);
  }
  s.bytes.assign(static_cast<std::size_t>(last / step_us) + 1, 0);
  for (const auto& p : packets) s.bytes[static_cast<std::size_t>(p.ts_us / step_us)] += p.ip_len;
  const double scale = 8.0 / (static_cast<double>(step_us) * 1e-6);
  s.values.reserve(s.bytes.size());
  double sum = 0;
  for (auto b : s.bytes) {
    s.values.push_back(static_cast<double>(b) * scale);
    sum += s.values.back();
  }
  s.mean_bps = sum / static_cast<double>(s.values.size());
  try {
    s.skewness = skewness(s.values);
  } catch (const DomainError& e) {
    log::warn(std::string("throughput skewness undefined: ") + e.what());
  }
  return s;
}

struct TraceGate {
  double min_skewness = 0.4;
};

// Keeps traces whose skewness is at least the threshold.
inline bool gate_trace(const ThroughputSeries& series, const TraceGate& gate) {
  if (!series.skewness) {
    log::warn("trace gated out: skewness undefined");
    return false;
  }
  return *series.skewness >= gate.min_skewness;
}

}  // namespace flowlens

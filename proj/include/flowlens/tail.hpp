#pragma once

// Log-log complementary cumulative distribution (LLCD) of per-block flow
// sizes, and a power-law fit of its tail.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "flowlens/error.hpp"
#include "flowlens/format.hpp"

namespace flowlens {

struct LlcdPoint {
  double x = 0;
  double p = 0;  // P(X > x)
};

struct LlcdCurve {
  std::vector<LlcdPoint> points;
  std::uint64_t n_samples = 0;
};

// p(x) = |{s : s > x}| / n at every distinct sample value with p > 0.
inline LlcdCurve llcd(std::span<const std::uint64_t> samples) {
  if (samples.empty()) throw DomainError("llcd of an empty sample");
  std::vector<std::uint64_t> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  LlcdCurve c;
  c.n_samples = sorted.size();
  const double n = static_cast<double>(sorted.size());
  std::size_t i = 0;
  while (i < sorted.size()) {
    const auto x = sorted[i];
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == x) ++j;
    const std::size_t above = sorted.size() - j;
    if (above == 0) break;
    c.points.push_back({static_cast<double>(x), static_cast<double>(above) / n});
    i = j;
  }
  return c;
}

struct TailFit {
  double alpha = 0;
  double x_min = 0;
  double r_squared = 0;
  std::uint64_t n_tail = 0;  // samples >= the first fitted point
  std::size_t n_points = 0;
};

inline constexpr std::size_t kMinTailPoints = 10;

// Least-squares line through (log10 x, log10 p) over points with x >= x_min.
// Each point is weighted by n*p/(1-p), the inverse variance of log p under
// binomial sampling, so the sparse far tail does not dominate the fit.
inline TailFit fit_tail(const LlcdCurve& curve, double x_min) {
  std::vector<LlcdPoint> tail;
  std::size_t first = curve.points.size();
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& pt = curve.points[i];
    if (pt.x >= x_min && pt.p > 0 && pt.x > 0) {
      if (first == curve.points.size()) first = i;
      tail.push_back(pt);
    }
  }
  if (tail.size() < kMinTailPoints) throw DomainError("insufficient tail");

  const double n = static_cast<double>(std::max<std::uint64_t>(curve.n_samples, 1));
  double sw = 0, sx = 0, sy = 0;
  std::vector<double> lx, ly, w;
  for (const auto& pt : tail) {
    const double wi = n * pt.p / std::max(1.0 - pt.p, 1.0 / n);
    lx.push_back(std::log10(pt.x));
    ly.push_back(std::log10(pt.p));
    w.push_back(wi);
    sw += wi;
    sx += wi * lx.back();
    sy += wi * ly.back();
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double dx = lx[i] - mx, dy = ly[i] - my;
    sxx += w[i] * dx * dx;
    sxy += w[i] * dx * dy;
    syy += w[i] * dy * dy;
  }
  if (sxx <= 0) throw DomainError("insufficient tail");
  const double slope = sxy / sxx;

  TailFit fit;
  fit.alpha = -slope;
  fit.x_min = x_min;
  fit.n_points = tail.size();
  fit.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  const double above_prev = first == 0 ? 1.0 : curve.points[first - 1].p;
  fit.n_tail = static_cast<std::uint64_t>(std::llround(above_prev * static_cast<double>(curve.n_samples)));
  if (fit.n_tail < kMinTailPoints) throw DomainError("insufficient tail");
  return fit;
}

inline void write_llcd_csv(std::ostream& os, const LlcdCurve& c) {
  os << "x,p\n";
  for (const auto& pt : c.points) os << format_double(pt.x) << ',' << format_double(pt.p) << '\n';
}

}  // namespace flowlens

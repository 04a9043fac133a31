#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace equiproc {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

/// P(X <= a, Y <= b) for a standard bivariate normal with correlation r.
inline double bivariate_normal_cdf(double a, double b, double r) {
  if (a == -INFINITY || b == -INFINITY) return 0.0;
  if (a == INFINITY) return normal_cdf(b);
  if (b == INFINITY) return normal_cdf(a);
  if (r == 0.0) return normal_cdf(a) * normal_cdf(b);
  if (r >= 1.0) return normal_cdf(std::min(a, b));
  if (r <= -1.0) return std::max(0.0, normal_cdf(a) - normal_cdf(-b));
  const double s = std::sqrt(1.0 - r * r);
  auto integrand = [&](double x) { return normal_pdf(x) * normal_cdf((b - r * x) / s); };
  // The integrand is negligible below -40.
  const double lo = -40.0;
  if (a <= lo) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, lo, a, 20, 1e-14);
}

/// Mean with standard error of the mean.
struct MeanEstimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Running sums for a sample mean; merged in a fixed order for determinism.
struct MomentAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++count;
  }
  void merge(const MomentAccumulator& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    count += o.count;
  }
  MeanEstimate estimate() const {
    if (count == 0) return {};
    const double n = static_cast<double>(count);
    const double m = sum / n;
    double var = count > 1 ? (sum_sq - n * m * m) / (n - 1.0) : 0.0;
    if (var < 0.0) var = 0.0;
    return {m, std::sqrt(var / n)};
  }
};

inline MeanEstimate mean_and_se(std::span<const double> v) {
  MomentAccumulator acc;
  for (double x : v) acc.add(x);
  return acc.estimate();
}

inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Empirical quantile of type 7 (linear interpolation); used for summaries.
inline double empirical_percentile(std::vector<double> v, double prob) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - w) + v[hi] * w;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares of y on x. Needs at least two distinct x values.
inline std::optional<LineFit> fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) return std::nullopt;
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ssr = syy - fit.slope * sxy;
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  return fit;
}

/// Evenly spaced points on [lo, hi]; a single point when count == 1 or lo == hi.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count <= 1 || lo == hi) return {lo};
  std::vector<double> out(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

}  // namespace equiproc

#pragma once

// Sample quantilogram with its decomposition, location M-estimators and the
// dominance sup-statistic.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "equiproc/errors.hpp"
#include "equiproc/families.hpp"
#include "equiproc/innovations.hpp"
#include "equiproc/numerics.hpp"

namespace equiproc {

// ---------------------------------------------------------------------------
// Quantilogram

struct QuantilogramResult {
  double alpha = 0.0;
  std::size_t h = 0;
  double theta_alpha = 0.0;
  double theta_hat = 0.0;
  /// (n-h)^{-1} sum_{i=1+h}^n f_{theta_hat}(x_{i-h}, x_i)
  double statistic = 0.0;
  double scaled = 0.0;
  /// sqrt(n-h) (E f_{theta_hat} - E f_{theta_alpha}), means from the oracle.
  double drift = 0.0;
  /// nu_{n-h} f_{theta_alpha}
  double nu_true = 0.0;
  /// nu_{n-h}(f_{theta_hat} - f_{theta_alpha})
  double remainder = 0.0;
  /// sqrt(n-h) E f_{theta_alpha}; zero at the true quantile under the null.
  double centre = 0.0;

  double decomposition_gap() const { return scaled - (drift + nu_true + remainder + centre); }
};

/// Type-1 empirical quantile: the order statistic at 1-based index ceil(p n).
inline double type1_quantile(std::span<const double> x, double p) {
  if (x.empty()) throw ValidationError("quantile of empty data");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile level must lie in (0, 1)");
  std::vector<double> v(x.begin(), x.end());
  const auto n = v.size();
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  k = std::clamp<std::size_t>(k, 1, n);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

/// `mean(theta)` is E f_theta(x_{i-h}, x_i) under the stationary law.
inline QuantilogramResult sample_quantilogram(std::span<const double> x, double alpha,
                                              std::size_t h, double theta_alpha,
                                              const std::function<double(double)>& mean) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
  if (h < 1) throw ValidationError("lag h must be >= 1");
  if (x.size() <= h) throw ValidationError("series length must exceed the lag h");
  const QuantilogramFamily f{alpha};
  auto value = [&](double theta, double a, double b) {
    return (f.alpha - (a < theta ? 1.0 : 0.0)) * (f.alpha - (b < theta ? 1.0 : 0.0));
  };
  QuantilogramResult r;
  r.alpha = alpha;
  r.h = h;
  r.theta_alpha = theta_alpha;
  r.theta_hat = type1_quantile(x, alpha);
  const std::size_t m = x.size() - h;
  const double root = std::sqrt(static_cast<double>(m));
  double s_hat = 0.0, s_true = 0.0;
  for (std::size_t i = h; i < x.size(); ++i) {
    s_hat += value(r.theta_hat, x[i - h], x[i]);
    s_true += value(theta_alpha, x[i - h], x[i]);
  }
  const double mu_hat = mean(r.theta_hat), mu_true = mean(theta_alpha);
  r.statistic = s_hat / static_cast<double>(m);
  r.scaled = s_hat / root;
  r.centre = root * mu_true;
  r.drift = root * mu_hat - r.centre;
  r.nu_true = s_true / root - r.centre;
  r.remainder = (s_hat - s_true) / root - root * (mu_hat - mu_true);
  return r;
}

// ---------------------------------------------------------------------------
// Location M-estimators

enum class MEstimator { median, huber };

inline std::string to_string(MEstimator v) { return v == MEstimator::median ? "median" : "huber"; }

struct MEstimate {
  MEstimator variant = MEstimator::median;
  double delta = 0.0;
  double theta_hat = 0.0;
  /// n^{-1} sum_i f_{theta_hat}(x_i)
  double residual_score = 0.0;
  /// |sum_i f_{theta_hat}(x_i)|
  double score_sum = 0.0;
};

/// iid Laplace(location, scale) draws by inverting the CDF of U(0,1) draws.
inline std::vector<double> draw_laplace(StreamKey key, std::size_t n, double location = 0.0,
                                        double scale = 1.0) {
  InnovationStream s(InnovationSpec::uniform(), key);
  std::vector<double> out = s.draw(n);
  for (double& u : out) {
    const double c = u - 0.5;
    if (std::abs(c) >= 0.5) {
      u = location;
      continue;
    }
    u = location - scale * (c < 0.0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(c));
  }
  return out;
}

inline constexpr double kHuberTolerance = 1e-10;

inline double location_score(MEstimator v, double delta, double theta, std::span<const double> x) {
  double s = 0.0;
  for (double xi : x)
    s += v == MEstimator::median ? static_cast<double>((xi > theta) - (xi < theta))
                                 : std::clamp(xi - theta, -delta, delta);
  return s;
}

/// Median (midpoint for even n) or the Huber root of sum clip(x - theta) = 0
/// by bisection on [min x, max x].
inline MEstimate m_estimate(MEstimator variant, std::span<const double> x, double delta = 1.345) {
  if (x.empty()) throw ValidationError("M-estimation needs at least one observation");
  if (variant == MEstimator::huber && !(delta > 0.0)) throw ValidationError("huber delta must be > 0");
  MEstimate r;
  r.variant = variant;
  r.delta = variant == MEstimator::huber ? delta : 0.0;
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (variant == MEstimator::median) {
    r.theta_hat = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  } else {
    // The score is non-increasing in theta: >= 0 at min, <= 0 at max.
    double lo = v.front(), hi = v.back();
    while (hi - lo > kHuberTolerance) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (location_score(variant, delta, mid, v) > 0.0 ? lo : hi) = mid;
    }
    r.theta_hat = 0.5 * (lo + hi);
  }
  const double s = location_score(variant, delta, r.theta_hat, v);
  r.score_sum = std::abs(s);
  r.residual_score = s / static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Dominance

struct DominanceResult {
  std::vector<double> grid;
  /// n^{-1/2} sum_i (1{x1_i <= theta} - 1{x2_i <= theta})
  std::vector<double> values;
  double statistic = 0.0;
  double argmax = 0.0;
  std::size_t argmax_index = 0;
};

inline DominanceResult dominance_stat(std::span<const double> x1, std::span<const double> x2,
                                      std::span<const double> grid) {
  if (x1.size() != x2.size()) throw ValidationError("paired series must have equal length");
  if (x1.empty()) throw ValidationError("paired series must be nonempty");
  if (grid.empty()) throw ValidationError("theta grid must be nonempty");
  const double root = std::sqrt(static_cast<double>(x1.size()));
  DominanceResult r;
  r.grid.assign(grid.begin(), grid.end());
  for (double t : grid) {
    double s = 0.0;
    for (std::size_t i = 0; i < x1.size(); ++i)
      s += (x1[i] <= t ? 1.0 : 0.0) - (x2[i] <= t ? 1.0 : 0.0);
    r.values.push_back(s / root);
  }
  r.argmax_index = 0;
  for (std::size_t k = 1; k < r.values.size(); ++k)
    if (r.values[k] > r.values[r.argmax_index]) r.argmax_index = k;
  r.statistic = r.values[r.argmax_index];
  r.argmax = r.grid[r.argmax_index];
  return r;
}

}  // namespace equiproc

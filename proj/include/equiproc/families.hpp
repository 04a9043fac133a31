#pragma once

// Parametric function families {f_theta : theta in Theta} over embedded
// observations, their rho-metric rho(f) = ||f(xi_0)||_2, and bracketing
// covers with explicit bounding functions b_k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "equiproc/embedding.hpp"
#include "equiproc/errors.hpp"
#include "equiproc/innovations.hpp"
#include "equiproc/matrix.hpp"
#include "equiproc/models.hpp"
#include "equiproc/numerics.hpp"

namespace equiproc {

/// f_theta(x) = 1{x < theta}
struct IndicatorFamily {
  bool operator==(const IndicatorFamily&) const = default;
};
/// f_theta(x) = sign(x - theta)
struct SignFamily {
  bool operator==(const SignFamily&) const = default;
};
/// f_theta(x) = clip(x - theta, -delta, delta)
struct HuberFamily {
  double delta = 1.345;
  bool operator==(const HuberFamily&) const = default;
};
/// f_theta(x1, x2) = (alpha - 1{x1 < theta})(alpha - 1{x2 < theta})
struct QuantilogramFamily {
  double alpha = 0.1;
  bool operator==(const QuantilogramFamily&) const = default;
};
/// f_theta(x1, x2) = 1{x1 <= theta} - 1{x2 <= theta}
struct DominancePairFamily {
  bool operator==(const DominancePairFamily&) const = default;
};
/// f_{theta,eta}(y1, z1, y2, z2) = 1{y1 <= z1 eta1 + theta} - 1{y2 <= z2 eta2 + theta}
struct DominanceResidualFamily {
  bool operator==(const DominanceResidualFamily&) const = default;
};
/// f_theta(t, c, z) = z 1{t <= c} 1{t <= z'theta}; vector valued, |z| <= covariate_bound.
struct CensoredQrFamily {
  double covariate_bound = std::numbers::sqrt2;
  std::size_t covariate_dim = 2;
  bool operator==(const CensoredQrFamily&) const = default;
};

using FamilyVariant = std::variant<IndicatorFamily, SignFamily, HuberFamily, QuantilogramFamily,
                                   DominancePairFamily, DominanceResidualFamily, CensoredQrFamily>;

/// Axis-aligned compact parameter box; lo == hi in every coordinate is a singleton.
struct ParameterBox {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t dim() const { return lo.size(); }
  bool contains(std::span<const double> t, double slack = 1e-12) const {
    if (t.size() != lo.size()) return false;
    for (std::size_t j = 0; j < t.size(); ++j)
      if (t[j] < lo[j] - slack || t[j] > hi[j] + slack) return false;
    return true;
  }
  bool operator==(const ParameterBox&) const = default;
};

using Theta = std::vector<double>;

class FunctionFamily {
 public:
  FunctionFamily() = default;
  FunctionFamily(FamilyVariant kind, ParameterBox theta) : kind_(kind), theta_(std::move(theta)) {
    validate();
  }

  static FunctionFamily scalar(FamilyVariant kind, double lo, double hi) {
    return FunctionFamily(kind, ParameterBox{{lo}, {hi}});
  }

  const FamilyVariant& kind() const noexcept { return kind_; }
  const ParameterBox& theta_space() const noexcept { return theta_; }

  template <class T>
  const T* as() const {
    return std::get_if<T>(&kind_);
  }

  std::string name() const {
    static const char* names[] = {"indicator",      "sign",
                                  "huber",          "quantilogram",
                                  "dominance-pair", "dominance-residual",
                                  "censored-qr"};
    return names[kind_.index()];
  }

  std::size_t input_dim() const {
    if (const auto* c = as<CensoredQrFamily>()) return 2 + c->covariate_dim;
    static const std::size_t dims[] = {1, 1, 1, 2, 2, 4, 0};
    return dims[kind_.index()];
  }

  std::size_t param_dim() const {
    if (const auto* c = as<CensoredQrFamily>()) return c->covariate_dim;
    return as<DominanceResidualFamily>() ? 3 : 1;
  }

  std::size_t output_dim() const {
    if (const auto* c = as<CensoredQrFamily>()) return c->covariate_dim;
    return 1;
  }

  /// Uniform bound B with |f_theta(x)| <= B.
  double bound() const {
    if (const auto* h = as<HuberFamily>()) return h->delta;
    if (const auto* c = as<CensoredQrFamily>()) return c->covariate_bound;
    return 1.0;
  }

  /// Coordinate `coord` of f_theta(x). Inputs are not dimension-checked here;
  /// use `evaluate` for checked access.
  double value(std::span<const double> theta, std::span<const double> x,
               std::size_t coord = 0) const {
    return std::visit(
        [&](const auto& f) -> double {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, IndicatorFamily>) {
            return x[0] < theta[0] ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<T, SignFamily>) {
            return static_cast<double>((x[0] > theta[0]) - (x[0] < theta[0]));
          } else if constexpr (std::is_same_v<T, HuberFamily>) {
            return std::clamp(x[0] - theta[0], -f.delta, f.delta);
          } else if constexpr (std::is_same_v<T, QuantilogramFamily>) {
            const double a = f.alpha - (x[0] < theta[0] ? 1.0 : 0.0);
            const double b = f.alpha - (x[1] < theta[0] ? 1.0 : 0.0);
            return a * b;
          } else if constexpr (std::is_same_v<T, DominancePairFamily>) {
            return (x[0] <= theta[0] ? 1.0 : 0.0) - (x[1] <= theta[0] ? 1.0 : 0.0);
          } else if constexpr (std::is_same_v<T, DominanceResidualFamily>) {
            return (x[0] <= x[1] * theta[1] + theta[0] ? 1.0 : 0.0) -
                   (x[2] <= x[3] * theta[2] + theta[0] ? 1.0 : 0.0);
          } else {
            const double t = x[0];
            if (!(t <= x[1])) return 0.0;
            double index = 0.0;
            for (std::size_t j = 0; j < f.covariate_dim; ++j) index += x[2 + j] * theta[j];
            return t <= index ? x[2 + coord] : 0.0;
          }
        },
        kind_);
  }

  /// Checked evaluation; returns all output coordinates.
  std::vector<double> evaluate(std::span<const double> theta, std::span<const double> x) const {
    if (x.size() != input_dim())
      throw ValidationError(name() + " expects input dimension " + std::to_string(input_dim()) +
                            ", got " + std::to_string(x.size()));
    if (!theta_.contains(theta)) throw ValidationError("theta outside the parameter space");
    std::vector<double> out(output_dim());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = value(theta, x, j);
    return out;
  }

  bool operator==(const FunctionFamily&) const = default;

 private:
  void validate() const {
    if (theta_.lo.size() != param_dim() || theta_.hi.size() != param_dim())
      throw ValidationError(name() + " needs a " + std::to_string(param_dim()) +
                            "-dimensional parameter box");
    for (std::size_t j = 0; j < theta_.dim(); ++j)
      if (!(theta_.lo[j] <= theta_.hi[j]) || !std::isfinite(theta_.lo[j]) ||
          !std::isfinite(theta_.hi[j]))
        throw ValidationError("parameter box must be finite with lo <= hi");
    if (const auto* h = as<HuberFamily>(); h && !(h->delta > 0.0))
      throw ValidationError("huber delta must be > 0");
    if (const auto* q = as<QuantilogramFamily>(); q && !(q->alpha > 0.0 && q->alpha < 1.0))
      throw ValidationError("quantilogram alpha must lie in (0, 1)");
    if (const auto* c = as<CensoredQrFamily>()) {
      if (!(c->covariate_bound > 0.0)) throw ValidationError("covariate bound must be > 0");
      if (c->covariate_dim == 0) throw ValidationError("covariate dimension must be >= 1");
    }
  }

  FamilyVariant kind_ = IndicatorFamily{};
  ParameterBox theta_{{0.0}, {1.0}};
};

/// Tensor grid over the parameter box with `points` per non-degenerate
/// coordinate, in lexicographic order (last coordinate fastest).
inline std::vector<Theta> theta_grid(const ParameterBox& box, std::size_t points) {
  if (points == 0) throw ValidationError("grid needs at least one point");
  std::vector<std::vector<double>> axes;
  for (std::size_t j = 0; j < box.dim(); ++j) axes.push_back(linspace(box.lo[j], box.hi[j], points));
  std::vector<Theta> out{{}};
  for (const auto& axis : axes) {
    std::vector<Theta> next;
    next.reserve(out.size() * axis.size());
    for (const auto& prefix : out)
      for (double v : axis) {
        Theta t = prefix;
        t.push_back(v);
        next.push_back(std::move(t));
      }
    out = std::move(next);
  }
  return out;
}

inline std::vector<Theta> theta_grid(const FunctionFamily& f, std::size_t points) {
  return theta_grid(f.theta_space(), points);
}

// ---------------------------------------------------------------------------
// Laws of xi_0

/// Every input coordinate iid U(0,1) or N(mean, sd^2).
struct IidLaw {
  enum class Kind { uniform01, gaussian } kind = Kind::gaussian;
  double mean = 0.0;
  double sd = 1.0;

  static IidLaw uniform() { return {Kind::uniform01}; }
  static IidLaw gaussian(double mean = 0.0, double sd = 1.0) { return {Kind::gaussian, mean, sd}; }
};

/// Stationary law of an embedded model, sampled from one long path.
struct StationaryLaw {
  ModelSpec model;
  EmbeddingSpec embedding = IdentityEmbedding{};
  StreamKey key{0, 0};
  std::size_t burn_in = kDefaultBurnIn;
};

using Law = std::variant<IidLaw, StationaryLaw>;

/// Univariate marginal with a closed-form CDF plus the correlation between
/// the two coordinates of a 2-dimensional input (Gaussian case only).
struct ClosedFormMarginal {
  bool uniform = false;
  double mean = 0.0;
  double sd = 1.0;
  double corr = 0.0;

  double cdf(double t) const {
    if (uniform) return std::clamp(t, 0.0, 1.0);
    return normal_cdf((t - mean) / sd);
  }
  /// P(X1 <= a, X2 <= b).
  double joint_cdf(double a, double b) const {
    if (uniform || corr == 0.0) return cdf(a) * cdf(b);
    return bivariate_normal_cdf((a - mean) / sd, (b - mean) / sd, corr);
  }
  double density_sup() const {
    return uniform ? 1.0 : 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
  }
};

/// Stationary N(0, sigma^2 / (1 - phi^2)) law of a Gaussian AR1, with the
/// lag-h autocorrelation phi^h for lag-pair inputs.
inline std::optional<ClosedFormMarginal> closed_form_marginal(const Law& law) {
  if (const auto* iid = std::get_if<IidLaw>(&law)) {
    if (iid->kind == IidLaw::Kind::uniform01) return ClosedFormMarginal{true};
    return ClosedFormMarginal{false, iid->mean, iid->sd, 0.0};
  }
  const auto& st = std::get<StationaryLaw>(law);
  if (!st.model.is_gaussian_ar1()) return std::nullopt;
  const auto& ar = *st.model.as<Ar1>();
  const double sd = ar.sigma / std::sqrt(1.0 - ar.phi * ar.phi);
  ClosedFormMarginal m{false, 0.0, sd, 0.0};
  if (std::holds_alternative<IdentityEmbedding>(st.embedding)) return m;
  if (const auto* lp = std::get_if<LagPair>(&st.embedding)) {
    m.corr = std::pow(ar.phi, static_cast<double>(lp->h));
    return m;
  }
  if (std::holds_alternative<BivariateCopy>(st.embedding)) return m;
  return std::nullopt;
}

namespace detail {

// P(X1 in [a1,b1), X2 in [a2,b2)) for a continuous law.
inline double rectangle_probability(const ClosedFormMarginal& m, double a1, double b1, double a2,
                                    double b2) {
  return m.joint_cdf(b1, b2) - m.joint_cdf(a1, b2) - m.joint_cdf(b1, a2) + m.joint_cdf(a1, a2);
}

// E[g(X1, X2)] for g piecewise constant on the cells cut by `cuts` in each
// coordinate. `value(x1, x2)` is evaluated at a representative cell point.
template <class G>
double cell_expectation(const ClosedFormMarginal& m, std::vector<double> cuts, G&& value) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<double> edges{-INFINITY};
  edges.insert(edges.end(), cuts.begin(), cuts.end());
  edges.push_back(INFINITY);
  auto rep = [](double lo, double hi) {
    if (std::isinf(lo)) return hi - 1.0;
    if (std::isinf(hi)) return lo + 1.0;
    return 0.5 * (lo + hi);
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    for (std::size_t j = 0; j + 1 < edges.size(); ++j) {
      const double g = value(rep(edges[i], edges[i + 1]), rep(edges[j], edges[j + 1]));
      if (g == 0.0) continue;
      total += g * rectangle_probability(m, edges[i], edges[i + 1], edges[j], edges[j + 1]);
    }
  return total;
}

}  // namespace detail

/// Closed-form E (f_theta - f_theta')^2 where implemented: indicator and sign
/// families on a scalar input, quantilogram and dominance-pair families on a
/// 2-dimensional input, all under uniform or Gaussian marginals.
inline std::optional<double> closed_form_rho_squared(const FunctionFamily& f, const Theta& a,
                                                     const Theta& b, const Law& law) {
  const auto m = closed_form_marginal(law);
  if (!m) return std::nullopt;
  if (const auto* st = std::get_if<StationaryLaw>(&law);
      st && embedding_dimension(st->embedding) != f.input_dim())
    return std::nullopt;
  const double p = std::abs(m->cdf(a[0]) - m->cdf(b[0]));
  if (f.as<IndicatorFamily>()) return p;
  if (f.as<SignFamily>()) return 4.0 * p;
  if (f.as<DominancePairFamily>()) {
    // Two identical marginals; the cross term needs the joint law.
    const double lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
    const double both = detail::rectangle_probability(*m, lo, hi, lo, hi);
    return 2.0 * p - 2.0 * both;
  }
  if (f.as<QuantilogramFamily>()) {
    return detail::cell_expectation(*m, {a[0], b[0]}, [&](double x1, double x2) {
      const double x[2] = {x1, x2};
      const double d = f.value(a, x) - f.value(b, x);
      return d * d;
    });
  }
  return std::nullopt;
}

/// Closed-form E f_theta(xi_0) where implemented (Gaussian AR1 or iid laws).
inline std::optional<double> closed_form_mean(const FunctionFamily& f, const Theta& t,
                                              const Law& law) {
  const auto m = closed_form_marginal(law);
  if (!m) return std::nullopt;
  if (const auto* st = std::get_if<StationaryLaw>(&law);
      st && embedding_dimension(st->embedding) != f.input_dim())
    return std::nullopt;
  if (f.input_dim() == 1) {
    const double F = m->cdf(t[0]);
    if (f.as<IndicatorFamily>()) return F;
    if (f.as<SignFamily>()) return 1.0 - 2.0 * F;
    if (const auto* h = f.as<HuberFamily>(); h && !m->uniform) {
      // E clip(X - theta, -d, d) with X - theta ~ N(mu, s^2).
      const double mu = m->mean - t[0], s = m->sd, d = h->delta;
      const double lo = (-d - mu) / s, hi = (d - mu) / s;
      const double mid = mu * (normal_cdf(hi) - normal_cdf(lo)) + s * (normal_pdf(lo) - normal_pdf(hi));
      return d * (1.0 - normal_cdf(hi)) - d * normal_cdf(lo) + mid;
    }
    return std::nullopt;
  }
  if (f.as<DominancePairFamily>()) return 0.0;
  if (const auto* q = f.as<QuantilogramFamily>()) {
    const double F = m->cdf(t[0]);
    return q->alpha * q->alpha - 2.0 * q->alpha * F + m->joint_cdf(t[0], t[0]);
  }
  return std::nullopt;
}

enum class RhoMethod { automatic, closed_form, monte_carlo };

struct RhoMetricEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool closed_form = false;
  std::size_t reps = 0;
};

/// Rows drawn from a law: iid rows, or one stationary path.
inline Matrix sample_law(const Law& law, std::size_t input_dim, std::size_t count, StreamKey key) {
  if (const auto* iid = std::get_if<IidLaw>(&law)) {
    Matrix out(count, input_dim);
    if (iid->kind == IidLaw::Kind::uniform01) {
      InnovationStream s(InnovationSpec::uniform(), key);
      s.fill(out.data());
    } else {
      InnovationStream s(InnovationSpec::normal(), key);
      s.fill(out.data());
      for (double& v : out.data()) v = iid->mean + iid->sd * v;
    }
    return out;
  }
  const auto& st = std::get<StationaryLaw>(law);
  Matrix rows = simulate_embedded(st.model, st.embedding, key, count, st.burn_in);
  if (rows.cols() != input_dim)
    throw ValidationError("law embedding dimension does not match family input dimension");
  return rows;
}

namespace detail {

// Mean of per-row values with a batch-means standard error (valid for
// dependent rows from one stationary path).
inline MeanEstimate batch_mean(std::span<const double> v, std::size_t batches = 50) {
  const std::size_t n = v.size();
  double total = 0.0;
  for (double x : v) total += x;
  MeanEstimate est{total / static_cast<double>(n), 0.0};
  if (n < 2 * batches) return mean_and_se(v);
  const std::size_t len = n / batches;
  MomentAccumulator acc;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += v[i];
    acc.add(s / static_cast<double>(len));
  }
  est.se = acc.estimate().se;
  return est;
}

inline RhoMetricEstimate rho_from_squares(std::span<const double> sq, bool dependent) {
  const MeanEstimate m = dependent ? batch_mean(sq) : mean_and_se(sq);
  RhoMetricEstimate r;
  r.value = std::sqrt(std::max(0.0, m.mean));
  r.std_error = r.value > 0.0 ? m.se / (2.0 * r.value) : m.se > 0.0 ? std::sqrt(m.se) : 0.0;
  r.reps = sq.size();
  return r;
}

}  // namespace detail

/// rho(f_a - f_b) = ||f_a(xi_0) - f_b(xi_0)||_2. Vector-valued families report
/// the largest coordinate.
inline RhoMetricEstimate rho(const FunctionFamily& f, const Theta& a, const Theta& b,
                             const Law& law, std::size_t reps = 100000,
                             RhoMethod method = RhoMethod::automatic, StreamKey key = {0x52484fu, 0}) {
  if (reps < 100) throw ValidationError("rho needs reps >= 100");
  if (!f.theta_space().contains(a) || !f.theta_space().contains(b))
    throw ValidationError("theta outside the parameter space");
  if (a == b) return {0.0, 0.0, true, 0};
  if (method != RhoMethod::monte_carlo) {
    if (auto r2 = closed_form_rho_squared(f, a, b, law))
      return {std::sqrt(std::max(0.0, *r2)), 0.0, true, 0};
    if (method == RhoMethod::closed_form)
      throw ValidationError("no closed form rho for " + f.name() + " under this law");
  }
  const Matrix rows = sample_law(law, f.input_dim(), reps, key);
  const bool dependent = std::holds_alternative<StationaryLaw>(law);
  RhoMetricEstimate best;
  std::vector<double> sq(rows.rows());
  for (std::size_t c = 0; c < f.output_dim(); ++c) {
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      const double d = f.value(a, rows.row(i), c) - f.value(b, rows.row(i), c);
      sq[i] = d * d;
    }
    auto r = detail::rho_from_squares(sq, dependent);
    if (c == 0 || r.value > best.value) best = r;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Bracketing covers

/// Marginal regularity used to size brackets.
struct CoverInfo {
  /// Lipschitz constant of the relevant (conditional) distribution function.
  double lipschitz = 1.0;
  /// E|Z| of the covariates (dominance-residual family).
  double covariate_abs_mean = 1.0;
  std::size_t cap = 10'000'000;
  bool operator==(const CoverInfo&) const = default;
};

/// Grid cover of the parameter box. One-dimensional families use the grid
/// t_0 < ... < t_N with bracket k = [t_{k-1}, t_k] centred at t_k; the
/// multi-parameter families use cell midpoints as centres.
struct BracketingCover {
  FunctionFamily family;
  double delta = 0.0;
  std::vector<std::size_t> cells;  // per parameter coordinate
  std::vector<double> spacing;     // actual cell width per coordinate
  double radius = 0.0;             // ball radius, dominance-residual only
  std::size_t count = 1;
  /// Scales every bounding function; 1 for a cover as built.
  double bound_multiplier = 1.0;

  std::vector<std::size_t> cell_index(std::size_t k) const {
    std::vector<std::size_t> idx(cells.size());
    for (std::size_t j = cells.size(); j-- > 0;) {
      idx[j] = k % cells[j];
      k /= cells[j];
    }
    return idx;
  }

  bool midpoint_centres() const { return family.param_dim() > 1; }

  double lower_edge(std::size_t j, std::size_t i) const {
    return family.theta_space().lo[j] + spacing[j] * static_cast<double>(i);
  }
  double upper_edge(std::size_t j, std::size_t i) const {
    return i + 1 == cells[j] ? family.theta_space().hi[j] : lower_edge(j, i + 1);
  }

  Theta center(std::size_t k) const {
    const auto idx = cell_index(k);
    Theta t(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j)
      t[j] = midpoint_centres() ? 0.5 * (lower_edge(j, idx[j]) + upper_edge(j, idx[j]))
                                : upper_edge(j, idx[j]);
    return t;
  }

  /// Lowest-index bracket containing theta.
  std::size_t assign(std::span<const double> theta) const {
    std::size_t k = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      std::size_t i = 0;
      if (spacing[j] > 0.0) {
        const double raw = (theta[j] - family.theta_space().lo[j]) / spacing[j];
        double c = std::ceil(raw) - 1.0;
        i = static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(cells[j] - 1)));
        while (i > 0 && theta[j] <= lower_edge(j, i)) --i;
        while (i + 1 < cells[j] && theta[j] > upper_edge(j, i)) ++i;
      }
      k = k * cells[j] + i;
    }
    return k;
  }

  /// Coordinate `coord` of the bounding function b_k at x.
  double bound(std::size_t k, std::span<const double> x, std::size_t coord = 0) const {
    return bound_multiplier * raw_bound(k, x, coord);
  }

 private:
  double raw_bound(std::size_t k, std::span<const double> x, std::size_t coord) const {
    const auto idx = cell_index(k);
    if (family.param_dim() == 1) {
      const double lo = lower_edge(0, idx[0]), hi = upper_edge(0, idx[0]);
      if (lo == hi) return 0.0;
      return std::visit(
          [&](const auto& f) -> double {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, IndicatorFamily>) {
              return (lo <= x[0] && x[0] < hi) ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, SignFamily>) {
              return (lo <= x[0] && x[0] <= hi) ? 2.0 : 0.0;
            } else if constexpr (std::is_same_v<T, HuberFamily>) {
              return std::min(hi - lo, 2.0 * f.delta);
            } else if constexpr (std::is_same_v<T, QuantilogramFamily>) {
              auto strict = [&](double v) { return (v < hi ? 1.0 : 0.0) - (v < lo ? 1.0 : 0.0); };
              return strict(x[0]) + strict(x[1]);
            } else if constexpr (std::is_same_v<T, DominancePairFamily>) {
              auto weak = [&](double v) { return (lo < v && v <= hi) ? 1.0 : 0.0; };
              return weak(x[0]) + weak(x[1]);
            } else {
              // CensoredQR with a single covariate; handled below.
              return censored_bound(idx, x, coord);
            }
          },
          family.kind());
    }
    if (family.as<DominanceResidualFamily>()) {
      const Theta c = center(k);
      auto part = [&](double y, double z, double e) {
        const double mid = z * e + c[0];
        const double half = (std::abs(z) + 1.0) * radius;
        return (y < mid + half ? 1.0 : 0.0) - (y <= mid - half ? 1.0 : 0.0);
      };
      return part(x[0], x[1], c[1]) + part(x[2], x[3], c[2]);
    }
    return censored_bound(idx, x, coord);
  }

  double censored_bound(const std::vector<std::size_t>& idx, std::span<const double> x,
                        std::size_t coord) const {
    const auto& f = std::get<CensoredQrFamily>(family.kind());
    if (!(x[0] <= x[1])) return 0.0;
    double mid = 0.0, half = 0.0;
    for (std::size_t j = 0; j < f.covariate_dim; ++j) {
      const double lo = lower_edge(j, idx[j]), hi = upper_edge(j, idx[j]);
      const double z = x[2 + j];
      if (midpoint_centres()) {
        mid += z * 0.5 * (lo + hi);
        half += std::abs(z) * 0.5 * (hi - lo);
      } else {
        // Single covariate: centre at the upper edge, bracket width hi - lo.
        mid += z * hi;
        half += std::abs(z) * (hi - lo);
      }
    }
    if (half == 0.0) return 0.0;
    const double t = x[0];
    return (mid - half < t && t <= mid + half) ? std::abs(x[2 + coord]) : 0.0;
  }
};

namespace detail {

// Target cell width per parameter coordinate so that rho(b_k) <= delta.
inline double target_spacing(const FunctionFamily& f, double delta, const CoverInfo& info,
                             std::size_t active_dims) {
  const double L = info.lipschitz;
  if (f.as<HuberFamily>()) return delta;
  if (f.as<IndicatorFamily>()) return delta * delta / L;
  if (f.as<SignFamily>() || f.as<QuantilogramFamily>() || f.as<DominancePairFamily>())
    return delta * delta / (4.0 * L);
  if (f.as<DominanceResidualFamily>()) {
    const double r = delta * delta / (8.0 * L * (1.0 + info.covariate_abs_mean));
    return 2.0 * r / std::sqrt(static_cast<double>(std::max<std::size_t>(1, active_dims)));
  }
  const auto& c = std::get<CensoredQrFamily>(f.kind());
  const double dz = c.covariate_bound;
  const double d = static_cast<double>(c.covariate_dim);
  const double s = delta * delta / (L * std::sqrt(d) * dz * dz * dz);
  // The single-covariate grid centres at the upper edge, doubling the reach.
  return c.covariate_dim == 1 ? 0.5 * s : s;
}

inline std::size_t active_dims(const ParameterBox& b) {
  std::size_t n = 0;
  for (std::size_t j = 0; j < b.dim(); ++j) n += b.hi[j] > b.lo[j];
  return n;
}

inline std::vector<std::size_t> cells_for(const FunctionFamily& f, double delta,
                                          const CoverInfo& info) {
  if (!(delta > 0.0)) throw ValidationError("bracketing delta must be > 0");
  if (!(info.lipschitz > 0.0)) throw ValidationError("cover Lipschitz constant must be > 0");
  const auto& box = f.theta_space();
  std::vector<std::size_t> cells(box.dim(), 1);
  if (const auto* h = f.as<HuberFamily>(); h && 2.0 * h->delta <= delta) return cells;
  const double s = target_spacing(f, delta, info, active_dims(box));
  double total = 1.0;
  for (std::size_t j = 0; j < box.dim(); ++j) {
    const double range = box.hi[j] - box.lo[j];
    if (range <= 0.0) continue;
    const double m = std::ceil(range / s - 1e-9);
    total *= std::max(1.0, m);
    if (total > static_cast<double>(info.cap))
      throw ValidationError("bracketing number exceeds the cap of " + std::to_string(info.cap) +
                            " at delta=" + std::to_string(delta));
    cells[j] = static_cast<std::size_t>(std::max(1.0, m));
  }
  return cells;
}

}  // namespace detail

/// N(delta, F) for the family's cover recipe without building evaluators.
inline std::size_t bracketing_number(const FunctionFamily& f, double delta,
                                     const CoverInfo& info = {}) {
  std::size_t n = 1;
  for (auto c : detail::cells_for(f, delta, info)) n *= c;
  return n;
}

inline BracketingCover build_cover(const FunctionFamily& f, double delta,
                                   const CoverInfo& info = {}) {
  BracketingCover cover;
  cover.family = f;
  cover.delta = delta;
  cover.cells = detail::cells_for(f, delta, info);
  cover.count = 1;
  double diag2 = 0.0;
  for (std::size_t j = 0; j < cover.cells.size(); ++j) {
    cover.count *= cover.cells[j];
    const double range = f.theta_space().hi[j] - f.theta_space().lo[j];
    cover.spacing.push_back(range / static_cast<double>(cover.cells[j]));
    diag2 += cover.spacing.back() * cover.spacing.back();
  }
  cover.radius = 0.5 * std::sqrt(diag2);
  return cover;
}

/// Growth exponent a with N(x, F) = O(x^{-a}) as x -> 0 for the cover recipe.
inline double bracketing_exponent(const FunctionFamily& f) {
  const double active = static_cast<double>(detail::active_dims(f.theta_space()));
  if (active == 0.0) return 0.0;
  if (f.as<HuberFamily>()) return active;
  return 2.0 * active;
}

/// Continuous envelope prod_j max(1, range_j / s_j(x)) of the bracketing count.
inline double bracketing_envelope(const FunctionFamily& f, double x, const CoverInfo& info = {}) {
  const auto& box = f.theta_space();
  if (const auto* h = f.as<HuberFamily>(); h && 2.0 * h->delta <= x) return 1.0;
  const double s = detail::target_spacing(f, x, info, detail::active_dims(box));
  double n = 1.0;
  for (std::size_t j = 0; j < box.dim(); ++j) {
    const double range = box.hi[j] - box.lo[j];
    if (range > 0.0) n *= std::max(1.0, range / s);
  }
  return n;
}

struct BracketingIntegral {
  double value = INFINITY;
  double error_estimate = 0.0;
  /// Power of x in the integrand near 0.
  double exponent = 0.0;
  bool divergent = true;
};

/// Integrand exponent -gamma/(2+gamma) - a/Q for N(x) ~ x^{-a}.
inline double bracketing_integrand_exponent(double count_exponent, double gamma, int Q) {
  return -gamma / (2.0 + gamma) - count_exponent / static_cast<double>(Q);
}

inline void validate_gamma_q(double gamma, int Q) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be > 0");
  if (Q < 2 || Q % 2 != 0) throw ValidationError("Q must be an even integer >= 2");
}

/// int_0^1 x^{-gamma/(2+gamma)} N(x)^{1/Q} dx for a count N(x) = O(x^{-a}).
///
/// The substitution x = u^k with k >= max(3, 1/(e+1)), e the integrand
/// exponent, removes the endpoint singularity before adaptive Gauss-Kronrod.
/// Below x = 1e-40 the count is extended by its power law and integrated in
/// closed form.
template <class CountFn>
BracketingIntegral bracketing_integral(CountFn&& count, double count_exponent, double gamma,
                                       int Q) {
  validate_gamma_q(gamma, Q);
  BracketingIntegral out;
  out.exponent = bracketing_integrand_exponent(count_exponent, gamma, Q);
  if (out.exponent <= -1.0) return out;
  out.divergent = false;
  const double k = std::max(3.0, std::ceil(1.0 / (out.exponent + 1.0) - 1e-12));
  const double w = -gamma / (2.0 + gamma);
  constexpr double x_min = 1e-40;
  const double u_min = std::pow(x_min, 1.0 / k);
  auto integrand = [&](double u) {
    const double x = std::pow(u, k);
    return k * std::pow(u, k - 1.0) * std::pow(x, w) * std::pow(count(x), 1.0 / Q);
  };
  double err = 0.0;
  const double body = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, u_min, 1.0, 30, 1e-13, &err);
  const double tail = std::pow(count(x_min), 1.0 / Q) * std::pow(x_min, count_exponent / Q) *
                      std::pow(x_min, out.exponent + 1.0) / (out.exponent + 1.0);
  out.value = body + tail;
  out.error_estimate = err;
  return out;
}

/// Power-law count N(x) = coef * x^{-a}.
inline BracketingIntegral bracketing_integral_power(double coef, double a, double gamma, int Q) {
  return bracketing_integral([&](double x) { return coef * std::pow(x, -a); }, a, gamma, Q);
}

/// Bracketing integral of a family's cover envelope.
inline BracketingIntegral bracketing_integral(const FunctionFamily& f, double gamma, int Q,
                                              const CoverInfo& info = {}) {
  return bracketing_integral([&](double x) { return bracketing_envelope(f, x, info); },
                             bracketing_exponent(f), gamma, Q);
}

/// Throws DivergentBracketingIntegral unless the hypothesis of the
/// equicontinuity moment bound holds for (f, gamma, Q).
inline void require_finite_bracketing_integral(const FunctionFamily& f, double gamma, int Q) {
  validate_gamma_q(gamma, Q);
  const double a = bracketing_exponent(f);
  const double e = bracketing_integrand_exponent(a, gamma, Q);
  if (e <= -1.0) {
    std::ostringstream os;
    os << "bracketing integral diverges for " << f.name() << " with gamma=" << gamma
       << ", Q=" << Q << ": N(x) grows like x^-" << a << ", so the integrand behaves like x^" << e
       << " near 0 (needs exponent > -1); increase Q or decrease gamma";
    throw DivergentBracketingIntegral(os.str());
  }
}

struct CoverVerification {
  bool passed = false;
  bool domination_ok = false;
  bool size_ok = false;
  /// max over (theta, x, coord) of |f_theta - f_{t_k(theta)}| - b_k; <= 0 passes.
  double worst_domination_margin = -INFINITY;
  /// max over checked k of rho_hat(b_k) - delta - 3 SE; <= 0 passes.
  double worst_size_margin = -INFINITY;
  std::size_t brackets_checked = 0;
};

/// Monte Carlo rho_hat(b_k) and its standard error on the sample rows.
inline RhoMetricEstimate bound_rho(const BracketingCover& cover, std::size_t k, const Matrix& rows) {
  RhoMetricEstimate best;
  std::vector<double> sq(rows.rows());
  for (std::size_t c = 0; c < cover.family.output_dim(); ++c) {
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      const double b = cover.bound(k, rows.row(i), c);
      sq[i] = b * b;
    }
    auto r = detail::rho_from_squares(sq, false);
    if (c == 0 || r.value > best.value) best = r;
  }
  best.reps = rows.rows();
  return best;
}

/// Checks pointwise domination on sample x theta-grid and the size
/// condition rho_hat(b_k) <= delta + 3 SE.
inline CoverVerification verify_cover(const BracketingCover& cover, const Matrix& sample,
                                      std::span<const Theta> thetas,
                                      std::size_t max_size_checks = 4096) {
  if (sample.empty()) throw ValidationError("cover verification needs a nonempty sample");
  const auto& f = cover.family;
  CoverVerification v;
  std::vector<std::size_t> touched;
  for (const auto& t : thetas) {
    const std::size_t k = cover.assign(t);
    touched.push_back(k);
    const Theta c = cover.center(k);
    for (std::size_t i = 0; i < sample.rows(); ++i) {
      const auto x = sample.row(i);
      for (std::size_t o = 0; o < f.output_dim(); ++o) {
        const double gap = std::abs(f.value(t, x, o) - f.value(c, x, o)) - cover.bound(k, x, o);
        v.worst_domination_margin = std::max(v.worst_domination_margin, gap);
      }
    }
  }
  std::vector<std::size_t> to_check;
  if (cover.count <= max_size_checks) {
    for (std::size_t k = 0; k < cover.count; ++k) to_check.push_back(k);
  } else {
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    to_check = touched;
  }
  for (auto k : to_check) {
    const auto r = bound_rho(cover, k, sample);
    v.worst_size_margin = std::max(v.worst_size_margin, r.value - cover.delta - 3.0 * r.std_error);
  }
  v.brackets_checked = to_check.size();
  // Slack for rounding in grid edges and constant bounds.
  constexpr double slack = 1e-12;
  v.domination_ok = v.worst_domination_margin <= slack;
  v.size_ok = v.worst_size_margin <= slack;
  v.passed = v.domination_ok && v.size_ok;
  return v;
}

}  // namespace equiproc

#pragma once

// Coupled-copy decay diagnostics. Every report here is a Monte Carlo
// estimate over replications r = 0..reps-1 of a coupled pair driven by
// StreamKey{seed, r}, evaluated at the requested lags, with a log-linear fit
// of the estimates against the lag.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equiproc/embedding.hpp"
#include "equiproc/errors.hpp"
#include "equiproc/families.hpp"
#include "equiproc/models.hpp"
#include "equiproc/numerics.hpp"
#include "equiproc/parallel.hpp"

namespace equiproc {

inline constexpr std::size_t kMinDecayReps = 1000;
inline constexpr double kNoiseFloor = 5.0;

struct DecayReport {
  std::string quantity;
  std::vector<std::size_t> lags;
  std::vector<double> estimates;
  std::vector<double> ses;
  std::vector<bool> used_in_fit;
  double p = 2.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  /// Present when at least two lags clear the noise floor.
  std::optional<LineFit> fit;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  /// "ok" or "decay too fast to resolve".
  std::string status;
};

struct DecayOptions {
  std::vector<std::size_t> lags;
  double p = 2.0;
  std::size_t reps = 20000;
  std::uint64_t seed = 1;
  std::size_t burn_in = kDefaultBurnIn;
};

namespace detail {

inline void validate_decay(const DecayOptions& o) {
  std::vector<std::string> errs;
  if (o.lags.empty()) errs.push_back("lags must be nonempty");
  for (std::size_t j = 0; j < o.lags.size(); ++j) {
    if (o.lags[j] == 0) errs.push_back("lags must be >= 1");
    if (j > 0 && o.lags[j] <= o.lags[j - 1]) errs.push_back("lags must be strictly increasing");
  }
  if (!(o.p > 0.0)) errs.push_back("norm order p must be > 0");
  if (o.reps < kMinDecayReps) errs.push_back("reps must be >= 1000 for decay reports");
  if (o.reps > stream_tag::max_replication) errs.push_back("reps exceeds the replication id range");
  if (errs.size() == 1) throw ValidationError(errs[0]);
  if (!errs.empty()) throw AggregateValidationError(errs);
}

// Fills the fit fields from estimates and standard errors.
inline void fit_decay(DecayReport& r) {
  std::vector<double> x, y;
  r.used_in_fit.assign(r.lags.size(), false);
  for (std::size_t j = 0; j < r.lags.size(); ++j) {
    if (r.estimates[j] > 0.0 && r.estimates[j] > kNoiseFloor * r.ses[j]) {
      r.used_in_fit[j] = true;
      x.push_back(static_cast<double>(r.lags[j]));
      y.push_back(std::log(r.estimates[j]));
    }
  }
  if (x.size() >= 2) r.fit = fit_line(x, y);
  if (r.fit) {
    r.alpha_hat = std::exp(r.fit->slope);
    r.status = "ok";
  } else {
    r.status = "decay too fast to resolve";
  }
}

// Sums of a per-replication statistic for every (lag, slot).
struct SlotSums {
  std::vector<double> sum;
  std::vector<double> sum_sq;
};

// Runs `per_row(series, row, out)` for every replication and lag. `out` has
// `width` slots and receives |difference|^p per slot; the callback returns
// false when every slot is zero.
template <class PerRow>
SlotSums accumulate_coupled(const ModelSpec& m, const EmbeddingSpec& e, const DecayOptions& o,
                            std::size_t width, PerRow&& per_row) {
  const std::size_t L = o.lags.size();
  const std::size_t n = o.lags.back();
  SlotSums total{std::vector<double>(L * width, 0.0), std::vector<double>(L * width, 0.0)};
  ordered_chunk_reduce(
      o.reps,
      [&](ChunkRange range) {
        SlotSums part{std::vector<double>(L * width, 0.0), std::vector<double>(L * width, 0.0)};
        std::vector<double> out(width);
        for (std::size_t r = range.begin; r < range.end; ++r) {
          const auto s = simulate_coupled_embedded(m, e, StreamKey{o.seed, r}, n, o.burn_in);
          for (std::size_t j = 0; j < L; ++j) {
            if (!per_row(s, o.lags[j] - 1, std::span<double>(out))) continue;
            double* sum = part.sum.data() + j * width;
            double* sq = part.sum_sq.data() + j * width;
            for (std::size_t w = 0; w < width; ++w) {
              sum[w] += out[w];
              sq[w] += out[w] * out[w];
            }
          }
        }
        return part;
      },
      [&](SlotSums&& part) {
        for (std::size_t i = 0; i < total.sum.size(); ++i) {
          total.sum[i] += part.sum[i];
          total.sum_sq[i] += part.sum_sq[i];
        }
      });
  return total;
}

// Per lag: max over slots of (mean |diff|^p)^{1/p}, with a delta-method SE
// taken at the maximizing slot (lowest index on ties).
inline DecayReport reduce_slots(const SlotSums& s, std::size_t width, const DecayOptions& o,
                                std::string quantity) {
  DecayReport r;
  r.quantity = std::move(quantity);
  r.lags = o.lags;
  r.p = o.p;
  r.reps = o.reps;
  r.seed = o.seed;
  const double n = static_cast<double>(o.reps);
  for (std::size_t j = 0; j < o.lags.size(); ++j) {
    double best = 0.0, best_se = 0.0;
    for (std::size_t w = 0; w < width; ++w) {
      const double mean = s.sum[j * width + w] / n;
      if (!(mean > 0.0)) continue;
      double var = (s.sum_sq[j * width + w] - n * mean * mean) / (n - 1.0);
      var = std::max(var, 0.0);
      const double se_mean = std::sqrt(var / n);
      const double est = std::pow(mean, 1.0 / o.p);
      if (est > best) {
        best = est;
        best_se = se_mean * est / (o.p * mean);
      }
    }
    r.estimates.push_back(best);
    r.ses.push_back(best_se);
  }
  fit_decay(r);
  return r;
}

inline bool rows_equal(std::span<const double> a, std::span<const double> b) {
  return std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace detail

/// ||xi_n - xi'_n||_q per lag (Euclidean norm over the embedded row).
inline DecayReport coupling_norm(const ModelSpec& m, const EmbeddingSpec& e, DecayOptions o) {
  detail::validate_decay(o);
  validate_model(m);
  const auto sums = detail::accumulate_coupled(
      m, e, o, 1, [&](const CoupledSeries& s, std::size_t t, std::span<double> out) {
        const auto a = s.original.row(t), b = s.perturbed.row(t);
        double d2 = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
        if (d2 == 0.0) return false;
        out[0] = std::pow(d2, 0.5 * o.p);
        return true;
      });
  return detail::reduce_slots(sums, 1, o, "coupling-norm");
}

inline DecayReport coupling_norm(const ModelSpec& m, DecayOptions o) {
  return coupling_norm(m, IdentityEmbedding{}, std::move(o));
}

/// sup over the theta grid of ||f_theta(xi_n) - f_theta(xi'_n)||_p, coordinatewise
/// for vector-valued families.
inline DecayReport family_coupling_norm(const ModelSpec& m, const EmbeddingSpec& e,
                                        const FunctionFamily& f, std::span<const Theta> grid,
                                        DecayOptions o) {
  detail::validate_decay(o);
  validate_model(m);
  if (grid.empty()) throw ValidationError("theta grid must be nonempty");
  if (embedding_dimension(e) != f.input_dim())
    throw ValidationError("embedding dimension does not match the family input dimension");
  for (const auto& t : grid)
    if (!f.theta_space().contains(t)) throw ValidationError("theta grid leaves the parameter space");
  const std::size_t D = f.output_dim();
  const std::size_t width = grid.size() * D;
  const auto sums = detail::accumulate_coupled(
      m, e, o, width, [&](const CoupledSeries& s, std::size_t t, std::span<double> out) {
        const auto a = s.original.row(t), b = s.perturbed.row(t);
        if (detail::rows_equal(a, b)) return false;
        bool any = false;
        for (std::size_t g = 0; g < grid.size(); ++g)
          for (std::size_t c = 0; c < D; ++c) {
            const double d = std::abs(f.value(grid[g], a, c) - f.value(grid[g], b, c));
            out[g * D + c] = d == 0.0 ? 0.0 : std::pow(d, o.p);
            any = any || d != 0.0;
          }
        return any;
      });
  return detail::reduce_slots(sums, width, o, "family-coupling-norm");
}

/// max over brackets k of ||b_k(xi_n) - b_k(xi'_n)||_p.
inline DecayReport bracket_coupling_norm(const ModelSpec& m, const EmbeddingSpec& e,
                                         const BracketingCover& cover, DecayOptions o) {
  detail::validate_decay(o);
  validate_model(m);
  if (embedding_dimension(e) != cover.family.input_dim())
    throw ValidationError("embedding dimension does not match the family input dimension");
  const std::size_t D = cover.family.output_dim();
  const std::size_t width = cover.count * D;
  const auto sums = detail::accumulate_coupled(
      m, e, o, width, [&](const CoupledSeries& s, std::size_t t, std::span<double> out) {
        const auto a = s.original.row(t), b = s.perturbed.row(t);
        if (detail::rows_equal(a, b)) return false;
        bool any = false;
        for (std::size_t k = 0; k < cover.count; ++k)
          for (std::size_t c = 0; c < D; ++c) {
            const double d = std::abs(cover.bound(k, a, c) - cover.bound(k, b, c));
            out[k * D + c] = d == 0.0 ? 0.0 : std::pow(d, o.p);
            any = any || d != 0.0;
          }
        return any;
      });
  return detail::reduce_slots(sums, width, o, "bracket-coupling-norm");
}

// ---------------------------------------------------------------------------
// Indicator coupling with xi = (U, V, W)

enum class CouplingCase { single, function_of_w, conditional_independence };

inline std::string to_string(CouplingCase c) {
  static const char* names[] = {"single", "function", "independent"};
  return names[static_cast<int>(c)];
}

/// One entry of V: an embedded-row column or a constant.
struct VComponent {
  std::optional<std::size_t> column;
  double constant = 1.0;

  double at(std::span<const double> row) const { return column ? row[*column] : constant; }
  bool operator==(const VComponent&) const = default;
};

/// The map g with V = g(W) for the function case.
enum class GKind { identity, prepend_one };

inline std::string to_string(GKind g) { return g == GKind::identity ? "identity" : "prepend-one"; }

inline std::vector<double> apply_g(GKind g, std::span<const double> w) {
  std::vector<double> out;
  if (g == GKind::prepend_one) out.push_back(1.0);
  out.insert(out.end(), w.begin(), w.end());
  return out;
}

struct IndicatorCouplingSpec {
  std::size_t u = 0;
  std::vector<VComponent> v{VComponent{}};
  std::vector<std::size_t> w;
  ParameterBox lambda{{-1.0}, {1.0}};
  bool strict = true;
  CouplingCase which = CouplingCase::single;
  GKind g = GKind::identity;

  bool operator==(const IndicatorCouplingSpec&) const = default;
};

inline void validate_indicator_spec(const IndicatorCouplingSpec& s, const EmbeddingSpec& e) {
  const std::size_t dim = embedding_dimension(e);
  std::vector<std::string> errs;
  if (s.u >= dim) errs.push_back("indicator U column out of range");
  if (s.v.empty()) errs.push_back("indicator V must have at least one component");
  for (const auto& c : s.v)
    if (c.column && *c.column >= dim) errs.push_back("indicator V column out of range");
  for (auto c : s.w)
    if (c >= dim) errs.push_back("indicator W column out of range");
  if (s.lambda.dim() != s.v.size()) errs.push_back("lambda box dimension must equal dim V");
  for (std::size_t j = 0; j < s.lambda.dim(); ++j)
    if (!(s.lambda.lo[j] <= s.lambda.hi[j]) || !std::isfinite(s.lambda.lo[j]) ||
        !std::isfinite(s.lambda.hi[j]))
      errs.push_back("lambda box must be finite with lo <= hi");
  if (!errs.empty()) {
    if (errs.size() == 1) throw ValidationError(errs[0]);
    throw AggregateValidationError(errs);
  }
  switch (s.which) {
    case CouplingCase::single:
      for (const auto& c : s.v)
        if (c.column)
          throw ValidationError("case 'single' needs V constant; got a column component");
      break;
    case CouplingCase::function_of_w:
      if (apply_g(s.g, std::vector<double>(s.w.size())).size() != s.v.size())
        throw ValidationError("g(W) has a different dimension than V");
      break;
    case CouplingCase::conditional_independence: {
      std::vector<std::size_t> vcols;
      for (const auto& c : s.v)
        if (c.column) vcols.push_back(*c.column);
      if (!declares_conditional_independence(e, s.u, vcols, s.w))
        throw ValidationError("the " + embedding_name(e) +
                                 " embedding does not declare U independent of V given W");
      break;
    }
  }
}

/// sup over the lambda grid of ||1{U_n < V_n'lambda} - 1{U'_n < V'_n'lambda}||_p
/// (weak inequalities when `strict` is false).
inline DecayReport indicator_coupling(const ModelSpec& m, const EmbeddingSpec& e,
                                      const IndicatorCouplingSpec& spec,
                                      std::span<const Theta> lambda_grid, DecayOptions o) {
  detail::validate_decay(o);
  validate_model(m);
  validate_indicator_spec(spec, e);
  if (lambda_grid.empty()) throw ValidationError("lambda grid must be nonempty");
  for (const auto& l : lambda_grid)
    if (!spec.lambda.contains(l)) throw ValidationError("lambda grid leaves the lambda box");
  auto check_g = [&](std::span<const double> row) {
    if (spec.which != CouplingCase::function_of_w) return;
    std::vector<double> w;
    for (auto c : spec.w) w.push_back(row[c]);
    const auto gv = apply_g(spec.g, w);
    for (std::size_t j = 0; j < spec.v.size(); ++j)
      if (gv[j] != spec.v[j].at(row))
        throw ConfigurationError("g(W) differs from V on a simulated draw");
  };
  auto ind = [&](std::span<const double> row, const Theta& l) {
    double idx = 0.0;
    for (std::size_t j = 0; j < spec.v.size(); ++j) idx += spec.v[j].at(row) * l[j];
    const double u = row[spec.u];
    return spec.strict ? (u < idx ? 1.0 : 0.0) : (u <= idx ? 1.0 : 0.0);
  };
  const auto sums = detail::accumulate_coupled(
      m, e, o, lambda_grid.size(),
      [&](const CoupledSeries& s, std::size_t t, std::span<double> out) {
        const auto a = s.original.row(t), b = s.perturbed.row(t);
        check_g(a);
        check_g(b);
        if (detail::rows_equal(a, b)) return false;
        bool any = false;
        for (std::size_t g = 0; g < lambda_grid.size(); ++g) {
          const double d = std::abs(ind(a, lambda_grid[g]) - ind(b, lambda_grid[g]));
          out[g] = d;  // |d|^p = d for d in {0, 1}
          any = any || d != 0.0;
        }
        return any;
      });
  return detail::reduce_slots(sums, lambda_grid.size(), o, "indicator-coupling");
}

// ---------------------------------------------------------------------------
// Checks

struct DominationCheck {
  std::size_t checked = 0;
  std::size_t violations = 0;
  /// max of sup_theta |f_theta(xi_n) - f_theta(xi'_n)| - |xi_n - xi'_n|.
  double worst_margin = -INFINITY;
};

/// Per replication and lag, compares sup_theta |f_theta(xi_n) - f_theta(xi'_n)|
/// with the Euclidean |xi_n - xi'_n|. Differences within rounding of the
/// inputs (4 ulp of their magnitude) are not counted as violations.
inline DominationCheck family_domination_check(const ModelSpec& m, const EmbeddingSpec& e,
                                               const FunctionFamily& f,
                                               std::span<const Theta> grid, DecayOptions o) {
  detail::validate_decay(o);
  const std::size_t n = o.lags.back();
  DominationCheck total;
  ordered_chunk_reduce(
      o.reps,
      [&](ChunkRange range) {
        DominationCheck part;
        for (std::size_t r = range.begin; r < range.end; ++r) {
          const auto s = simulate_coupled_embedded(m, e, StreamKey{o.seed, r}, n, o.burn_in);
          for (auto lag : o.lags) {
            const auto a = s.original.row(lag - 1), b = s.perturbed.row(lag - 1);
            double d2 = 0.0, scale = 0.0;
            for (std::size_t c = 0; c < a.size(); ++c) {
              d2 += (a[c] - b[c]) * (a[c] - b[c]);
              scale += std::abs(a[c]) + std::abs(b[c]);
            }
            double sup = 0.0;
            for (const auto& t : grid) {
              for (std::size_t c = 0; c < f.output_dim(); ++c)
                sup = std::max(sup, std::abs(f.value(t, a, c) - f.value(t, b, c)));
              scale = std::max(scale, std::abs(t[0]));
            }
            const double margin = sup - std::sqrt(d2);
            ++part.checked;
            part.worst_margin = std::max(part.worst_margin, margin);
            if (margin > 4.0 * std::numeric_limits<double>::epsilon() * (scale + 1.0))
              ++part.violations;
          }
        }
        return part;
      },
      [&](DominationCheck&& p) {
        total.checked += p.checked;
        total.violations += p.violations;
        total.worst_margin = std::max(total.worst_margin, p.worst_margin);
      });
  return total;
}

struct GridRefinement {
  DecayReport coarse;
  DecayReport fine;
  /// max over lags of |fine - coarse| / combined SE.
  double max_z = 0.0;
  /// fine >= coarse - 2 SE at every lag (the sup can only grow).
  bool consistent = true;
};

/// Recomputes a family decay report on a grid with points doubled (nested)
/// and compares the per-lag estimates.
inline GridRefinement grid_refinement_check(const ModelSpec& m, const EmbeddingSpec& e,
                                            const FunctionFamily& f, std::size_t points,
                                            const DecayOptions& o) {
  GridRefinement g;
  const auto coarse = theta_grid(f, points);
  const auto fine = theta_grid(f, 2 * points - 1);
  g.coarse = family_coupling_norm(m, e, f, coarse, o);
  g.fine = family_coupling_norm(m, e, f, fine, o);
  for (std::size_t j = 0; j < o.lags.size(); ++j) {
    const double se = std::hypot(g.coarse.ses[j], g.fine.ses[j]);
    const double diff = g.fine.estimates[j] - g.coarse.estimates[j];
    if (se > 0.0) g.max_z = std::max(g.max_z, std::abs(diff) / se);
    if (diff < -2.0 * se) g.consistent = false;
  }
  return g;
}

inline std::vector<std::size_t> lag_range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> out;
  for (std::size_t l = first; l <= last; ++l) out.push_back(l);
  return out;
}

}  // namespace equiproc

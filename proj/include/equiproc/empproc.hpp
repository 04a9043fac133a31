#pragma once

// Empirical process nu_n f = n^{-1/2} sum_i (f(xi_i) - E f(xi_0)), the grid
// modulus sup_{rho(f-g) < delta} |nu_n(f - g)|, and the moment scaling table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "equiproc/embedding.hpp"
#include "equiproc/errors.hpp"
#include "equiproc/families.hpp"
#include "equiproc/mean_oracle.hpp"
#include "equiproc/models.hpp"
#include "equiproc/numerics.hpp"
#include "equiproc/parallel.hpp"

namespace equiproc {

/// nu_n of per-observation values centred at `mean`.
inline double nu_n(std::span<const double> values, double mean) {
  if (values.empty()) throw ValidationError("nu_n needs at least one observation");
  double s = 0.0;
  for (double v : values) s += v - mean;
  return s / std::sqrt(static_cast<double>(values.size()));
}

/// nu_n f_theta over the rows of `data`, centred by the oracle mean.
inline double nu_n(const FunctionFamily& f, const Theta& theta, const Matrix& data, double mean,
                   std::size_t coord = 0) {
  if (data.rows() == 0) throw ValidationError("nu_n needs at least one observation");
  if (data.cols() != f.input_dim())
    throw ValidationError("data dimension does not match the family input dimension");
  double s = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) s += f.value(theta, data.row(i), coord) - mean;
  return s / std::sqrt(static_cast<double>(data.rows()));
}

inline double nu_n(const FunctionFamily& f, const Theta& theta, const Matrix& data,
                   const MeanOracle& oracle, std::size_t coord = 0) {
  return nu_n(f, theta, data, oracle(theta, coord), coord);
}

// ---------------------------------------------------------------------------
// Pilot rho table over grid pairs

struct GridPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;
  double se = 0.0;
};

struct PilotOptions {
  std::size_t reps = 100000;
  StreamKey key{0x91707u, 0};
};

/// rho_hat(f_{grid[i]} - f_{grid[j]}) for all i < j: closed form where the
/// law allows it, otherwise batch means over one sample of `reps` rows.
inline std::vector<GridPair> pilot_rho_table(const FunctionFamily& f, std::span<const Theta> grid,
                                             const Law& law, const PilotOptions& o = {}) {
  if (o.reps < 100) throw ValidationError("pilot reps must be >= 100");
  const std::size_t G = grid.size();
  std::vector<GridPair> out;
  out.reserve(G * (G - 1) / 2);
  if (G < 2) return out;
  if (closed_form_rho_squared(f, grid[0], grid[1], law)) {
    for (std::size_t i = 0; i < G; ++i)
      for (std::size_t j = i + 1; j < G; ++j) {
        const double r2 = *closed_form_rho_squared(f, grid[i], grid[j], law);
        out.push_back({i, j, std::sqrt(std::max(0.0, r2)), 0.0});
      }
    return out;
  }
  const Matrix rows = sample_law(law, f.input_dim(), o.reps, o.key);
  constexpr std::size_t batches = 50;
  const std::size_t len = std::max<std::size_t>(1, rows.rows() / batches);
  const std::size_t nb = rows.rows() / len;
  const std::size_t D = f.output_dim();
  const std::size_t P = G * (G - 1) / 2;
  // Per coordinate and pair, batch means of squared differences.
  std::vector<double> batch_sq(D * P * nb, 0.0);
  std::vector<double> vals(G * len);
  for (std::size_t c = 0; c < D; ++c)
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t g = 0; g < G; ++g)
        for (std::size_t r = 0; r < len; ++r)
          vals[g * len + r] = f.value(grid[g], rows.row(b * len + r), c);
      std::size_t p = 0;
      for (std::size_t i = 0; i < G; ++i)
        for (std::size_t j = i + 1; j < G; ++j, ++p) {
          double s = 0.0;
          for (std::size_t r = 0; r < len; ++r) {
            const double d = vals[i * len + r] - vals[j * len + r];
            s += d * d;
          }
          batch_sq[(c * P + p) * nb + b] = s / static_cast<double>(len);
        }
    }
  std::size_t p = 0;
  for (std::size_t i = 0; i < G; ++i)
    for (std::size_t j = i + 1; j < G; ++j, ++p) {
      GridPair best{i, j, 0.0, 0.0};
      for (std::size_t c = 0; c < D; ++c) {
        const auto est = mean_and_se(std::span<const double>(&batch_sq[(c * P + p) * nb], nb));
        const double r = std::sqrt(std::max(0.0, est.mean));
        const double se = r > 0.0 ? est.se / (2.0 * r) : std::sqrt(est.se);
        if (c == 0 || r > best.rho) {
          best.rho = r;
          best.se = se;
        }
      }
      out.push_back(best);
    }
  return out;
}

/// Pairs qualifying at `delta`: rho_hat + 2 SE < delta.
inline std::vector<GridPair> qualifying_pairs(std::span<const GridPair> table, double delta) {
  std::vector<GridPair> out;
  for (const auto& p : table)
    if (p.rho + 2.0 * p.se < delta) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Modulus experiment

struct ModulusOptions {
  std::vector<double> deltas{0.05, 0.1, 0.2, 0.4};
  std::size_t n = 400;
  int Q = 4;
  double gamma = 1.0;
  double eta = 0.5;
  std::size_t reps = 500;
  std::uint64_t seed = 1;
  std::size_t burn_in = kDefaultBurnIn;
  PilotOptions pilot{};
  std::size_t oracle_length = 1000000;
};

struct ModulusReport {
  std::vector<double> deltas;
  double eta = 0.0;
  std::size_t n = 0;
  int Q = 4;
  double gamma = 1.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::size_t grid_size = 0;
  /// Monte Carlo mean of (grid sup)^Q per delta, with its SE.
  std::vector<double> estimates;
  std::vector<double> ses;
  std::vector<double> exceed_freq;
  std::vector<std::size_t> pair_counts;
  std::vector<bool> no_pairs;
};

/// Precomputed pieces shared by modulus runs at several n.
struct ModulusSetup {
  FunctionFamily family;
  ModelSpec model;
  EmbeddingSpec embedding;
  std::vector<Theta> grid;
  std::vector<GridPair> table;
  /// E f_theta(xi_0) per grid point and output coordinate (g * D + c).
  std::vector<double> means;
};

namespace detail {

inline void validate_modulus(const ModulusOptions& o) {
  std::vector<std::string> errs;
  if (o.deltas.empty()) errs.push_back("delta grid must be nonempty");
  for (double d : o.deltas)
    if (!(d > 0.0)) errs.push_back("deltas must be > 0");
  if (o.n == 0) errs.push_back("n must be >= 1");
  if (o.Q < 2 || o.Q % 2 != 0) errs.push_back("Q must be an even integer >= 2");
  if (!(o.gamma > 0.0)) errs.push_back("gamma must be > 0");
  if (!(o.eta > 0.0)) errs.push_back("eta must be > 0");
  if (o.reps < 2) errs.push_back("reps must be >= 2");
  if (errs.size() == 1) throw ValidationError(errs[0]);
  if (!errs.empty()) throw AggregateValidationError(errs);
}

// nu_n f_theta for every grid point and coordinate on one path.
inline std::vector<double> grid_nu(const ModulusSetup& s, const Matrix& rows) {
  const std::size_t D = s.family.output_dim();
  std::vector<double> sums(s.grid.size() * D, 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto x = rows.row(i);
    for (std::size_t g = 0; g < s.grid.size(); ++g)
      for (std::size_t c = 0; c < D; ++c) sums[g * D + c] += s.family.value(s.grid[g], x, c);
  }
  const double n = static_cast<double>(rows.rows());
  const double root = std::sqrt(n);
  for (std::size_t k = 0; k < sums.size(); ++k) sums[k] = (sums[k] - n * s.means[k]) / root;
  return sums;
}

}  // namespace detail

/// Checks the bracketing-integral hypothesis, then builds the pilot rho table
/// and the mean oracle values on the grid.
inline ModulusSetup prepare_modulus(const FunctionFamily& f, const ModelSpec& m,
                                    const EmbeddingSpec& e, std::vector<Theta> grid,
                                    const ModulusOptions& o) {
  detail::validate_modulus(o);
  require_finite_bracketing_integral(f, o.gamma, o.Q);
  validate_model(m);
  if (grid.empty()) throw ValidationError("theta grid must be nonempty");
  if (embedding_dimension(e) != f.input_dim())
    throw ValidationError("embedding dimension does not match the family input dimension");
  for (const auto& t : grid)
    if (!f.theta_space().contains(t)) throw ValidationError("theta grid leaves the parameter space");
  ModulusSetup s{f, m, e, std::move(grid), {}, {}};
  const Law law = StationaryLaw{m, e, o.pilot.key, o.burn_in};
  s.table = pilot_rho_table(f, s.grid, law, o.pilot);
  MeanOracle oracle(m, e, f, o.oracle_length, {o.pilot.key.master_seed ^ 0x0AC1Eu, 1}, o.burn_in);
  for (std::size_t c = 0; c < f.output_dim(); ++c) {
    const auto mu = oracle.means(s.grid, c);
    s.means.resize(s.grid.size() * f.output_dim());
    for (std::size_t g = 0; g < s.grid.size(); ++g) s.means[g * f.output_dim() + c] = mu[g];
  }
  return s;
}

/// Monte Carlo of sup over qualifying grid pairs of |nu_n(f - g)| per delta.
inline ModulusReport run_modulus(const ModulusSetup& s, const ModulusOptions& o) {
  detail::validate_modulus(o);
  const std::size_t Ld = o.deltas.size();
  const std::size_t D = s.family.output_dim();
  std::vector<std::vector<GridPair>> pairs;
  for (double d : o.deltas) pairs.push_back(qualifying_pairs(s.table, d));

  struct Partial {
    std::vector<MomentAccumulator> moment;
    std::vector<std::size_t> exceed;
  };
  Partial total{std::vector<MomentAccumulator>(Ld), std::vector<std::size_t>(Ld, 0)};
  ordered_chunk_reduce(
      o.reps,
      [&](ChunkRange range) {
        Partial part{std::vector<MomentAccumulator>(Ld), std::vector<std::size_t>(Ld, 0)};
        for (std::size_t r = range.begin; r < range.end; ++r) {
          const Matrix rows =
              simulate_embedded(s.model, s.embedding, StreamKey{o.seed, r}, o.n, o.burn_in);
          const auto nu = detail::grid_nu(s, rows);
          for (std::size_t k = 0; k < Ld; ++k) {
            double sup = 0.0;  // empty supremum convention
            for (const auto& p : pairs[k])
              for (std::size_t c = 0; c < D; ++c)
                sup = std::max(sup, std::abs(nu[p.i * D + c] - nu[p.j * D + c]));
            part.moment[k].add(std::pow(sup, o.Q));
            if (sup > o.eta) ++part.exceed[k];
          }
        }
        return part;
      },
      [&](Partial&& p) {
        for (std::size_t k = 0; k < Ld; ++k) {
          total.moment[k].merge(p.moment[k]);
          total.exceed[k] += p.exceed[k];
        }
      });

  ModulusReport rep;
  rep.deltas = o.deltas;
  rep.eta = o.eta;
  rep.n = o.n;
  rep.Q = o.Q;
  rep.gamma = o.gamma;
  rep.reps = o.reps;
  rep.seed = o.seed;
  rep.grid_size = s.grid.size();
  for (std::size_t k = 0; k < Ld; ++k) {
    const auto est = total.moment[k].estimate();
    rep.estimates.push_back(est.mean);
    rep.ses.push_back(est.se);
    rep.exceed_freq.push_back(static_cast<double>(total.exceed[k]) / static_cast<double>(o.reps));
    rep.pair_counts.push_back(pairs[k].size());
    rep.no_pairs.push_back(pairs[k].empty());
  }
  return rep;
}

inline ModulusReport modulus_experiment(const FunctionFamily& f, const ModelSpec& m,
                                        const EmbeddingSpec& e, std::vector<Theta> grid,
                                        const ModulusOptions& o) {
  return run_modulus(prepare_modulus(f, m, e, std::move(grid), o), o);
}

/// Exceedance frequencies P(sup > eta) for every (n, delta); one report per n.
inline std::vector<ModulusReport> equicontinuity_probe(const FunctionFamily& f,
                                                       const ModelSpec& m, const EmbeddingSpec& e,
                                                       std::vector<Theta> grid,
                                                       std::span<const std::size_t> ns,
                                                       ModulusOptions o) {
  if (ns.empty()) throw ValidationError("n grid must be nonempty");
  const auto setup = prepare_modulus(f, m, e, std::move(grid), o);
  std::vector<ModulusReport> out;
  for (auto n : ns) {
    o.n = n;
    out.push_back(run_modulus(setup, o));
  }
  return out;
}

struct ModulusRefinement {
  ModulusReport coarse;
  ModulusReport fine;
  /// max over deltas of |fine - coarse| / combined SE.
  double max_z = 0.0;
  /// fine >= coarse - 2 SE at every delta.
  bool consistent = true;
};

/// Reruns the modulus on the nested grid of 2m - 1 points with the same paths.
inline ModulusRefinement modulus_grid_refinement(const FunctionFamily& f, const ModelSpec& m,
                                                 const EmbeddingSpec& e, std::size_t points,
                                                 const ModulusOptions& o) {
  if (points < 1) throw ValidationError("grid needs at least one point");
  ModulusRefinement r;
  r.coarse = modulus_experiment(f, m, e, theta_grid(f, points), o);
  r.fine = modulus_experiment(f, m, e, theta_grid(f, 2 * points - 1), o);
  for (std::size_t k = 0; k < o.deltas.size(); ++k) {
    const double se = std::hypot(r.coarse.ses[k], r.fine.ses[k]);
    const double diff = r.fine.estimates[k] - r.coarse.estimates[k];
    if (se > 0.0) r.max_z = std::max(r.max_z, std::abs(diff) / se);
    if (diff < -2.0 * se) r.consistent = false;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Moment scaling

struct ThetaPair {
  Theta a;
  Theta b;
};

struct MomentScalingOptions {
  std::vector<std::size_t> ns{100, 400};
  int Q = 2;
  double gamma = 1.0;
  std::size_t reps = 2000;
  std::uint64_t seed = 1;
  std::size_t burn_in = kDefaultBurnIn;
  PilotOptions pilot{};
  std::size_t oracle_length = 1000000;
};

struct MomentScalingRow {
  Theta a;
  Theta b;
  double rho_hat = 0.0;
  double rho_se = 0.0;
  double tau = 0.0;
  std::size_t n = 0;
  double moment = 0.0;
  double moment_se = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

struct MomentScalingReport {
  int Q = 2;
  double gamma = 1.0;
  std::size_t reps = 0;
  std::uint64_t seed = 0;
  std::vector<MomentScalingRow> rows;
  double max_ratio = 0.0;
  /// Smallest strictly positive ratio (0 when none).
  double min_nonzero_ratio = 0.0;

  double max_ratio_at(std::size_t n) const {
    double m = 0.0;
    for (const auto& r : rows)
      if (r.n == n) m = std::max(m, r.ratio);
    return m;
  }
};

/// n^{-Q/2} sum_{j=1}^{Q/2} (tau^2 n)^j
inline double moment_scale(double tau, std::size_t n, int Q) {
  const double t2n = tau * tau * static_cast<double>(n);
  double s = 0.0, pw = 1.0;
  for (int j = 1; j <= Q / 2; ++j) {
    pw *= t2n;
    s += pw;
  }
  return std::pow(static_cast<double>(n), -0.5 * Q) * s;
}

/// E|nu_n(f_a - f_b)|^Q per pair and n, divided by moment_scale(tau, n, Q)
/// with tau = rho_hat^{2/(2+gamma)}.
inline MomentScalingReport moment_scaling(const FunctionFamily& f, const ModelSpec& m,
                                          const EmbeddingSpec& e,
                                          std::span<const ThetaPair> pairs,
                                          const MomentScalingOptions& o) {
  std::vector<std::string> errs;
  if (o.Q < 2 || o.Q % 2 != 0) errs.push_back("Q must be an even integer >= 2");
  if (!(o.gamma > 0.0)) errs.push_back("gamma must be > 0");
  if (o.ns.empty()) errs.push_back("n grid must be nonempty");
  for (auto n : o.ns)
    if (n == 0) errs.push_back("n must be >= 1");
  if (o.reps < 2) errs.push_back("reps must be >= 2");
  if (pairs.empty()) errs.push_back("pair list must be nonempty");
  for (const auto& p : pairs)
    if (!f.theta_space().contains(p.a) || !f.theta_space().contains(p.b))
      errs.push_back("pair outside the parameter space");
  if (errs.size() == 1) throw ValidationError(errs[0]);
  if (!errs.empty()) throw AggregateValidationError(errs);
  validate_model(m);
  if (embedding_dimension(e) != f.input_dim())
    throw ValidationError("embedding dimension does not match the family input dimension");

  const Law law = StationaryLaw{m, e, o.pilot.key, o.burn_in};
  MeanOracle oracle(m, e, f, o.oracle_length, {o.pilot.key.master_seed ^ 0x0AC1Eu, 1}, o.burn_in);
  const std::size_t D = f.output_dim();
  struct PairInfo {
    RhoMetricEstimate rho;
    std::vector<double> mean_diff;  // per coordinate
  };
  std::vector<PairInfo> info;
  for (const auto& p : pairs) {
    PairInfo pi{rho(f, p.a, p.b, law, o.pilot.reps, RhoMethod::automatic, o.pilot.key), {}};
    if (!(pi.rho.value > 0.0) && p.a != p.b)
      throw ValidationError("moment scaling needs pairs with rho_hat > 0");
    for (std::size_t c = 0; c < D; ++c) pi.mean_diff.push_back(oracle(p.a, c) - oracle(p.b, c));
    info.push_back(std::move(pi));
  }

  MomentScalingReport rep;
  rep.Q = o.Q;
  rep.gamma = o.gamma;
  rep.reps = o.reps;
  rep.seed = o.seed;
  for (auto n : o.ns) {
    const std::size_t P = pairs.size();
    std::vector<MomentAccumulator> total(P);
    ordered_chunk_reduce(
        o.reps,
        [&](ChunkRange range) {
          std::vector<MomentAccumulator> part(P);
          for (std::size_t r = range.begin; r < range.end; ++r) {
            const Matrix rows = simulate_embedded(m, e, StreamKey{o.seed, r}, n, o.burn_in);
            for (std::size_t k = 0; k < P; ++k) {
              double worst = 0.0;
              for (std::size_t c = 0; c < D; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < rows.rows(); ++i) {
                  const auto x = rows.row(i);
                  s += f.value(pairs[k].a, x, c) - f.value(pairs[k].b, x, c);
                }
                const double nu = (s - static_cast<double>(n) * info[k].mean_diff[c]) /
                                  std::sqrt(static_cast<double>(n));
                worst = std::max(worst, std::pow(std::abs(nu), o.Q));
              }
              part[k].add(worst);
            }
          }
          return part;
        },
        [&](std::vector<MomentAccumulator>&& part) {
          for (std::size_t k = 0; k < P; ++k) total[k].merge(part[k]);
        });
    for (std::size_t k = 0; k < P; ++k) {
      MomentScalingRow row;
      row.a = pairs[k].a;
      row.b = pairs[k].b;
      row.rho_hat = info[k].rho.value;
      row.rho_se = info[k].rho.std_error;
      row.tau = std::pow(row.rho_hat, 2.0 / (2.0 + o.gamma));
      row.n = n;
      const auto est = total[k].estimate();
      row.moment = est.mean;
      row.moment_se = est.se;
      if (row.tau > 0.0) {
        const double scale = moment_scale(row.tau, n, o.Q);
        row.ratio = row.moment / scale;
        row.ratio_se = row.moment_se / scale;
      }
      rep.rows.push_back(std::move(row));
    }
  }
  for (const auto& r : rep.rows) {
    rep.max_ratio = std::max(rep.max_ratio, r.ratio);
    if (r.ratio > 0.0 && (rep.min_nonzero_ratio == 0.0 || r.ratio < rep.min_nonzero_ratio))
      rep.min_nonzero_ratio = r.ratio;
  }
  return rep;
}

/// Pair (F^{-1}(F(c) - s), F^{-1}(F(c) + s)) symmetric in probability around
/// `centre` whose rho is `target`, by bisection on s. Needs a scalar
/// parameter and a closed-form marginal for the law.
inline ThetaPair pair_at_rho(const FunctionFamily& f, const Law& law, double centre,
                             double target) {
  const auto m = closed_form_marginal(law);
  if (!m || f.param_dim() != 1)
    throw ValidationError("pair_at_rho needs a scalar family and a closed-form marginal");
  const double pc = m->cdf(centre);
  auto inv = [&](double p) { return m->uniform ? p : m->mean + m->sd * normal_quantile(p); };
  const auto& box = f.theta_space();
  auto make = [&](double s) {
    return ThetaPair{{std::max(box.lo[0], inv(pc - s))}, {std::min(box.hi[0], inv(pc + s))}};
  };
  auto rho_at = [&](double s) {
    const auto p = make(s);
    return rho(f, p.a, p.b, law, 100000, RhoMethod::closed_form).value;
  };
  // rho need not be monotone in s; bracket the first crossing on a scan.
  const double s_max = 0.999 * std::min(pc, 1.0 - pc);
  constexpr int scan = 200;
  double lo = 0.0, hi = -1.0;
  for (int k = 1; k <= scan; ++k) {
    const double s = s_max * k / scan;
    if (rho_at(s) >= target) {
      hi = s;
      break;
    }
    lo = s;
  }
  if (hi < 0.0) throw ValidationError("target rho not reachable inside the parameter box");
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rho_at(mid) < target ? lo : hi) = mid;
  }
  return make(0.5 * (lo + hi));
}

}  // namespace equiproc

#pragma once

// Scalar nonlinear time-series models in causal form and their coupled
// simulation. A model is advanced one period at a time by `step`, which
// consumes `innovations_per_step` draws from an InnovationStream.
//
// Coupled simulation for replication r:
//   * the original path burns in on stream (seed, r) and then keeps drawing
//     from that stream for periods 1..n;
//   * the perturbed path burns in on the independent pre-sample stream
//     (seed, r | presample) and then reuses the original's period 1..n draws.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "equiproc/errors.hpp"
#include "equiproc/innovations.hpp"
#include "equiproc/matrix.hpp"

namespace equiproc {

/// x_i = phi x_{i-1} + sigma eps_i
struct Ar1 {
  double phi = 0.5;
  double sigma = 1.0;
  bool operator==(const Ar1&) const = default;
};

/// x_i = sqrt(omega + a1 x_{i-1}^2) eps_i
struct Arch1 {
  double omega = 0.5;
  double a1 = 0.4;
  bool operator==(const Arch1&) const = default;
};

/// s2_i = omega + a x_{i-1}^2 + b s2_{i-1},  x_i = sqrt(s2_i) eps_i
struct Garch11 {
  double omega = 0.1;
  double a = 0.1;
  double b = 0.8;
  bool operator==(const Garch11&) const = default;
};

/// x_i = (a0 + a1 u_i) + (b0 + b1 u_i) x_{i-1} with u_i ~ U(0,1).
struct Qar1 {
  double a0 = -1.0;
  double a1 = 2.0;
  double b0 = 0.2;
  double b1 = 0.5;
  bool operator==(const Qar1&) const = default;
};

/// x_i = (phi + tau eta_i) x_{i-1} + eps_i with eta_i, eps_i iid innovations.
struct Rcar1 {
  double phi = 0.5;
  double tau = 0.3;
  bool operator==(const Rcar1&) const = default;
};

using ModelVariant = std::variant<Ar1, Arch1, Garch11, Qar1, Rcar1>;

struct ModelState {
  double x = 0.0;
  double s2 = 0.0;  // conditional variance, GARCH only
  bool operator==(const ModelState&) const = default;
};

struct ModelSpec {
  ModelVariant variant = Ar1{};
  InnovationSpec innovation{};
  /// Moment order for which the contraction condition is checked.
  double q = 2.0;

  static ModelSpec ar1(double phi, double sigma = 1.0, InnovationSpec e = {}) {
    return {Ar1{phi, sigma}, e};
  }
  static ModelSpec arch1(double omega, double a1, InnovationSpec e = {}) {
    return {Arch1{omega, a1}, e};
  }
  static ModelSpec garch11(double omega, double a, double b, InnovationSpec e = {}) {
    return {Garch11{omega, a, b}, e};
  }
  static ModelSpec qar1(double a0, double a1, double b0, double b1) {
    return {Qar1{a0, a1, b0, b1}, InnovationSpec::uniform()};
  }
  static ModelSpec rcar1(double phi, double tau, InnovationSpec e = {}) {
    return {Rcar1{phi, tau}, e};
  }
  /// iid N(0,1) observations, realized as AR1 with phi = 0.
  static ModelSpec iid_normal() { return ar1(0.0, 1.0); }

  std::size_t innovations_per_step() const {
    return std::holds_alternative<Rcar1>(variant) ? 2 : 1;
  }
  std::size_t dimension() const { return 1; }

  template <class T>
  const T* as() const {
    return std::get_if<T>(&variant);
  }

  bool is_gaussian_ar1() const {
    return as<Ar1>() && innovation.kind == InnovationKind::standard_normal;
  }

  bool operator==(const ModelSpec&) const = default;
};

inline std::string model_name(const ModelSpec& m) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ar1>) return "ar1";
        else if constexpr (std::is_same_v<T, Arch1>) return "arch1";
        else if constexpr (std::is_same_v<T, Garch11>) return "garch11";
        else if constexpr (std::is_same_v<T, Qar1>) return "qar1";
        else return "rcar1";
      },
      m.variant);
}

namespace detail {

// E|c(eps)|^{q} by Monte Carlo on a fixed internal stream; used only where no
// closed form is implemented.
template <class Fn>
double contraction_mc(const InnovationSpec& e, std::size_t draws_per_eval, Fn&& fn) {
  InnovationStream s(e, StreamKey{0x5EEDC0FFEEull, 0});
  double acc = 0.0;
  std::vector<double> buf(draws_per_eval);
  constexpr std::size_t kDraws = 200000;
  for (std::size_t i = 0; i < kDraws; ++i) {
    s.fill(buf);
    acc += fn(buf);
  }
  return acc / static_cast<double>(kDraws);
}

}  // namespace detail

/// Contraction factor E|d x_i / d x_{i-1}|^q (or its GARCH analogue on the
/// variance recursion). The model satisfies the geometric-moment-contraction
/// sufficient condition when this is < 1.
inline double contraction_factor(const ModelSpec& m) {
  const double q = m.q;
  const InnovationSpec& e = m.innovation;
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ar1>) {
          return std::pow(std::abs(v.phi), q);
        } else if constexpr (std::is_same_v<T, Arch1>) {
          return std::pow(v.a1, q / 2.0) * innovation_abs_moment(e, q);
        } else if constexpr (std::is_same_v<T, Garch11>) {
          if (q == 2.0) return v.a * innovation_second_moment(e) + v.b;
          return detail::contraction_mc(e, 1, [&](std::span<const double> d) {
            return std::pow(std::abs(v.a * d[0] * d[0] + v.b), q / 2.0);
          });
        } else if constexpr (std::is_same_v<T, Qar1>) {
          const double sup_b = std::max(std::abs(v.b0), std::abs(v.b0 + v.b1));
          return std::pow(sup_b, q);
        } else {
          if (q == 2.0) {
            const double m1 = innovation_mean(e);
            return v.phi * v.phi + 2.0 * v.phi * v.tau * m1 +
                   v.tau * v.tau * innovation_second_moment(e);
          }
          return detail::contraction_mc(e, 1, [&](std::span<const double> d) {
            return std::pow(std::abs(v.phi + v.tau * d[0]), q);
          });
        }
      },
      m.variant);
}

/// Throws ValidationError unless parameters are admissible and the
/// contraction condition holds.
inline void validate_model(const ModelSpec& m) {
  m.innovation.validate();
  if (!(m.q > 0.0)) throw ValidationError("model contraction order q must be > 0");
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ar1>) {
          if (!(std::abs(v.phi) < 1.0)) throw ValidationError("ar1 requires |phi| < 1");
          if (!(v.sigma > 0.0)) throw ValidationError("ar1 requires sigma > 0");
        } else if constexpr (std::is_same_v<T, Arch1>) {
          if (!(v.omega > 0.0)) throw ValidationError("arch1 requires omega > 0");
          if (!(v.a1 >= 0.0)) throw ValidationError("arch1 requires a1 >= 0");
        } else if constexpr (std::is_same_v<T, Garch11>) {
          if (!(v.omega > 0.0)) throw ValidationError("garch11 requires omega > 0");
          if (!(v.a >= 0.0) || !(v.b >= 0.0)) throw ValidationError("garch11 requires a, b >= 0");
        } else if constexpr (std::is_same_v<T, Qar1>) {
          if (m.innovation.kind != InnovationKind::uniform01)
            throw ValidationError("qar1 is driven by uniform-0-1 innovations");
        } else {
          if (!(v.tau >= 0.0)) throw ValidationError("rcar1 requires tau >= 0");
        }
      },
      m.variant);
  const double c = contraction_factor(m);
  if (!(c < 1.0)) {
    std::ostringstream os;
    os << model_name(m) << " fails the moment contraction condition at q=" << m.q
       << " (factor " << c << " >= 1)";
    throw ValidationError(os.str());
  }
}

inline ModelState initial_state(const ModelSpec& m) {
  ModelState s;
  if (const auto* g = m.as<Garch11>()) {
    const double persistence = g->a * innovation_second_moment(m.innovation) + g->b;
    s.s2 = persistence < 1.0 ? g->omega / (1.0 - persistence) : g->omega;
  }
  return s;
}

/// Advances the state by one period and returns the new observation.
inline double step(const ModelSpec& m, ModelState& s, std::span<const double> eps) {
  return std::visit(
      [&](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ar1>) {
          s.x = v.phi * s.x + v.sigma * eps[0];
        } else if constexpr (std::is_same_v<T, Arch1>) {
          s.x = std::sqrt(v.omega + v.a1 * s.x * s.x) * eps[0];
        } else if constexpr (std::is_same_v<T, Garch11>) {
          s.s2 = v.omega + v.a * s.x * s.x + v.b * s.s2;
          s.x = std::sqrt(s.s2) * eps[0];
        } else if constexpr (std::is_same_v<T, Qar1>) {
          const double u = eps[0];
          s.x = (v.a0 + v.a1 * u) + (v.b0 + v.b1 * u) * s.x;
        } else {
          s.x = (v.phi + v.tau * eps[0]) * s.x + eps[1];
        }
        return s.x;
      },
      m.variant);
}

/// Runs `burn_in` periods from the model's initial state, keeping the last
/// `history` observations (oldest first).
inline ModelState burn_in_state(const ModelSpec& m, InnovationStream& stream, std::size_t burn_in,
                                std::size_t history = 0, std::vector<double>* kept = nullptr) {
  ModelState s = initial_state(m);
  std::array<double, 2> eps{};
  const std::span<double> e(eps.data(), m.innovations_per_step());
  if (kept) kept->assign(history, 0.0);
  for (std::size_t t = 0; t < burn_in; ++t) {
    stream.fill(e);
    const double x = step(m, s, e);
    if (kept && history > 0 && t + history >= burn_in) (*kept)[t + history - burn_in] = x;
  }
  return s;
}

inline constexpr std::size_t kDefaultBurnIn = 2000;

/// Approximately stationary path of length n (n x 1).
inline Matrix simulate_path(const ModelSpec& m, StreamKey key, std::size_t n,
                            std::size_t burn_in = kDefaultBurnIn) {
  if (n == 0) throw ValidationError("path length n must be >= 1");
  validate_model(m);
  InnovationStream stream(m.innovation, key);
  ModelState s = burn_in_state(m, stream, burn_in);
  Matrix out(n, 1);
  std::array<double, 2> eps{};
  const std::span<double> e(eps.data(), m.innovations_per_step());
  for (std::size_t i = 0; i < n; ++i) {
    stream.fill(e);
    out(i, 0) = step(m, s, e);
  }
  return out;
}

struct CoupledPaths {
  Matrix original;   // periods 1..n
  Matrix perturbed;  // periods 1..n
  std::size_t n = 0;
  std::size_t d = 1;
  std::uint64_t replication_id = 0;
  ModelState original_initial;   // state at period 0
  ModelState perturbed_initial;  // state at period 0
  Matrix original_history;       // observations at periods -(H-1)..0
  Matrix perturbed_history;
};

/// Drives both states with the same period-1..n innovations from `stream`.
inline void propagate_coupled(const ModelSpec& m, ModelState original, ModelState perturbed,
                              InnovationStream& stream, Matrix& out_original,
                              Matrix& out_perturbed) {
  std::array<double, 2> eps{};
  const std::span<double> e(eps.data(), m.innovations_per_step());
  for (std::size_t i = 0; i < out_original.rows(); ++i) {
    stream.fill(e);
    out_original(i, 0) = step(m, original, e);
    out_perturbed(i, 0) = step(m, perturbed, e);
  }
}

/// Coupled pair for stream `key`; `history` pre-sample observations of each
/// path are retained for embeddings that look back in time.
inline CoupledPaths simulate_coupled(const ModelSpec& m, StreamKey key, std::size_t n,
                                     std::size_t burn_in = kDefaultBurnIn,
                                     std::size_t history = 0) {
  if (n == 0) throw ValidationError("path length n must be >= 1");
  if (history > burn_in) throw ValidationError("retained history exceeds burn-in length");
  validate_model(m);
  CoupledPaths cp;
  cp.n = n;
  cp.replication_id = key.stream_id & stream_tag::max_replication;
  InnovationStream main(m.innovation, key);
  InnovationStream pre(m.innovation, key.presample());
  std::vector<double> hist_o, hist_p;
  cp.original_initial = burn_in_state(m, main, burn_in, history, &hist_o);
  cp.perturbed_initial = burn_in_state(m, pre, burn_in, history, &hist_p);
  cp.original_history = column_matrix(hist_o);
  cp.perturbed_history = column_matrix(hist_p);
  cp.original = Matrix(n, 1);
  cp.perturbed = Matrix(n, 1);
  propagate_coupled(m, cp.original_initial, cp.perturbed_initial, main, cp.original,
                    cp.perturbed);
  return cp;
}

inline CoupledPaths simulate_coupled(const ModelSpec& m, std::uint64_t master_seed,
                                     std::uint64_t replication_id, std::size_t n,
                                     std::size_t burn_in = kDefaultBurnIn,
                                     std::size_t history = 0) {
  if (replication_id > stream_tag::max_replication)
    throw ValidationError("replication id exceeds 56 bits");
  return simulate_coupled(m, StreamKey{master_seed, replication_id}, n, burn_in, history);
}

struct BurnInCheck {
  double variance_base = 0.0;
  double variance_doubled = 0.0;
  double relative_change = 0.0;
  bool stable = false;
};

/// Sample variance of a path simulated with burn_in and with 2*burn_in.
inline BurnInCheck burn_in_doubling_check(const ModelSpec& m, StreamKey key, std::size_t n,
                                          std::size_t burn_in, double tolerance = 0.05) {
  auto var_of = [](const Matrix& p) {
    double mean = 0.0, sq = 0.0;
    for (double v : p.data()) mean += v;
    mean /= static_cast<double>(p.rows());
    for (double v : p.data()) sq += (v - mean) * (v - mean);
    return sq / static_cast<double>(p.rows() - 1);
  };
  BurnInCheck c;
  c.variance_base = var_of(simulate_path(m, key, n, burn_in));
  c.variance_doubled = var_of(simulate_path(m, key, n, 2 * burn_in));
  c.relative_change = std::abs(c.variance_doubled - c.variance_base) / c.variance_base;
  c.stable = c.relative_change <= tolerance;
  return c;
}

}  // namespace equiproc

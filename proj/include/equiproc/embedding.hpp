#pragma once

// Lifting scalar model paths into the vector observations used by the
// function families:
//   identity            xi_i = X_i
//   lag-pair(h)         xi_i = (X_{i-h}, X_i)
//   bivariate-copy      xi_i = (X_{i,1}, X_{i,2}), two independent model copies
//   censored-triple     xi_i = (T_i, C_i, 1, z_i) with z_i = tanh(X_i),
//                       T_i = beta0 + beta1 z_i + error_scale u_i,
//                       C_i = censor_loc + censor_scale v_i
//   regression-augment  xi_i = (Y_{i,1}, Z_{i,1}, Y_{i,2}, Z_{i,2}) with
//                       Y_{i,j} = eta_j Z_{i,j} + X_{i,j}
// u, v and Z are iid N(0,1) auxiliary series (Z scaled by covariate_scale).

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "equiproc/errors.hpp"
#include "equiproc/innovations.hpp"
#include "equiproc/matrix.hpp"
#include "equiproc/models.hpp"

namespace equiproc {

struct IdentityEmbedding {
  bool operator==(const IdentityEmbedding&) const = default;
};
struct LagPair {
  std::size_t h = 1;
  bool operator==(const LagPair&) const = default;
};
struct BivariateCopy {
  bool operator==(const BivariateCopy&) const = default;
};
struct CensoredTriple {
  double beta0 = 0.0;
  double beta1 = 1.0;
  double error_scale = 1.0;
  double censor_loc = 1.0;
  double censor_scale = 1.0;
  bool operator==(const CensoredTriple&) const = default;
};
struct RegressionAugment {
  double eta1 = 1.0;
  double eta2 = -0.5;
  double covariate_scale = 1.0;
  bool operator==(const RegressionAugment&) const = default;
};

using EmbeddingSpec =
    std::variant<IdentityEmbedding, LagPair, BivariateCopy, CensoredTriple, RegressionAugment>;

inline std::string embedding_name(const EmbeddingSpec& e) {
  static const char* names[] = {"identity", "lag-pair", "bivariate-copy", "censored-triple",
                                "regression-augment"};
  return names[e.index()];
}

inline std::size_t embedding_dimension(const EmbeddingSpec& e) {
  static const std::size_t dims[] = {1, 2, 2, 4, 4};
  return dims[e.index()];
}

/// Observations before period 1 that a row at period 1 depends on.
inline std::size_t embedding_lookback(const EmbeddingSpec& e) {
  if (const auto* lp = std::get_if<LagPair>(&e)) return lp->h;
  return 0;
}

/// Independent model copies the embedding consumes.
inline unsigned model_components(const EmbeddingSpec& e) {
  return std::holds_alternative<BivariateCopy>(e) || std::holds_alternative<RegressionAugment>(e)
             ? 2u
             : 1u;
}

/// Auxiliary iid N(0,1) series the embedding consumes.
inline unsigned auxiliary_components(const EmbeddingSpec& e) {
  return std::holds_alternative<CensoredTriple>(e) || std::holds_alternative<RegressionAugment>(e)
             ? 2u
             : 0u;
}

/// Stream component index of auxiliary series j.
inline constexpr unsigned kAuxComponentBase = 8;

/// Whether column `u` is declared independent of columns `v` given columns
/// `w` by construction of the embedding.
inline bool declares_conditional_independence(const EmbeddingSpec& e, std::size_t u,
                                              std::span<const std::size_t> v,
                                              std::span<const std::size_t> w) {
  if (!std::holds_alternative<CensoredTriple>(e)) return false;
  // T depends on (z, u) and C on v only, so T is independent of C given Z.
  auto has = [](std::span<const std::size_t> s, std::size_t c) {
    for (auto x : s)
      if (x == c) return true;
    return false;
  };
  const bool uv = (u == 0 && v.size() == 1 && v[0] == 1) || (u == 1 && v.size() == 1 && v[0] == 0);
  return uv && has(w, 3);
}

inline void validate_embedding(const EmbeddingSpec& e) {
  if (const auto* c = std::get_if<CensoredTriple>(&e)) {
    if (!(c->error_scale > 0.0) || !(c->censor_scale > 0.0))
      throw ValidationError("censored-triple scales must be > 0");
  }
  if (const auto* r = std::get_if<RegressionAugment>(&e)) {
    if (!(r->covariate_scale > 0.0))
      throw ValidationError("regression-augment covariate_scale must be > 0");
  }
}

namespace detail {

// Row for period t. `model[c](k)` is model copy c at offset k relative to
// period t (k <= 0); `aux[j]` is auxiliary draw j at period t.
template <class ModelAt>
void fill_row(const EmbeddingSpec& e, ModelAt&& model, std::span<const double> aux,
              std::span<double> out) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IdentityEmbedding>) {
          out[0] = model(0, 0);
        } else if constexpr (std::is_same_v<T, LagPair>) {
          out[0] = model(0, -static_cast<std::ptrdiff_t>(s.h));
          out[1] = model(0, 0);
        } else if constexpr (std::is_same_v<T, BivariateCopy>) {
          out[0] = model(0, 0);
          out[1] = model(1, 0);
        } else if constexpr (std::is_same_v<T, CensoredTriple>) {
          const double z = std::tanh(model(0, 0));
          out[0] = s.beta0 + s.beta1 * z + s.error_scale * aux[0];
          out[1] = s.censor_loc + s.censor_scale * aux[1];
          out[2] = 1.0;
          out[3] = z;
        } else {
          const double z1 = s.covariate_scale * aux[0];
          const double z2 = s.covariate_scale * aux[1];
          out[0] = s.eta1 * z1 + model(0, 0);
          out[1] = z1;
          out[2] = s.eta2 * z2 + model(1, 0);
          out[3] = z2;
        }
      },
      e);
}

}  // namespace detail

/// Lifts materialized component series. `models` holds the model copies
/// (length n each), `aux` the auxiliary series. Lag-pair returns n - h rows;
/// every other embedding returns n rows.
inline Matrix embed(std::span<const Matrix> models, std::span<const Matrix> aux,
                    const EmbeddingSpec& e) {
  validate_embedding(e);
  if (models.size() != model_components(e) || aux.size() != auxiliary_components(e))
    throw ValidationError(embedding_name(e) + " embedding received the wrong number of series");
  const std::size_t n = models[0].rows();
  for (const auto& m : models)
    if (m.rows() != n) throw ValidationError("component series lengths differ");
  for (const auto& a : aux)
    if (a.rows() != n) throw ValidationError("auxiliary series lengths differ");
  const std::size_t lb = embedding_lookback(e);
  if (lb >= n) throw ValidationError("lag h must be smaller than the path length");
  Matrix out(n - lb, embedding_dimension(e));
  std::vector<double> a(aux.size());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const std::size_t t = r + lb;
    for (std::size_t j = 0; j < aux.size(); ++j) a[j] = aux[j](t, 0);
    detail::fill_row(
        e, [&](unsigned c, std::ptrdiff_t k) { return models[c](t + k, 0); }, a, out.row(r));
  }
  return out;
}

inline Matrix embed(const Matrix& path, const EmbeddingSpec& e) {
  return embed(std::span<const Matrix>(&path, 1), {}, e);
}

/// Stationary embedded series with n rows for stream `key`.
inline Matrix simulate_embedded(const ModelSpec& m, const EmbeddingSpec& e, StreamKey key,
                                std::size_t n, std::size_t burn_in = kDefaultBurnIn) {
  if (n == 0) throw ValidationError("path length n must be >= 1");
  const std::size_t len = n + embedding_lookback(e);
  std::vector<Matrix> models, aux;
  for (unsigned c = 0; c < model_components(e); ++c)
    models.push_back(simulate_path(m, key.component(c), len, burn_in));
  for (unsigned j = 0; j < auxiliary_components(e); ++j) {
    InnovationStream s(InnovationSpec::normal(), key.component(kAuxComponentBase + j));
    Matrix a(len, 1);
    s.fill(a.data());
    aux.push_back(std::move(a));
  }
  return embed(models, aux, e);
}

/// Embedded coupled pair: rows for periods 1..n of both paths.
struct CoupledSeries {
  Matrix original;
  Matrix perturbed;
};

/// Lifts coupled component pairs. Rows at periods t <= h of a lag-pair
/// embedding look back into the retained pre-sample history.
inline CoupledSeries embed_coupled(std::span<const CoupledPaths> models,
                                   std::span<const Matrix> aux, const EmbeddingSpec& e) {
  validate_embedding(e);
  if (models.size() != model_components(e) || aux.size() != auxiliary_components(e))
    throw ValidationError(embedding_name(e) + " embedding received the wrong number of series");
  const std::size_t n = models[0].n;
  const auto lb = static_cast<std::ptrdiff_t>(embedding_lookback(e));
  for (const auto& cp : models)
    if (static_cast<std::ptrdiff_t>(cp.original_history.rows()) < lb)
      throw ValidationError("coupled paths retain too little pre-sample history for the lag");
  const std::size_t dim = embedding_dimension(e);
  CoupledSeries out{Matrix(n, dim), Matrix(n, dim)};
  std::vector<double> a(aux.size());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < aux.size(); ++j) a[j] = aux[j](t, 0);
    auto at = [&](bool perturbed) {
      return [&, perturbed](unsigned c, std::ptrdiff_t k) {
        const CoupledPaths& cp = models[c];
        const Matrix& path = perturbed ? cp.perturbed : cp.original;
        const Matrix& hist = perturbed ? cp.perturbed_history : cp.original_history;
        const auto idx = static_cast<std::ptrdiff_t>(t) + k;
        if (idx >= 0) return path(static_cast<std::size_t>(idx), 0);
        return hist(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(hist.rows()) + idx), 0);
      };
    };
    detail::fill_row(e, at(false), a, out.original.row(t));
    detail::fill_row(e, at(true), a, out.perturbed.row(t));
  }
  return out;
}

/// Coupled embedded pair for replication stream `key`, periods 1..n.
inline CoupledSeries simulate_coupled_embedded(const ModelSpec& m, const EmbeddingSpec& e,
                                               StreamKey key, std::size_t n,
                                               std::size_t burn_in = kDefaultBurnIn) {
  const std::size_t lb = embedding_lookback(e);
  std::vector<CoupledPaths> models;
  for (unsigned c = 0; c < model_components(e); ++c)
    models.push_back(simulate_coupled(m, key.component(c), n, burn_in, lb));
  std::vector<Matrix> aux;
  for (unsigned j = 0; j < auxiliary_components(e); ++j) {
    InnovationStream s(InnovationSpec::normal(), key.component(kAuxComponentBase + j));
    Matrix a(n, 1);
    s.fill(a.data());
    aux.push_back(std::move(a));
  }
  return embed_coupled(models, aux, e);
}

}  // namespace equiproc

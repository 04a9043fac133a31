#pragma once

// E f_theta(xi_0) under the stationary law of an embedded model: closed form
// for Gaussian AR1 inputs where implemented, otherwise the average over one
// long simulated path. Results are cached per theta.

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "equiproc/embedding.hpp"
#include "equiproc/families.hpp"
#include "equiproc/models.hpp"

namespace equiproc {

inline constexpr std::size_t kMinOracleLength = 100000;

class MeanOracle {
 public:
  MeanOracle(ModelSpec model, EmbeddingSpec embedding, FunctionFamily family,
             std::size_t oracle_length = 1000000, StreamKey key = {0x0AC1Eu, 0},
             std::size_t burn_in = kDefaultBurnIn)
      : law_(StationaryLaw{std::move(model), embedding, key, burn_in}),
        family_(std::move(family)),
        length_(oracle_length) {
    if (oracle_length < kMinOracleLength)
      throw ValidationError("mean oracle length must be >= 100000");
    if (embedding_dimension(embedding) != family_.input_dim())
      throw ValidationError("embedding dimension does not match the family input dimension");
    validate_model(std::get<StationaryLaw>(law_).model);
  }

  MeanOracle(const MeanOracle&) = delete;
  MeanOracle& operator=(const MeanOracle&) = delete;

  /// Whether every query is answered in closed form.
  bool exact() const {
    const Theta probe = family_.theta_space().lo;
    return closed_form_mean(family_, probe, law_).has_value();
  }

  double operator()(const Theta& theta, std::size_t coord = 0) const {
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(theta, coord);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    double value = 0.0;
    if (auto cf = closed_form_mean(family_, theta, law_); cf && coord == 0) {
      value = *cf;
    } else {
      const Matrix& rows = path_locked();
      double s = 0.0;
      for (std::size_t i = 0; i < rows.rows(); ++i) s += family_.value(theta, rows.row(i), coord);
      value = s / static_cast<double>(rows.rows());
    }
    cache_.emplace(key, value);
    return value;
  }

  /// Means for many parameters in one pass over the oracle path.
  std::vector<double> means(std::span<const Theta> thetas, std::size_t coord = 0) const {
    std::vector<double> out(thetas.size());
    std::vector<std::size_t> missing;
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      if (auto cf = closed_form_mean(family_, thetas[j], law_); cf && coord == 0) {
        out[j] = *cf;
      } else {
        missing.push_back(j);
      }
    }
    if (!missing.empty()) {
      std::lock_guard lock(mutex_);
      const Matrix& rows = path_locked();
      std::vector<double> sums(missing.size(), 0.0);
      for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto x = rows.row(i);
        for (std::size_t m = 0; m < missing.size(); ++m)
          sums[m] += family_.value(thetas[missing[m]], x, coord);
      }
      for (std::size_t m = 0; m < missing.size(); ++m) {
        out[missing[m]] = sums[m] / static_cast<double>(rows.rows());
        cache_.emplace(std::make_pair(thetas[missing[m]], coord), out[missing[m]]);
      }
    }
    return out;
  }

  const FunctionFamily& family() const noexcept { return family_; }
  const Law& law() const noexcept { return law_; }

 private:
  const Matrix& path_locked() const {
    if (!path_) {
      const auto& st = std::get<StationaryLaw>(law_);
      path_ = simulate_embedded(st.model, st.embedding, st.key, length_, st.burn_in);
    }
    return *path_;
  }

  Law law_;
  FunctionFamily family_;
  std::size_t length_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<Theta, std::size_t>, double> cache_;
  mutable std::optional<Matrix> path_;
};

/// One-shot E f_theta(xi_0).
inline double stationary_mean_oracle(const ModelSpec& model, const EmbeddingSpec& embedding,
                                     const FunctionFamily& family, const Theta& theta,
                                     std::size_t oracle_length = kMinOracleLength,
                                     StreamKey key = {0x0AC1Eu, 0}) {
  return MeanOracle(model, embedding, family, oracle_length, key)(theta);
}

}  // namespace equiproc

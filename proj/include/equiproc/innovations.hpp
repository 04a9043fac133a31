#pragma once

// Counter-based innovation streams.
//
// Every stream is a Philox4x32-10 counter sequence. The Philox key is derived
// from the master seed, and the upper 64 bits of the 128-bit counter hold the
// stream id, so distinct (master_seed, stream_id) pairs address disjoint
// counter ranges. The generator and the variate transforms below are frozen:
// golden report files depend on them.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "equiproc/errors.hpp"

namespace equiproc {

/// Philox4x32 with 10 rounds (Salmon et al., Random123 constants).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      ctr = single_round(ctr, key);
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  static Counter single_round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// SplitMix64 finalizer; used only to spread the master seed over the key.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum class InnovationKind { standard_normal, uniform01, student_t, rademacher };

struct InnovationSpec {
  InnovationKind kind = InnovationKind::standard_normal;
  double dof = 0.0;  // student_t only

  static InnovationSpec normal() { return {}; }
  static InnovationSpec uniform() { return {InnovationKind::uniform01, 0.0}; }
  static InnovationSpec rademacher() { return {InnovationKind::rademacher, 0.0}; }
  static InnovationSpec student(double dof) { return {InnovationKind::student_t, dof}; }

  void validate() const {
    if (kind == InnovationKind::student_t && !(dof > 2.0))
      throw ValidationError("student-t innovations need dof > 2, got " + std::to_string(dof));
  }

  bool operator==(const InnovationSpec&) const = default;
};

inline std::string_view to_string(InnovationKind k) {
  switch (k) {
    case InnovationKind::standard_normal: return "standard-normal";
    case InnovationKind::uniform01: return "uniform-0-1";
    case InnovationKind::student_t: return "student-t";
    case InnovationKind::rademacher: return "rademacher";
  }
  return "?";
}

inline InnovationKind innovation_kind_from_string(std::string_view s) {
  if (s == "standard-normal") return InnovationKind::standard_normal;
  if (s == "uniform-0-1") return InnovationKind::uniform01;
  if (s == "student-t") return InnovationKind::student_t;
  if (s == "rademacher") return InnovationKind::rademacher;
  throw ValidationError("unknown innovation kind '" + std::string(s) + "'");
}

/// Tags occupying the top byte of a stream id.
namespace stream_tag {
inline constexpr std::uint64_t presample = std::uint64_t{1} << 63;
inline constexpr int component_shift = 56;
inline constexpr std::uint64_t component_mask = std::uint64_t{0x7F} << component_shift;
inline constexpr std::uint64_t max_replication = (std::uint64_t{1} << component_shift) - 1;

constexpr std::uint64_t component(std::uint64_t replication, unsigned c) {
  return replication | (std::uint64_t{c} << component_shift);
}
}  // namespace stream_tag

struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  /// Key of the independent pre-sample copy used by coupled simulation.
  StreamKey presample() const { return {master_seed, stream_id | stream_tag::presample}; }
  StreamKey component(unsigned c) const {
    return {master_seed, (stream_id & ~stream_tag::component_mask) |
                             (std::uint64_t{c} << stream_tag::component_shift)};
  }

  bool operator==(const StreamKey&) const = default;
};

/// Sequential source of raw 64-bit words and uniforms for one StreamKey.
class BitStream {
 public:
  BitStream() = default;
  explicit BitStream(StreamKey key) : key_(key) {
    const std::uint64_t k = mix64(key.master_seed);
    philox_key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  std::uint64_t next_u64() noexcept {
    if (lane_ == 2) refill();
    return buffer_[lane_++];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double next_uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double next_uniform_open0() noexcept { return 1.0 - next_uniform(); }

  const StreamKey& key() const noexcept { return key_; }
  std::uint64_t words_consumed() const noexcept { return block_ * 2 - (2 - lane_); }

 private:
  void refill() noexcept {
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(key_.stream_id),
        static_cast<std::uint32_t>(key_.stream_id >> 32)};
    const auto out = Philox4x32::generate(ctr, philox_key_);
    buffer_[0] = (std::uint64_t{out[1]} << 32) | out[0];
    buffer_[1] = (std::uint64_t{out[3]} << 32) | out[2];
    ++block_;
    lane_ = 0;
  }

  StreamKey key_{};
  Philox4x32::Key philox_key_{};
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int lane_ = 2;
};

/// Stream of iid innovations with a fixed law.
///
/// Normals use Box-Muller pairs (the second variate is cached),
/// student-t draws are standardized to unit variance, and gamma variates for
/// the t denominator use Marsaglia-Tsang.
class InnovationStream {
 public:
  InnovationStream(InnovationSpec spec, StreamKey key) : spec_(spec), bits_(key) {
    spec_.validate();
    if (spec_.kind == InnovationKind::student_t)
      t_scale_ = std::sqrt((spec_.dof - 2.0) / spec_.dof);
  }

  double next() {
    switch (spec_.kind) {
      case InnovationKind::standard_normal: return next_normal();
      case InnovationKind::uniform01: return bits_.next_uniform();
      case InnovationKind::rademacher: return (bits_.next_u64() >> 63) ? 1.0 : -1.0;
      case InnovationKind::student_t: return next_student();
    }
    return 0.0;
  }

  void fill(std::span<double> out) {
    for (double& v : out) v = next();
  }

  std::vector<double> draw(std::size_t count) {
    if (count == 0) throw ValidationError("draw count must be at least 1");
    std::vector<double> out(count);
    fill(out);
    return out;
  }

  const InnovationSpec& spec() const noexcept { return spec_; }

 private:
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = bits_.next_uniform_open0();
    const double u2 = bits_.next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, 1) for shape >= 1.
  double next_gamma(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = next_normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = bits_.next_uniform_open0();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double next_student() {
    const double z = next_normal();
    // chi2(dof) = 2 * Gamma(dof / 2); shape >= 1 because dof > 2.
    const double chi2 = 2.0 * next_gamma(0.5 * spec_.dof);
    return t_scale_ * z / std::sqrt(chi2 / spec_.dof);
  }

  InnovationSpec spec_;
  BitStream bits_;
  double t_scale_ = 1.0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline InnovationStream derive_stream(const InnovationSpec& spec, StreamKey key) {
  return InnovationStream(spec, key);
}

/// E|eps|^q for the innovation law. Closed forms except student-t, which
/// uses the exact t absolute-moment formula for q < dof.
inline double innovation_abs_moment(const InnovationSpec& spec, double q) {
  switch (spec.kind) {
    case InnovationKind::standard_normal:
      return std::pow(2.0, q / 2.0) * std::tgamma((q + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
    case InnovationKind::uniform01: return 1.0 / (q + 1.0);
    case InnovationKind::rademacher: return 1.0;
    case InnovationKind::student_t: {
      const double nu = spec.dof;
      if (q >= nu) return INFINITY;
      // E|T|^q = nu^{q/2} G((q+1)/2) G((nu-q)/2) / (sqrt(pi) G(nu/2)), then standardize.
      const double raw = std::pow(nu, q / 2.0) *
                         std::exp(std::lgamma((q + 1.0) / 2.0) + std::lgamma((nu - q) / 2.0) -
                                  std::lgamma(nu / 2.0)) /
                         std::sqrt(std::numbers::pi);
      return raw * std::pow((nu - 2.0) / nu, q / 2.0);
    }
  }
  return 0.0;
}

/// E[eps] and E[eps^2] of the innovation law.
inline double innovation_mean(const InnovationSpec& spec) {
  return spec.kind == InnovationKind::uniform01 ? 0.5 : 0.0;
}
inline double innovation_second_moment(const InnovationSpec& spec) {
  return spec.kind == InnovationKind::uniform01 ? 1.0 / 3.0 : 1.0;
}

}  // namespace equiproc

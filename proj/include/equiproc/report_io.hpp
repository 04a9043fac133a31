#pragma once

// Byte-stable report serialization: %.17g floats, '\n' line endings.

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <utility>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "equiproc/empproc.hpp"
#include "equiproc/estimators.hpp"
#include "equiproc/families.hpp"
#include "equiproc/gmc.hpp"

namespace equiproc {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Accumulates CSV text; every field is emitted verbatim.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j) text_ += ',';
      text_ += fields[j];
    }
    text_ += '\n';
  }
  const std::string& str() const noexcept { return text_; }

 private:
  std::string text_;
};

inline std::string num(double v) { return fmt17(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }
inline std::string num(bool v) { return v ? "1" : "0"; }

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layouts

/// rep,i,col_0..col_{d-1}
inline std::string path_csv(const std::vector<Matrix>& paths) {
  const std::size_t d = paths.empty() ? 1 : paths.front().cols();
  std::vector<std::string> header{"rep", "i"};
  for (std::size_t j = 0; j < d; ++j) header.push_back("col_" + std::to_string(j));
  CsvWriter w(header);
  for (std::size_t r = 0; r < paths.size(); ++r)
    for (std::size_t i = 0; i < paths[r].rows(); ++i) {
      std::vector<std::string> f{num(r), num(i)};
      for (double v : paths[r].row(i)) f.push_back(num(v));
      w.row(f);
    }
  return w.str();
}

/// lag,estimate,se,used_in_fit
inline std::string decay_csv(const DecayReport& r) {
  CsvWriter w({"lag", "estimate", "se", "used_in_fit"});
  for (std::size_t j = 0; j < r.lags.size(); ++j)
    w.row({num(r.lags[j]), num(r.estimates[j]), num(r.ses[j]), num(bool(r.used_in_fit[j]))});
  return w.str();
}

/// Flat JSON object with keys in insertion order and %.17g numbers
/// (non-finite numbers become null).
class JsonObject {
 public:
  JsonObject& add(const std::string& key, double v) {
    return raw(key, std::isfinite(v) ? fmt17(v) : std::string("null"));
  }
  JsonObject& add(const std::string& key, std::uint64_t v) { return raw(key, std::to_string(v)); }
  JsonObject& add(const std::string& key, int v) { return raw(key, std::to_string(v)); }
  JsonObject& add(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
  JsonObject& add(const std::string& key, const std::string& v) { return raw(key, quote(v)); }
  JsonObject& add(const std::string& key, const char* v) { return raw(key, quote(v)); }
  JsonObject& raw(const std::string& key, const std::string& json_text) {
    fields_.emplace_back(key, json_text);
    return *this;
  }

  std::string str(int indent = 2) const {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    std::string out = "{\n";
    for (std::size_t j = 0; j < fields_.size(); ++j) {
      out += pad + quote(fields_[j].first) + ": " + fields_[j].second;
      out += j + 1 < fields_.size() ? ",\n" : "\n";
    }
    return out + "}\n";
  }

  static std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      if (c == '\n') {
        out += "\\n";
        continue;
      }
      out += c;
    }
    return out + "\"";
  }

 private:
  std::vector<std::pair<std::string, std::string>> fields_;
};

/// Fixed key order; absent fit values are null.
inline std::string decay_json(const DecayReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  JsonObject j;
  j.add("quantity", r.quantity)
      .add("alpha_hat", r.fit ? r.alpha_hat : nan)
      .add("slope", r.fit ? r.fit->slope : nan)
      .add("r_squared", r.fit ? r.fit->r_squared : nan)
      .add("p", r.p)
      .add("reps", r.reps)
      .add("seed", r.seed)
      .add("status", r.status);
  return j.str();
}

/// k,center_0..,rho_hat,rho_se
inline std::string cover_csv(const BracketingCover& cover, const Matrix& rows) {
  std::vector<std::string> header{"k"};
  for (std::size_t j = 0; j < cover.family.param_dim(); ++j)
    header.push_back("center_" + std::to_string(j));
  header.push_back("rho_hat");
  header.push_back("rho_se");
  CsvWriter w(header);
  for (std::size_t k = 0; k < cover.count; ++k) {
    std::vector<std::string> f{num(k)};
    for (double c : cover.center(k)) f.push_back(num(c));
    const auto r = bound_rho(cover, k, rows);
    f.push_back(num(r.value));
    f.push_back(num(r.std_error));
    w.row(f);
  }
  return w.str();
}

/// delta,n,Q,estimate,se,exceed_freq,pairs (one block per report)
inline std::string modulus_csv(const std::vector<ModulusReport>& reports) {
  CsvWriter w({"delta", "n", "Q", "estimate", "se", "exceed_freq", "pairs"});
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.deltas.size(); ++k)
      w.row({num(r.deltas[k]), num(r.n), num(r.Q), num(r.estimates[k]), num(r.ses[k]),
             num(r.exceed_freq[k]), num(r.pair_counts[k])});
  return w.str();
}

/// theta,theta_prime,rho_hat,tau,n,Q,moment,ratio (scalar parameters; vector
/// parameters are joined with ';')
inline std::string scaling_csv(const MomentScalingReport& r) {
  auto theta = [](const Theta& t) {
    std::string s;
    for (std::size_t j = 0; j < t.size(); ++j) s += (j ? ";" : "") + fmt17(t[j]);
    return s;
  };
  CsvWriter w({"theta", "theta_prime", "rho_hat", "tau", "n", "Q", "moment", "ratio"});
  for (const auto& row : r.rows)
    w.row({theta(row.a), theta(row.b), num(row.rho_hat), num(row.tau), num(row.n), num(r.Q),
           num(row.moment), num(row.ratio)});
  return w.str();
}

/// rep,theta_hat,statistic,scaled,drift,nu_true,remainder,centre
inline std::string quantilogram_csv(const std::vector<QuantilogramResult>& rs) {
  CsvWriter w({"rep", "theta_hat", "statistic", "scaled", "drift", "nu_true", "remainder", "centre"});
  for (std::size_t r = 0; r < rs.size(); ++r) {
    const auto& q = rs[r];
    w.row({num(r), num(q.theta_hat), num(q.statistic), num(q.scaled), num(q.drift),
           num(q.nu_true), num(q.remainder), num(q.centre)});
  }
  return w.str();
}

/// rep,theta_hat,residual_score,score_sum
inline std::string mestimate_csv(const std::vector<MEstimate>& rs) {
  CsvWriter w({"rep", "theta_hat", "residual_score", "score_sum"});
  for (std::size_t r = 0; r < rs.size(); ++r)
    w.row({num(r), num(rs[r].theta_hat), num(rs[r].residual_score), num(rs[r].score_sum)});
  return w.str();
}

/// rep,statistic,argmax
inline std::string dominance_csv(const std::vector<DominanceResult>& rs) {
  CsvWriter w({"rep", "statistic", "argmax"});
  for (std::size_t r = 0; r < rs.size(); ++r)
    w.row({num(r), num(rs[r].statistic), num(rs[r].argmax)});
  return w.str();
}

}  // namespace equiproc

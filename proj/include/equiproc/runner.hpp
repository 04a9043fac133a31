#pragma once

// Experiment dispatch, report persistence with a digest manifest, and the
// run-directory summary.

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "equiproc/config.hpp"
#include "equiproc/empproc.hpp"
#include "equiproc/estimators.hpp"
#include "equiproc/gmc.hpp"
#include "equiproc/parallel.hpp"
#include "equiproc/report_io.hpp"

namespace equiproc {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct ReportFile {
  std::string name;
  std::string sha256;
  std::size_t bytes = 0;
};

struct RunManifest {
  std::string kind;
  std::string config_hash;
  std::string version = kArtifactVersion;
  double wall_clock_seconds = 0.0;
  std::uint64_t master_seed = 0;
  /// Replication r draws from stream (master_seed, r) for r < task_count.
  std::size_t task_count = 0;
  std::vector<ReportFile> files;
};

namespace detail {

// Fixed keys for auxiliary randomness, independent of the replication streams.
inline StreamKey pilot_key(const ExperimentConfig& c) { return {c.seed ^ 0x91707u, 0}; }
inline StreamKey oracle_key(const ExperimentConfig& c) { return {c.seed ^ 0x0AC1Eu, 0}; }

inline DecayOptions decay_options(const ExperimentConfig& c) {
  return DecayOptions{c.lags, c.p, c.reps, c.seed, c.burn_in};
}

inline ModulusOptions modulus_options(const ExperimentConfig& c) {
  ModulusOptions o;
  o.deltas = c.deltas;
  o.n = c.n;
  o.Q = c.Q;
  o.gamma = c.gamma;
  o.eta = c.eta;
  o.reps = c.reps;
  o.seed = c.seed;
  o.burn_in = c.burn_in;
  o.pilot = {c.pilot_reps, pilot_key(c)};
  o.oracle_length = c.oracle_length;
  return o;
}

/// Runs fn(r) for r < reps in parallel and returns the results in index order.
template <class T, class Fn>
std::vector<T> replicate(std::size_t reps, Fn&& fn) {
  std::vector<T> out;
  out.reserve(reps);
  ordered_chunk_reduce(
      reps,
      [&](ChunkRange range) {
        std::vector<T> part;
        for (std::size_t r = range.begin; r < range.end; ++r) part.push_back(fn(r));
        return part;
      },
      [&](std::vector<T>&& part) {
        for (auto& v : part) out.push_back(std::move(v));
      });
  return out;
}

inline std::vector<double> column(const Matrix& m, std::size_t j) {
  std::vector<double> v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m.row(i)[j];
  return v;
}

/// Marginal alpha-quantile of the model: closed form for Gaussian AR1 and
/// iid laws, otherwise the type-1 quantile of the oracle path.
inline double marginal_quantile(const ExperimentConfig& c, double alpha) {
  const Law law = StationaryLaw{c.model, IdentityEmbedding{}, oracle_key(c), c.burn_in};
  if (const auto m = closed_form_marginal(law))
    return m->uniform ? alpha : m->mean + m->sd * normal_quantile(alpha);
  const Matrix path = simulate_path(c.model, oracle_key(c), c.oracle_length, c.burn_in);
  return type1_quantile(column(path, 0), alpha);
}

using Outputs = std::vector<std::pair<std::string, std::string>>;

inline Outputs run_kind(const ExperimentConfig& c) {
  const std::string& k = c.kind;
  Outputs out;
  auto decay = [&](const DecayReport& r) {
    out.emplace_back("decay.csv", decay_csv(r));
    out.emplace_back("decay.json", decay_json(r));
  };
  if (k == "simulate") {
    const auto paths = replicate<Matrix>(c.reps, [&](std::size_t r) {
      return simulate_embedded(c.model, c.embedding, StreamKey{c.seed, r}, c.n, c.burn_in);
    });
    out.emplace_back("path.csv", path_csv(paths));
  } else if (k == "gmc-decay") {
    decay(coupling_norm(c.model, c.embedding, decay_options(c)));
  } else if (k == "family-decay") {
    const auto grid = theta_grid(c.family, c.theta_points);
    decay(family_coupling_norm(c.model, c.embedding, c.family, grid, decay_options(c)));
    if (c.family.as<HuberFamily>()) {
      const auto d = family_domination_check(c.model, c.embedding, c.family, grid, decay_options(c));
      JsonObject j;
      j.add("checked", d.checked).add("violations", d.violations).add("worst_margin", d.worst_margin);
      out.emplace_back("domination.json", j.str());
    }
  } else if (k == "bracket-decay") {
    const auto cover = build_cover(c.family, c.cover_delta, c.cover);
    decay(bracket_coupling_norm(c.model, c.embedding, cover, decay_options(c)));
    const Law law = StationaryLaw{c.model, c.embedding, pilot_key(c), c.burn_in};
    out.emplace_back("cover.csv",
                     cover_csv(cover, sample_law(law, c.family.input_dim(), c.pilot_reps, pilot_key(c))));
  } else if (k == "indicator-decay") {
    const auto grid = theta_grid(c.indicator.lambda, c.lambda_points);
    decay(indicator_coupling(c.model, c.embedding, c.indicator, grid, decay_options(c)));
  } else if (k == "modulus") {
    const auto r = modulus_experiment(c.family, c.model, c.embedding,
                                      theta_grid(c.family, c.theta_points), modulus_options(c));
    out.emplace_back("modulus.csv", modulus_csv({r}));
  } else if (k == "probe") {
    const auto t = equicontinuity_probe(c.family, c.model, c.embedding,
                                        theta_grid(c.family, c.theta_points), c.ns,
                                        modulus_options(c));
    out.emplace_back("probe.csv", modulus_csv(t));
  } else if (k == "moment-scaling") {
    const Law law = StationaryLaw{c.model, c.embedding, pilot_key(c), c.burn_in};
    std::vector<ThetaPair> pairs;
    for (double t : c.rho_targets) pairs.push_back(pair_at_rho(c.family, law, c.pair_centre, t));
    MomentScalingOptions o;
    o.ns = c.ns;
    o.Q = c.Q;
    o.gamma = c.gamma;
    o.reps = c.reps;
    o.seed = c.seed;
    o.burn_in = c.burn_in;
    o.pilot = {c.pilot_reps, pilot_key(c)};
    o.oracle_length = c.oracle_length;
    const auto r = moment_scaling(c.family, c.model, c.embedding, pairs, o);
    out.emplace_back("scaling.csv", scaling_csv(r));
    JsonObject j;
    j.add("Q", r.Q).add("gamma", r.gamma).add("max_ratio", r.max_ratio);
    j.add("min_nonzero_ratio", r.min_nonzero_ratio);
    for (auto n : c.ns) j.add("max_ratio_n" + std::to_string(n), r.max_ratio_at(n));
    out.emplace_back("scaling.json", j.str());
  } else if (k == "quantilogram") {
    const double alpha = c.family.as<QuantilogramFamily>()->alpha;
    const double theta_alpha = marginal_quantile(c, alpha);
    MeanOracle oracle(c.model, LagPair{c.h}, c.family, c.oracle_length, oracle_key(c), c.burn_in);
    auto mean = [&](double t) { return oracle(Theta{t}); };
    const auto rs = replicate<QuantilogramResult>(c.reps, [&](std::size_t r) {
      const Matrix path = simulate_path(c.model, StreamKey{c.seed, r}, c.n, c.burn_in);
      return sample_quantilogram(column(path, 0), alpha, c.h, theta_alpha, mean);
    });
    out.emplace_back("quantilogram.csv", quantilogram_csv(rs));
    MomentAccumulator scaled;
    std::vector<double> rem;
    double gap = 0.0;
    for (const auto& q : rs) {
      scaled.add(q.scaled);
      rem.push_back(std::abs(q.remainder));
      gap = std::max(gap, std::abs(q.decomposition_gap()));
    }
    JsonObject j;
    j.add("alpha", alpha).add("h", c.h).add("n", c.n).add("theta_alpha", theta_alpha);
    j.add("mean_scaled", scaled.estimate().mean).add("se_scaled", scaled.estimate().se);
    j.add("remainder_abs_p95", empirical_percentile(rem, 0.95));
    j.add("max_decomposition_gap", gap);
    out.emplace_back("quantilogram.json", j.str());
  } else if (k == "m-estimate") {
    const MEstimator v = c.estimator == "median" ? MEstimator::median : MEstimator::huber;
    const auto rs = replicate<MEstimate>(c.reps, [&](std::size_t r) {
      const auto x = c.data == "laplace"
                         ? draw_laplace(StreamKey{c.seed, r}, c.n, c.location, c.scale)
                         : column(simulate_path(c.model, StreamKey{c.seed, r}, c.n, c.burn_in), 0);
      return m_estimate(v, x, c.huber_delta);
    });
    out.emplace_back("mestimate.csv", mestimate_csv(rs));
    MomentAccumulator acc;
    double worst = 0.0;
    for (const auto& e : rs) {
      acc.add(e.theta_hat);
      worst = std::max(worst, e.score_sum);
    }
    JsonObject j;
    j.add("estimator", to_string(v)).add("n", c.n);
    j.add("mean_theta_hat", acc.estimate().mean).add("se_theta_hat", acc.estimate().se);
    j.add("max_score_sum", worst);
    out.emplace_back("mestimate.json", j.str());
  } else if (k == "dominance") {
    const auto& box = c.family.theta_space();
    const auto grid = linspace(box.lo[0], box.hi[0], c.theta_points);
    const auto rs = replicate<DominanceResult>(c.reps, [&](std::size_t r) {
      auto x1 = column(simulate_path(c.model, StreamKey{c.seed, 2 * r}, c.n, c.burn_in), 0);
      const auto x2 = column(simulate_path(c.model, StreamKey{c.seed, 2 * r + 1}, c.n, c.burn_in), 0);
      for (double& v : x1) v += c.shift;
      return dominance_stat(x1, x2, grid);
    });
    out.emplace_back("dominance.csv", dominance_csv(rs));
    MomentAccumulator acc;
    for (const auto& d : rs) acc.add(d.statistic);
    JsonObject j;
    j.add("n", c.n).add("mean_statistic", acc.estimate().mean).add("se_statistic", acc.estimate().se);
    out.emplace_back("dominance.json", j.str());
  } else if (k == "bracketing-integral") {
    const auto b = c.count ? bracketing_integral_power(c.count->coef, c.count->exponent, c.gamma, c.Q)
                           : bracketing_integral(c.family, c.gamma, c.Q, c.cover);
    JsonObject j;
    j.add("gamma", c.gamma).add("Q", c.Q).add("divergent", b.divergent);
    j.add("value", b.divergent ? std::numeric_limits<double>::infinity() : b.value);
    j.add("error_estimate", b.error_estimate).add("integrand_exponent", b.exponent);
    out.emplace_back("bracketing.json", j.str());
  }
  return out;
}

inline std::size_t task_count(const ExperimentConfig& c) {
  if (c.kind == "bracketing-integral") return 0;
  if (c.kind == "dominance") return 2 * c.reps;
  return c.reps;
}

inline std::string manifest_json(const RunManifest& m) {
  std::string files = "[";
  for (std::size_t j = 0; j < m.files.size(); ++j) {
    const auto& f = m.files[j];
    files += j ? ",\n    " : "\n    ";
    files += "{\"name\": " + JsonObject::quote(f.name) + ", \"sha256\": " + JsonObject::quote(f.sha256) +
             ", \"bytes\": " + std::to_string(f.bytes) + "}";
  }
  files += "\n  ]";
  JsonObject j;
  j.add("kind", m.kind).add("config_hash", m.config_hash).add("version", m.version);
  j.add("wall_clock_seconds", m.wall_clock_seconds).add("master_seed", m.master_seed);
  j.add("task_count", m.task_count).raw("files", files);
  return j.str();
}

}  // namespace detail

/// Validates, dispatches, writes reports plus config.json and manifest.json
/// into c.out. Report bytes depend only on the config.
inline RunManifest run(const ExperimentConfig& c) {
  validate(c);
  const auto t0 = std::chrono::steady_clock::now();
  auto outputs = detail::run_kind(c);
  const std::string cfg = serialize(c);
  outputs.emplace_back("config.json", cfg);
  namespace fs = std::filesystem;
  fs::create_directories(c.out);
  RunManifest m;
  m.kind = c.kind;
  m.config_hash = sha256_hex(cfg);
  m.master_seed = c.seed;
  m.task_count = detail::task_count(c);
  for (const auto& [name, text] : outputs) {
    write_file(fs::path(c.out) / name, text);
    m.files.push_back({name, sha256_hex(text), text.size()});
  }
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(fs::path(c.out) / "manifest.json", detail::manifest_json(m));
  return m;
}

// ---------------------------------------------------------------------------
// Summary

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(std::move(f));
  }
  return rows;
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline double json_number(const nlohmann::ordered_json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

}  // namespace detail

/// Text table of key statistics per report in a run directory. Also writes
/// plot data (x,y,se) for decay and modulus curves into the directory.
/// Throws std::runtime_error on a missing or corrupt manifest.
inline std::string summarize(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using json = nlohmann::ordered_json;
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw std::runtime_error("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(mpath));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("corrupt manifest " + mpath.string() + ": " + e.what());
  }
  if (!manifest.contains("files") || !manifest["files"].is_array() || !manifest.contains("kind"))
    throw std::runtime_error("corrupt manifest " + mpath.string() + ": missing kind or files");

  std::ostringstream os;
  os << "run " << manifest["kind"].get<std::string>() << "  seed "
     << manifest.value("master_seed", std::uint64_t{0}) << "\n";
  for (const auto& f : manifest["files"]) {
    const std::string name = f.value("name", "");
    const fs::path p = dir / name;
    const std::string text = read_file(p);
    if (sha256_hex(text) != f.value("sha256", ""))
      throw std::runtime_error("digest mismatch for " + p.string());
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json" && name != "config.json") {
      const json j = json::parse(text);
      if (name == "decay.json") {
        os << "  " << j.value("quantity", "") << "  alpha_hat ≈ "
           << detail::fixed(detail::json_number(j, "alpha_hat")) << "  slope "
           << detail::fixed(detail::json_number(j, "slope")) << "  r^2 "
           << detail::fixed(detail::json_number(j, "r_squared")) << "  (" << j.value("status", "")
           << ")\n";
      } else {
        os << "  " << name << ":";
        for (auto it = j.begin(); it != j.end(); ++it) {
          os << "  " << it.key() << " ";
          if (it->is_number_float()) os << detail::fixed(it->get<double>());
          else if (it->is_null()) os << "n/a";
          else os << (it->is_string() ? it->get<std::string>() : it->dump());
        }
        os << "\n";
      }
    }
    if (name == "decay.csv") {
      const auto rows = detail::read_csv(text);
      CsvWriter plot({"x", "y", "se"});
      for (std::size_t i = 1; i < rows.size(); ++i) plot.row({rows[i][0], rows[i][1], rows[i][2]});
      write_file(dir / "decay_plot.csv", plot.str());
      os << "  decay curve: " << rows.size() - 1 << " lags -> decay_plot.csv\n";
    }
    if (name == "modulus.csv" || name == "probe.csv") {
      const auto rows = detail::read_csv(text);
      // Probe tables hold one curve per n.
      std::map<std::string, CsvWriter> plots;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        auto it = plots.try_emplace(r[1], std::vector<std::string>{"x", "y", "se"}).first;
        it->second.row({r[0], r[3], r[4]});
        os << "  n " << r[1] << "  delta " << detail::fixed(std::stod(r[0]), 3) << "  modulus "
           << detail::fixed(std::stod(r[3]), 6) << " ± " << detail::fixed(std::stod(r[4]), 6)
           << "  P(sup > eta) " << detail::fixed(std::stod(r[5]), 3) << "  pairs " << r[6] << "\n";
      }
      const std::string stem = name.substr(0, name.size() - 4);
      for (const auto& [n, w] : plots) write_file(dir / (stem + "_plot_n" + n + ".csv"), w.str());
    }
    if (name == "scaling.csv") {
      const auto rows = detail::read_csv(text);
      for (std::size_t i = 1; i < rows.size(); ++i)
        os << "  rho " << detail::fixed(std::stod(rows[i][2])) << "  n " << rows[i][4] << "  ratio "
           << detail::fixed(std::stod(rows[i][7])) << "\n";
    }
  }
  return os.str();
}

}  // namespace equiproc

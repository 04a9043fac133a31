#pragma once

// Experiment configuration: strict JSON parsing, aggregated validation and
// a lossless serializer.

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "equiproc/embedding.hpp"
#include "equiproc/empproc.hpp"
#include "equiproc/errors.hpp"
#include "equiproc/families.hpp"
#include "equiproc/gmc.hpp"
#include "equiproc/models.hpp"

namespace equiproc {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{
      "simulate", "gmc-decay",      "family-decay", "bracket-decay", "indicator-decay",
      "modulus",  "probe",          "moment-scaling", "quantilogram", "m-estimate",
      "dominance", "bracketing-integral"};
  return k;
}

struct PowerCount {
  double coef = 1.0;
  double exponent = 2.0;
  bool operator==(const PowerCount&) const = default;
};

struct ExperimentConfig {
  std::string kind = "gmc-decay";
  ModelSpec model = ModelSpec::ar1(0.5);
  EmbeddingSpec embedding = IdentityEmbedding{};
  FunctionFamily family = FunctionFamily::scalar(QuantilogramFamily{0.1}, -3.0, 3.0);
  std::uint64_t seed = 1;
  std::size_t reps = 1000;
  std::size_t burn_in = kDefaultBurnIn;
  std::string out = "out";

  // decay
  std::vector<std::size_t> lags = lag_range(1, 20);
  double p = 2.0;
  std::size_t theta_points = 128;
  double cover_delta = 0.4;
  CoverInfo cover{};
  IndicatorCouplingSpec indicator{};
  std::size_t lambda_points = 32;

  // modulus, probe, moment scaling
  std::vector<double> deltas{0.05, 0.1, 0.2, 0.4};
  double eta = 0.5;
  std::size_t n = 400;
  std::vector<std::size_t> ns{200, 400, 800};
  int Q = 4;
  double gamma = 1.0;
  std::size_t pilot_reps = 100000;
  std::size_t oracle_length = 1000000;
  std::vector<double> rho_targets{0.05, 0.1, 0.2, 0.4};
  double pair_centre = 0.0;

  // estimators
  std::size_t h = 1;
  std::string estimator = "huber";
  double huber_delta = 1.345;
  std::string data = "laplace";
  double location = 0.0;
  double scale = 1.0;
  double shift = 0.0;

  // bracketing integral; the family envelope when absent
  std::optional<PowerCount> count;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Defaults for one kind: families that read lag pairs get a lag-pair
/// embedding, dominance gets its paired family, and so on.
inline ExperimentConfig default_config(const std::string& kind) {
  ExperimentConfig c;
  c.kind = kind;
  if (kind == "family-decay" || kind == "bracket-decay" || kind == "modulus" || kind == "probe" ||
      kind == "moment-scaling")
    c.embedding = LagPair{1};
  if (kind == "bracket-decay") c.family = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2.0, 2.0);
  if (kind == "moment-scaling") {
    c.Q = 2;
    c.ns = {100, 400};
  }
  if (kind == "dominance") c.family = FunctionFamily::scalar(DominancePairFamily{}, -3.0, 3.0);
  if (kind == "bracketing-integral") c.count = PowerCount{};
  return c;
}

// ---------------------------------------------------------------------------
// JSON <-> spec types

namespace detail {

using json = nlohmann::json;

/// Reads keys from one object, collecting errors and rejecting unknown keys.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where, std::vector<std::string>& errs)
      : j_(j), where_(std::move(where)), errs_(errs) {
    if (!j_.is_object()) errs_.push_back(where_ + " must be a JSON object");
  }
  ~ObjectReader() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) errs_.push_back("unknown key \"" + it.key() + "\" in " + where_);
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.is_object() && j_.contains(key);
  }

  template <class T>
  void get(const std::string& key, T& target) {
    if (!has(key)) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!j_.at(key).is_number()) throw std::invalid_argument("not a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        check_integer<T>(j_.at(key));
      } else if constexpr (std::is_same_v<T, std::vector<double>>) {
        if (!j_.at(key).is_array()) throw std::invalid_argument("not an array");
        for (const auto& v : j_.at(key))
          if (!v.is_number()) throw std::invalid_argument("array element is not a number");
      } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
        if (!j_.at(key).is_array()) throw std::invalid_argument("not an array");
        for (const auto& v : j_.at(key)) check_integer<std::size_t>(v);
      }
      target = j_.at(key).get<T>();
    } catch (const std::exception& e) {
      errs_.push_back(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  const std::string& where() const { return where_; }

 private:
  template <class T>
  static void check_integer(const json& v) {
    if (!v.is_number_integer()) throw std::invalid_argument("not an integer");
    if (std::is_unsigned_v<T> && !v.is_number_unsigned()) throw std::invalid_argument("must be >= 0");
  }

  const json& j_;
  std::string where_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

inline std::string innovation_name(const InnovationSpec& s) {
  switch (s.kind) {
    case InnovationKind::standard_normal: return "normal";
    case InnovationKind::uniform01: return "uniform";
    case InnovationKind::student_t: return "student-t";
    case InnovationKind::rademacher: return "rademacher";
  }
  return "normal";
}

inline json to_json(const InnovationSpec& s) {
  json j{{"type", innovation_name(s)}};
  if (s.kind == InnovationKind::student_t) j["dof"] = s.dof;
  return j;
}

inline InnovationSpec innovation_from_json(const json& j, std::vector<std::string>& errs) {
  ObjectReader r(j, "model.innovation", errs);
  std::string type = "normal";
  r.get("type", type);
  InnovationSpec s;
  double dof = 5.0;
  r.get("dof", dof);
  if (type == "normal") s = InnovationSpec::normal();
  else if (type == "uniform") s = InnovationSpec::uniform();
  else if (type == "rademacher") s = InnovationSpec::rademacher();
  else if (type == "student-t") s = InnovationSpec::student(dof);
  else errs.push_back("unknown innovation type \"" + type + "\"");
  return s;
}

inline json to_json(const ModelSpec& m) {
  json j = std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ar1>) return {{"type", "ar1"}, {"phi", v.phi}, {"sigma", v.sigma}};
        else if constexpr (std::is_same_v<T, Arch1>)
          return {{"type", "arch1"}, {"omega", v.omega}, {"a1", v.a1}};
        else if constexpr (std::is_same_v<T, Garch11>)
          return {{"type", "garch11"}, {"omega", v.omega}, {"a", v.a}, {"b", v.b}};
        else if constexpr (std::is_same_v<T, Qar1>)
          return {{"type", "qar1"}, {"a0", v.a0}, {"a1", v.a1}, {"b0", v.b0}, {"b1", v.b1}};
        else return {{"type", "rcar1"}, {"phi", v.phi}, {"tau", v.tau}};
      },
      m.variant);
  j["innovation"] = to_json(m.innovation);
  j["q"] = m.q;
  return j;
}

inline ModelSpec model_from_json(const json& j, std::vector<std::string>& errs) {
  ObjectReader r(j, "model", errs);
  std::string type = "ar1";
  r.get("type", type);
  ModelSpec m;
  if (type == "ar1") {
    Ar1 v;
    r.get("phi", v.phi);
    r.get("sigma", v.sigma);
    m.variant = v;
  } else if (type == "arch1") {
    Arch1 v;
    r.get("omega", v.omega);
    r.get("a1", v.a1);
    m.variant = v;
  } else if (type == "garch11") {
    Garch11 v;
    r.get("omega", v.omega);
    r.get("a", v.a);
    r.get("b", v.b);
    m.variant = v;
  } else if (type == "qar1") {
    Qar1 v;
    r.get("a0", v.a0);
    r.get("a1", v.a1);
    r.get("b0", v.b0);
    r.get("b1", v.b1);
    m.variant = v;
    m.innovation = InnovationSpec::uniform();
  } else if (type == "rcar1") {
    Rcar1 v;
    r.get("phi", v.phi);
    r.get("tau", v.tau);
    m.variant = v;
  } else {
    errs.push_back("unknown model type \"" + type + "\"");
  }
  if (const json* inn = r.child("innovation")) m.innovation = innovation_from_json(*inn, errs);
  r.get("q", m.q);
  return m;
}

inline json to_json(const EmbeddingSpec& e) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, IdentityEmbedding>) return {{"type", "identity"}};
        else if constexpr (std::is_same_v<T, LagPair>) return {{"type", "lag-pair"}, {"h", v.h}};
        else if constexpr (std::is_same_v<T, BivariateCopy>) return {{"type", "bivariate-copy"}};
        else if constexpr (std::is_same_v<T, CensoredTriple>)
          return {{"type", "censored-triple"}, {"beta0", v.beta0},           {"beta1", v.beta1},
                  {"error_scale", v.error_scale}, {"censor_loc", v.censor_loc},
                  {"censor_scale", v.censor_scale}};
        else
          return {{"type", "regression-augment"}, {"eta1", v.eta1}, {"eta2", v.eta2},
                  {"covariate_scale", v.covariate_scale}};
      },
      e);
}

inline EmbeddingSpec embedding_from_json(const json& j, std::vector<std::string>& errs) {
  ObjectReader r(j, "embedding", errs);
  std::string type = "identity";
  r.get("type", type);
  if (type == "identity") return IdentityEmbedding{};
  if (type == "lag-pair") {
    LagPair v;
    r.get("h", v.h);
    return v;
  }
  if (type == "bivariate-copy") return BivariateCopy{};
  if (type == "censored-triple") {
    CensoredTriple v;
    r.get("beta0", v.beta0);
    r.get("beta1", v.beta1);
    r.get("error_scale", v.error_scale);
    r.get("censor_loc", v.censor_loc);
    r.get("censor_scale", v.censor_scale);
    return v;
  }
  if (type == "regression-augment") {
    RegressionAugment v;
    r.get("eta1", v.eta1);
    r.get("eta2", v.eta2);
    r.get("covariate_scale", v.covariate_scale);
    return v;
  }
  errs.push_back("unknown embedding type \"" + type + "\"");
  return IdentityEmbedding{};
}

inline json to_json(const FunctionFamily& f) {
  json j{{"type", f.name()}};
  if (const auto* h = f.as<HuberFamily>()) j["delta"] = h->delta;
  if (const auto* q = f.as<QuantilogramFamily>()) j["alpha"] = q->alpha;
  if (const auto* c = f.as<CensoredQrFamily>()) {
    j["covariate_bound"] = c->covariate_bound;
    j["covariate_dim"] = c->covariate_dim;
  }
  j["theta_lo"] = f.theta_space().lo;
  j["theta_hi"] = f.theta_space().hi;
  return j;
}

inline FunctionFamily family_from_json(const json& j, std::vector<std::string>& errs) {
  ObjectReader r(j, "family", errs);
  std::string type = "quantilogram";
  r.get("type", type);
  FamilyVariant kind;
  if (type == "indicator") kind = IndicatorFamily{};
  else if (type == "sign") kind = SignFamily{};
  else if (type == "huber") {
    HuberFamily v;
    r.get("delta", v.delta);
    kind = v;
  } else if (type == "quantilogram") {
    QuantilogramFamily v;
    r.get("alpha", v.alpha);
    kind = v;
  } else if (type == "dominance-pair") kind = DominancePairFamily{};
  else if (type == "dominance-residual") kind = DominanceResidualFamily{};
  else if (type == "censored-qr") {
    CensoredQrFamily v;
    r.get("covariate_bound", v.covariate_bound);
    r.get("covariate_dim", v.covariate_dim);
    kind = v;
  } else {
    errs.push_back("unknown family type \"" + type + "\"");
    return {};
  }
  ParameterBox box{{-3.0}, {3.0}};
  r.get("theta_lo", box.lo);
  r.get("theta_hi", box.hi);
  try {
    return FunctionFamily(kind, box);
  } catch (const ValidationError& e) {
    errs.push_back(std::string("family: ") + e.what());
    return {};
  }
}

inline json to_json(const IndicatorCouplingSpec& s) {
  json v = json::array();
  for (const auto& c : s.v) {
    if (c.column) v.push_back({{"column", *c.column}});
    else v.push_back({{"constant", c.constant}});
  }
  return {{"u", s.u},
          {"v", v},
          {"w", s.w},
          {"lambda_lo", s.lambda.lo},
          {"lambda_hi", s.lambda.hi},
          {"strict", s.strict},
          {"case", to_string(s.which)},
          {"g", to_string(s.g)}};
}

inline IndicatorCouplingSpec indicator_from_json(const json& j, std::vector<std::string>& errs) {
  ObjectReader r(j, "indicator", errs);
  IndicatorCouplingSpec s;
  r.get("u", s.u);
  if (const json* v = r.child("v")) {
    if (!v->is_array()) {
      errs.push_back("indicator.v must be an array");
    } else {
      s.v.clear();
      for (std::size_t k = 0; k < v->size(); ++k) {
        ObjectReader c((*v)[k], "indicator.v[" + std::to_string(k) + "]", errs);
        VComponent comp;
        std::size_t col = 0;
        if (c.has("column")) {
          c.get("column", col);
          comp.column = col;
        }
        c.get("constant", comp.constant);
        s.v.push_back(comp);
      }
    }
  }
  r.get("w", s.w);
  r.get("lambda_lo", s.lambda.lo);
  r.get("lambda_hi", s.lambda.hi);
  r.get("strict", s.strict);
  std::string which = to_string(s.which), g = to_string(s.g);
  r.get("case", which);
  r.get("g", g);
  if (which == to_string(CouplingCase::single)) s.which = CouplingCase::single;
  else if (which == to_string(CouplingCase::function_of_w)) s.which = CouplingCase::function_of_w;
  else if (which == to_string(CouplingCase::conditional_independence))
    s.which = CouplingCase::conditional_independence;
  else errs.push_back("unknown indicator case \"" + which + "\"");
  if (g == "identity") s.g = GKind::identity;
  else if (g == "prepend-one") s.g = GKind::prepend_one;
  else errs.push_back("unknown indicator g \"" + g + "\"");
  return s;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using detail::to_json;
  nlohmann::json j;
  j["kind"] = c.kind;
  j["model"] = to_json(c.model);
  j["embedding"] = to_json(c.embedding);
  j["family"] = to_json(c.family);
  j["seed"] = c.seed;
  j["reps"] = c.reps;
  j["burn_in"] = c.burn_in;
  j["out"] = c.out;
  j["lags"] = c.lags;
  j["p"] = c.p;
  j["theta_points"] = c.theta_points;
  j["cover_delta"] = c.cover_delta;
  j["cover"] = {{"lipschitz", c.cover.lipschitz},
                {"covariate_abs_mean", c.cover.covariate_abs_mean},
                {"cap", c.cover.cap}};
  j["indicator"] = to_json(c.indicator);
  j["lambda_points"] = c.lambda_points;
  j["deltas"] = c.deltas;
  j["eta"] = c.eta;
  j["n"] = c.n;
  j["ns"] = c.ns;
  j["Q"] = c.Q;
  j["gamma"] = c.gamma;
  j["pilot_reps"] = c.pilot_reps;
  j["oracle_length"] = c.oracle_length;
  j["rho_targets"] = c.rho_targets;
  j["pair_centre"] = c.pair_centre;
  j["h"] = c.h;
  j["estimator"] = c.estimator;
  j["huber_delta"] = c.huber_delta;
  j["data"] = c.data;
  j["location"] = c.location;
  j["scale"] = c.scale;
  j["shift"] = c.shift;
  if (c.count) j["count"] = {{"coef", c.count->coef}, {"exponent", c.count->exponent}};
  return j;
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Aggregated validation of every field the chosen kind uses.
inline std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> e;
  auto check = [&](bool ok, const std::string& msg) {
    if (!ok) e.push_back(msg);
  };
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const AggregateValidationError& x) {
      for (const auto& m : x.messages()) e.push_back(m);
    } catch (const ValidationError& x) {
      e.push_back(x.what());
    }
  };
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) {
    e.push_back("unknown experiment kind \"" + c.kind + "\"");
    return e;
  }
  const std::string& k = c.kind;
  check(c.reps >= 1, "reps must be >= 1");
  check(!c.out.empty(), "out must be a nonempty directory path");
  guard([&] { validate_model(c.model); });
  guard([&] { validate_embedding(c.embedding); });

  const bool decay = k == "gmc-decay" || k == "family-decay" || k == "bracket-decay" ||
                     k == "indicator-decay";
  const bool uses_family = k == "family-decay" || k == "bracket-decay" || k == "modulus" ||
                           k == "probe" || k == "moment-scaling";
  if (decay) {
    check(c.reps >= kMinDecayReps, "decay reps must be >= " + std::to_string(kMinDecayReps));
    check(!c.lags.empty(), "lags must be nonempty");
    check(std::is_sorted(c.lags.begin(), c.lags.end()) &&
              std::adjacent_find(c.lags.begin(), c.lags.end()) == c.lags.end(),
          "lags must be strictly increasing");
    check(std::none_of(c.lags.begin(), c.lags.end(), [](auto l) { return l == 0; }),
          "lags must be >= 1");
    check(c.p >= 1.0, "p must be >= 1");
  }
  if (uses_family) {
    check(embedding_dimension(c.embedding) == c.family.input_dim(),
          "embedding " + embedding_name(c.embedding) + " has dimension " +
              std::to_string(embedding_dimension(c.embedding)) + " but family " +
              c.family.name() + " expects " + std::to_string(c.family.input_dim()));
    check(c.theta_points >= 1, "theta_points must be >= 1");
  }
  if (k == "bracket-decay") {
    check(c.cover_delta > 0.0, "cover_delta must be > 0");
    check(c.cover.lipschitz > 0.0, "cover.lipschitz must be > 0");
    check(c.cover.covariate_abs_mean > 0.0, "cover.covariate_abs_mean must be > 0");
  }
  if (k == "indicator-decay") {
    guard([&] { validate_indicator_spec(c.indicator, c.embedding); });
    check(c.lambda_points >= 1, "lambda_points must be >= 1");
  }
  if (k == "modulus" || k == "probe" || k == "moment-scaling" || k == "bracketing-integral") {
    check(c.Q >= 2 && c.Q % 2 == 0, "Q must be an even integer >= 2");
    check(c.gamma > 0.0, "gamma must be > 0");
  }
  if (k == "modulus" || k == "probe") {
    check(c.reps >= 2, "modulus reps must be >= 2");
    check(!c.deltas.empty(), "deltas must be nonempty");
    check(std::all_of(c.deltas.begin(), c.deltas.end(), [](double d) { return d > 0.0; }),
          "deltas must be > 0");
    check(c.eta > 0.0, "eta must be > 0");
    check(c.pilot_reps >= 100, "pilot_reps must be >= 100");
    check(c.oracle_length >= kMinOracleLength, "oracle_length must be >= 100000");
    if (c.Q >= 2 && c.Q % 2 == 0 && c.gamma > 0.0)
      guard([&] { require_finite_bracketing_integral(c.family, c.gamma, c.Q); });
  }
  if (k == "modulus" || k == "simulate" || k == "quantilogram" || k == "m-estimate" ||
      k == "dominance")
    check(c.n >= 1, "n must be >= 1");
  if (k == "probe" || k == "moment-scaling") {
    check(!c.ns.empty(), "ns must be nonempty");
    check(std::none_of(c.ns.begin(), c.ns.end(), [](auto v) { return v == 0; }), "ns must be >= 1");
  }
  if (k == "moment-scaling") {
    check(c.reps >= 2, "moment-scaling reps must be >= 2");
    check(!c.rho_targets.empty(), "rho_targets must be nonempty");
    check(std::all_of(c.rho_targets.begin(), c.rho_targets.end(), [](double r) { return r > 0.0; }),
          "rho_targets must be > 0 (pairs need rho_hat > 0)");
    check(c.family.param_dim() == 1, "moment-scaling needs a scalar-parameter family");
    check(c.pilot_reps >= 100, "pilot_reps must be >= 100");
    check(c.oracle_length >= kMinOracleLength, "oracle_length must be >= 100000");
  }
  if (k == "quantilogram") {
    check(c.family.as<QuantilogramFamily>() != nullptr, "quantilogram kind needs a quantilogram family");
    check(c.h >= 1, "h must be >= 1");
    check(c.n > c.h, "n must exceed h");
    check(c.oracle_length >= kMinOracleLength, "oracle_length must be >= 100000");
  }
  if (k == "m-estimate") {
    check(c.estimator == "median" || c.estimator == "huber", "estimator must be median or huber");
    check(c.estimator != "huber" || c.huber_delta > 0.0, "huber_delta must be > 0");
    check(c.data == "laplace" || c.data == "model", "data must be laplace or model");
    check(c.scale > 0.0, "scale must be > 0");
  }
  if (k == "dominance") {
    check(c.family.as<DominancePairFamily>() != nullptr, "dominance kind needs a dominance-pair family");
    check(c.theta_points >= 1, "theta_points must be >= 1");
  }
  if (k == "bracketing-integral") {
    if (c.count) {
      check(c.count->coef > 0.0, "count.coef must be > 0");
      check(c.count->exponent >= 0.0, "count.exponent must be >= 0");
    }
  }
  return e;
}

inline void validate(const ExperimentConfig& c) {
  auto errs = validation_errors(c);
  if (!errs.empty()) throw AggregateValidationError(std::move(errs));
}

/// Reads a config without range validation; syntax, type and unknown-key
/// problems are appended to `errs`. `has_kind` reports whether "kind" was set.
/// Absent keys take default_config() of the config's kind, or of
/// `default_kind` when the config names none.
inline ExperimentConfig read_config(const std::string& text, std::vector<std::string>& errs,
                                    bool* has_kind = nullptr,
                                    const std::string& default_kind = "gmc-decay") {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    errs.push_back(std::string("config is not valid JSON: ") + e.what());
    return {};
  }
  std::string kind = default_kind;
  if (j.is_object() && j.contains("kind") && j["kind"].is_string()) kind = j["kind"].get<std::string>();
  ExperimentConfig c = default_config(kind);
  {
    detail::ObjectReader r(j, "config", errs);
    if (has_kind) *has_kind = r.has("kind");
    r.get("kind", c.kind);
    if (const json* m = r.child("model")) c.model = detail::model_from_json(*m, errs);
    if (const json* e = r.child("embedding")) c.embedding = detail::embedding_from_json(*e, errs);
    if (const json* f = r.child("family")) c.family = detail::family_from_json(*f, errs);
    r.get("seed", c.seed);
    r.get("reps", c.reps);
    r.get("burn_in", c.burn_in);
    r.get("out", c.out);
    r.get("lags", c.lags);
    r.get("p", c.p);
    r.get("theta_points", c.theta_points);
    r.get("cover_delta", c.cover_delta);
    if (const json* cv = r.child("cover")) {
      detail::ObjectReader cr(*cv, "cover", errs);
      cr.get("lipschitz", c.cover.lipschitz);
      cr.get("covariate_abs_mean", c.cover.covariate_abs_mean);
      cr.get("cap", c.cover.cap);
    }
    if (const json* ind = r.child("indicator")) c.indicator = detail::indicator_from_json(*ind, errs);
    r.get("lambda_points", c.lambda_points);
    r.get("deltas", c.deltas);
    r.get("eta", c.eta);
    r.get("n", c.n);
    r.get("ns", c.ns);
    r.get("Q", c.Q);
    r.get("gamma", c.gamma);
    r.get("pilot_reps", c.pilot_reps);
    r.get("oracle_length", c.oracle_length);
    r.get("rho_targets", c.rho_targets);
    r.get("pair_centre", c.pair_centre);
    r.get("h", c.h);
    r.get("estimator", c.estimator);
    r.get("huber_delta", c.huber_delta);
    r.get("data", c.data);
    r.get("location", c.location);
    r.get("scale", c.scale);
    r.get("shift", c.shift);
    if (const json* cnt = r.child("count")) {
      detail::ObjectReader cr(*cnt, "count", errs);
      PowerCount pc;
      cr.get("coef", pc.coef);
      cr.get("exponent", pc.exponent);
      c.count = pc;
    }
  }
  return c;
}

/// Parses and validates; every problem is reported together in one
/// AggregateValidationError.
inline ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errs;
  ExperimentConfig c = read_config(text, errs);
  for (auto& m : validation_errors(c)) errs.push_back(std::move(m));
  if (!errs.empty()) throw AggregateValidationError(std::move(errs));
  return c;
}

}  // namespace equiproc

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "equiproc/runner.hpp"

using namespace equiproc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("equiproc_runner_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* cli() {
  const char* p = std::getenv("EQUIPROC_CLI");
  return p ? p : "equiproc";
}

int sh(const std::string& args, std::string* out = nullptr) {
  const fs::path log = fs::temp_directory_path() / ("equiproc_cli_" + std::to_string(::getpid()));
  const int status = std::system((std::string(cli()) + " " + args + " >" + log.string() + " 2>&1").c_str());
  if (out) *out = read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> messages(const std::string& text) {
  try {
    parse_config(text);
  } catch (const AggregateValidationError& e) {
    return e.messages();
  }
  return {};
}

bool mentions(const std::vector<std::string>& ms, const std::string& needle) {
  for (const auto& m : ms)
    if (m.find(needle) != std::string::npos) return true;
  return false;
}

std::string joined(const std::vector<std::string>& ms) {
  std::string s;
  for (const auto& m : ms) s += m + " | ";
  return s;
}

/// Every report in a run directory except the manifest (it carries wall-clock).
std::map<std::string, std::string> reports(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename() != "manifest.json") out[e.path().filename().string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST(Config, RoundTripDefaults) {
  for (const auto& kind : experiment_kinds()) {
    const auto c = default_config(kind);
    std::vector<std::string> errs;
    EXPECT_EQ(read_config(serialize(c), errs), c) << kind;
    EXPECT_TRUE(errs.empty()) << kind << ": " << joined(errs);
  }
}

TEST(Config, RoundTripVariants) {
  std::vector<ExperimentConfig> cs;
  ExperimentConfig a = default_config("family-decay");
  a.model = ModelSpec::garch11(0.1, 0.1, 0.8);
  a.model.innovation = InnovationSpec::student(7.5);
  a.family = FunctionFamily::scalar(HuberFamily{1.5}, -2.0, 2.5);
  a.seed = 0xFFFFFFFFFFFFFFFFull;
  a.lags = {1, 3, 9};
  a.p = 0.1 + 0.2;
  cs.push_back(a);
  ExperimentConfig b = default_config("indicator-decay");
  b.model = ModelSpec::qar1(0.0, 0.5, 0.2, 0.1);
  b.embedding = CensoredTriple{};
  b.indicator.strict = false;
  cs.push_back(b);
  ExperimentConfig d = default_config("bracket-decay");
  d.model = ModelSpec::rcar1(0.3, 0.2);
  d.embedding = RegressionAugment{};
  d.cover.cap = 77;
  d.count = PowerCount{2.5, 1.0 / 3.0};
  cs.push_back(d);
  ExperimentConfig e = default_config("m-estimate");
  e.model = ModelSpec::arch1(0.2, 0.3);
  e.model.innovation = InnovationSpec::rademacher();
  e.estimator = "median";
  e.location = -1e-300;
  cs.push_back(e);
  for (const auto& c : cs) {
    std::vector<std::string> errs;
    EXPECT_EQ(read_config(serialize(c), errs), c) << serialize(c);
    EXPECT_TRUE(errs.empty()) << joined(errs);
    EXPECT_EQ(serialize(read_config(serialize(c), errs)), serialize(c));
  }
}

TEST(Config, MissingKeysTakeKindDefaults) {
  const auto c = parse_config(R"({"kind": "modulus", "reps": 50})");
  EXPECT_EQ(c.reps, 50u);
  EXPECT_TRUE(std::holds_alternative<LagPair>(c.embedding));
  EXPECT_EQ(c.Q, 4);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_TRUE(mentions(messages(R"({"kind": "gmc-decay", "rep": 5})"), "unknown key \"rep\""));
  EXPECT_TRUE(mentions(messages(R"({"model": {"type": "ar1", "phy": 0.5}})"), "unknown key \"phy\" in model"));
  EXPECT_TRUE(mentions(messages(R"({"cover": {"cap": 3, "x": 1}})"), "unknown key \"x\" in cover"));
}

TEST(Config, SyntaxAndTypeErrors) {
  EXPECT_TRUE(mentions(messages("{"), "not valid JSON"));
  EXPECT_TRUE(mentions(messages("[1, 2]"), "config must be a JSON object"));
  EXPECT_TRUE(mentions(messages(R"({"reps": "many"})"), "config.reps"));
  EXPECT_TRUE(mentions(messages(R"({"seed": -1})"), "config.seed: must be >= 0"));
  EXPECT_TRUE(mentions(messages(R"({"reps": 2.5})"), "config.reps: not an integer"));
  EXPECT_TRUE(mentions(messages(R"({"lags": [1, "x"]})"), "config.lags"));
  EXPECT_TRUE(mentions(messages(R"({"model": {"type": "var"}})"), "unknown model type"));
}

TEST(Config, BadConfigTable) {
  struct Case {
    const char* json;
    const char* message;
  };
  const std::vector<Case> table{
      {R"({"kind": "nope"})", "unknown experiment kind"},
      {R"({"reps": 0})", "reps must be >= 1"},
      {R"({"reps": 10})", "decay reps must be >= 1000"},
      {R"({"out": ""})", "out must be a nonempty"},
      {R"({"model": {"type": "ar1", "phi": 1.0}})", "ar1 requires |phi| < 1"},
      {R"({"model": {"type": "ar1", "sigma": 0}})", "ar1 requires sigma > 0"},
      {R"({"model": {"type": "ar1", "q": 0}})", "order q must be > 0"},
      {R"({"model": {"type": "arch1", "omega": 0}})", "arch1 requires omega > 0"},
      {R"({"model": {"type": "arch1", "a1": -0.1}})", "arch1 requires a1 >= 0"},
      {R"({"model": {"type": "garch11", "omega": 0.1, "a": 0.6, "b": 0.6}})", "contraction"},
      {R"({"model": {"type": "qar1", "innovation": {"type": "normal"}}})", "uniform-0-1"},
      {R"({"model": {"type": "rcar1", "tau": -1}})", "rcar1 requires tau >= 0"},
      {R"({"model": {"type": "ar1", "innovation": {"type": "cauchy"}}})", "unknown innovation type"},
      {R"({"embedding": {"type": "censored-triple", "error_scale": 0}})", "censored-triple scales"},
      {R"({"embedding": {"type": "regression-augment", "covariate_scale": 0}})", "covariate_scale"},
      {R"({"embedding": {"type": "spiral"}})", "unknown embedding type"},
      {R"({"lags": []})", "lags must be nonempty"},
      {R"({"lags": [3, 2]})", "strictly increasing"},
      {R"({"lags": [0, 1]})", "lags must be >= 1"},
      {R"({"p": 0.5})", "p must be >= 1"},
      {R"({"kind": "family-decay", "embedding": {"type": "identity"}})", "expects 2"},
      {R"({"kind": "family-decay", "theta_points": 0})", "theta_points must be >= 1"},
      {R"({"family": {"type": "huber", "delta": 0}})", "family:"},
      {R"({"family": {"type": "quantilogram", "theta_lo": [1], "theta_hi": [0]}})", "family:"},
      {R"({"family": {"type": "zeta"}})", "unknown family type"},
      {R"({"kind": "bracket-decay", "cover_delta": 0})", "cover_delta must be > 0"},
      {R"({"kind": "bracket-decay", "cover": {"lipschitz": 0}})", "cover.lipschitz"},
      {R"({"kind": "indicator-decay", "lambda_points": 0})", "lambda_points must be >= 1"},
      {R"({"kind": "indicator-decay", "indicator": {"case": "sometimes"}})", "unknown indicator case"},
      {R"({"kind": "indicator-decay", "indicator": {"g": "square"}})", "unknown indicator g"},
      {R"({"kind": "modulus", "Q": 3})", "Q must be an even integer"},
      {R"({"kind": "modulus", "gamma": 0})", "gamma must be > 0"},
      {R"({"kind": "modulus", "Q": 2})", "bracketing integral diverges"},
      {R"({"kind": "modulus", "reps": 1})", "modulus reps must be >= 2"},
      {R"({"kind": "modulus", "deltas": []})", "deltas must be nonempty"},
      {R"({"kind": "modulus", "deltas": [0.1, -1]})", "deltas must be > 0"},
      {R"({"kind": "modulus", "eta": 0})", "eta must be > 0"},
      {R"({"kind": "modulus", "pilot_reps": 10})", "pilot_reps must be >= 100"},
      {R"({"kind": "modulus", "oracle_length": 10})", "oracle_length must be >= 100000"},
      {R"({"kind": "modulus", "n": 0})", "n must be >= 1"},
      {R"({"kind": "probe", "ns": []})", "ns must be nonempty"},
      {R"({"kind": "probe", "ns": [0]})", "ns must be >= 1"},
      {R"({"kind": "moment-scaling", "rho_targets": [0]})", "rho_targets must be > 0"},
      {R"({"kind": "moment-scaling", "rho_targets": []})", "rho_targets must be nonempty"},
      {R"({"kind": "moment-scaling", "reps": 1})", "moment-scaling reps must be >= 2"},
      {R"({"kind": "quantilogram", "family": {"type": "huber"}})", "needs a quantilogram family"},
      {R"({"kind": "quantilogram", "h": 0})", "h must be >= 1"},
      {R"({"kind": "quantilogram", "n": 1})", "n must exceed h"},
      {R"({"kind": "m-estimate", "estimator": "mean"})", "estimator must be median or huber"},
      {R"({"kind": "m-estimate", "huber_delta": 0})", "huber_delta must be > 0"},
      {R"({"kind": "m-estimate", "data": "csv"})", "data must be laplace or model"},
      {R"({"kind": "m-estimate", "scale": 0})", "scale must be > 0"},
      {R"({"kind": "dominance", "family": {"type": "sign"}})", "needs a dominance-pair family"},
      {R"({"kind": "bracketing-integral", "count": {"coef": 0}})", "count.coef must be > 0"},
      {R"({"kind": "bracketing-integral", "count": {"exponent": -1}})", "count.exponent must be >= 0"},
  };
  for (const auto& c : table) {
    const auto ms = messages(c.json);
    EXPECT_TRUE(mentions(ms, c.message)) << c.json << " -> " << joined(ms);
  }
}

TEST(Config, AllViolationsReportedTogether) {
  const auto ms = messages(
      R"({"kind": "modulus", "reps": 0, "eta": -1, "Q": 2, "deltas": [], "model": {"type": "ar1", "phi": 2}})");
  EXPECT_TRUE(mentions(ms, "reps must be >= 1"));
  EXPECT_TRUE(mentions(ms, "eta must be > 0"));
  EXPECT_TRUE(mentions(ms, "deltas must be nonempty"));
  EXPECT_TRUE(mentions(ms, "bracketing integral diverges"));
  EXPECT_TRUE(mentions(ms, "ar1 requires |phi| < 1"));
}

TEST(Run, DivergentModulusRefusedBeforeWork) {
  auto c = default_config("modulus");
  c.Q = 2;
  c.out = scratch("divergent").string();
  try {
    run(c);
    FAIL() << "expected refusal";
  } catch (const AggregateValidationError& e) {
    EXPECT_TRUE(mentions(e.messages(), "bracketing integral diverges")) << e.what();
  }
  EXPECT_TRUE(fs::is_empty(c.out));
}

TEST(Run, GmcDecayAr1) {
  auto c = default_config("gmc-decay");
  c.out = scratch("gmc").string();
  const auto m = run(c);
  EXPECT_EQ(m.kind, "gmc-decay");
  EXPECT_EQ(m.task_count, c.reps);
  EXPECT_EQ(m.config_hash, sha256_hex(serialize(c)));
  std::vector<std::string> names;
  for (const auto& f : m.files) names.push_back(f.name);
  EXPECT_EQ(names, (std::vector<std::string>{"decay.csv", "decay.json", "config.json"}));
  const auto j = nlohmann::json::parse(read_file(fs::path(c.out) / "decay.json"));
  EXPECT_GE(j["alpha_hat"].get<double>(), 0.45);
  EXPECT_LE(j["alpha_hat"].get<double>(), 0.55);
  EXPECT_NE(summarize(c.out).find("alpha_hat ≈ 0.50"), std::string::npos) << summarize(c.out);
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "decay_plot.csv"));
}

TEST(Run, RerunIsByteIdentical) {
  for (const std::string kind : {"simulate", "quantilogram", "dominance", "m-estimate"}) {
    auto c = default_config(kind);
    c.reps = 40;
    c.n = 300;
    c.out = scratch("rerun_a").string();
    run(c);
    const auto first = reports(c.out);
    c.out = scratch("rerun_b").string();
    run(c);
    // The out directory is part of the config, so only config.json may differ.
    auto second = reports(c.out);
    ASSERT_EQ(first.size(), second.size()) << kind;
    for (const auto& [name, text] : first) {
      if (name != "config.json") {
        EXPECT_EQ(text, second[name]) << kind << " " << name;
      }
    }
  }
}

TEST(Run, ConfigJsonReproducesRun) {
  auto c = default_config("m-estimate");
  c.reps = 20;
  c.out = scratch("reproduce").string();
  run(c);
  EXPECT_EQ(parse_config(read_file(fs::path(c.out) / "config.json")), c);
}

TEST(Summarize, Errors) {
  const auto dir = scratch("summ_err");
  EXPECT_THROW(summarize(dir), std::runtime_error);
  write_file(dir / "manifest.json", "{not json");
  EXPECT_THROW(summarize(dir), std::runtime_error);
  auto c = default_config("m-estimate");
  c.reps = 10;
  c.out = (dir / "run").string();
  run(c);
  write_file(dir / "run" / "mestimate.csv", "tampered\n");
  EXPECT_THROW(summarize(dir / "run"), std::runtime_error);
}

TEST(Summarize, Idempotent) {
  auto c = default_config("probe");
  c.reps = 50;
  c.ns = {100, 200};
  c.pilot_reps = 2000;
  c.oracle_length = kMinOracleLength;
  c.out = scratch("summ_twice").string();
  run(c);
  const std::string a = summarize(c.out);
  const std::string b = summarize(c.out);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "probe_plot_n100.csv"));
  EXPECT_TRUE(fs::exists(fs::path(c.out) / "probe_plot_n200.csv"));
  EXPECT_EQ(read_file(fs::path(c.out) / "probe_plot_n100.csv").substr(0, 8), "x,y,se\n0");
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  std::string out;
  EXPECT_EQ(sh("gmc-decay --reps 0 --out " + (dir / "a").string(), &out), 2);
  EXPECT_NE(out.find("reps must be >= 1"), std::string::npos) << out;
  EXPECT_EQ(sh("gmc-decay --bogus-flag", &out), 2);
  EXPECT_NE(out.find("Usage"), std::string::npos) << out;
  EXPECT_EQ(sh("no-such-kind", &out), 2);
  EXPECT_NE(out.find("Usage"), std::string::npos) << out;
  EXPECT_EQ(sh(""), 2);
  EXPECT_EQ(sh("m-estimate --threads 0 --out " + (dir / "b").string()), 2);
  EXPECT_EQ(sh("modulus --config " + (dir / "missing.json").string()), 1);
  fs::create_directories(dir / "empty");
  EXPECT_EQ(sh("summarize " + (dir / "empty").string(), &out), 1);
  EXPECT_NE(out.find("manifest"), std::string::npos) << out;
  EXPECT_EQ(sh("--help"), 0);
}

TEST(Cli, ConfigKindMustMatchSubcommand) {
  const auto dir = scratch("cli_kind");
  write_file(dir / "cfg.json", R"({"kind": "modulus"})");
  std::string out;
  EXPECT_EQ(sh("probe --config " + (dir / "cfg.json").string(), &out), 2);
  EXPECT_NE(out.find("does not match subcommand"), std::string::npos) << out;
}

TEST(Cli, ModulusDivergentGate) {
  const auto dir = scratch("cli_gate");
  write_file(dir / "cfg.json", R"({"kind": "modulus", "Q": 2, "out": ")" + (dir / "o").string() + "\"}");
  std::string out;
  EXPECT_EQ(sh("modulus --config " + (dir / "cfg.json").string(), &out), 2);
  EXPECT_NE(out.find("bracketing integral diverges"), std::string::npos) << out;
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, ThreadCountDoesNotChangeBytes) {
  const auto dir = scratch("cli_threads");
  write_file(dir / "cfg.json",
             R"({"kind": "modulus", "reps": 100, "pilot_reps": 5000, "oracle_length": 100000})");
  for (const std::string t : {"1", "8"})
    ASSERT_EQ(sh("modulus --config " + (dir / "cfg.json").string() + " --seed 7 --threads " + t +
                 " --out " + (dir / ("t" + t)).string()),
              0);
  auto a = reports(dir / "t1");
  auto b = reports(dir / "t8");
  EXPECT_EQ(a.size(), b.size());
  EXPECT_EQ(a["modulus.csv"], b["modulus.csv"]);
  // config.json records the out directory; everything else in it must agree.
  auto ca = parse_config(a["config.json"]), cb = parse_config(b["config.json"]);
  EXPECT_EQ(ca.seed, 7u);
  cb.out = ca.out;
  EXPECT_EQ(ca, cb);
}

TEST(Cli, SeedOverrideChangesOutput) {
  const auto dir = scratch("cli_seed");
  ASSERT_EQ(sh("m-estimate --reps 20 --seed 1 --out " + (dir / "s1").string()), 0);
  ASSERT_EQ(sh("m-estimate --reps 20 --seed 2 --out " + (dir / "s2").string()), 0);
  EXPECT_NE(read_file(dir / "s1" / "mestimate.csv"), read_file(dir / "s2" / "mestimate.csv"));
  std::string a, b;
  EXPECT_EQ(sh("summarize " + (dir / "s1").string(), &a), 0);
  EXPECT_EQ(sh("summarize " + (dir / "s1").string(), &b), 0);
  EXPECT_EQ(a, b);
}

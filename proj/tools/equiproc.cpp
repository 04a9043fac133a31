#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "equiproc/runner.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

void add_run_flags(CLI::App& sub, Overrides& o) {
  sub.add_option("--config", o.config, "JSON experiment config");
  sub.add_option("--seed", o.seed, "master seed (overrides config)");
  sub.add_option("--reps", o.reps, "replications (overrides config)");
  sub.add_option("--out", o.out, "output directory (overrides config)");
  sub.add_option("--threads", o.threads, "worker threads (default EQUIPROC_THREADS or all cores)");
}

int fail_validation(const std::vector<std::string>& errs) {
  std::cerr << equiproc::AggregateValidationError(errs).what() << "\n";
  return 2;
}

int run_experiment(const std::string& kind, const Overrides& o) {
  using namespace equiproc;
  std::vector<std::string> errs;
  ExperimentConfig c = default_config(kind);
  if (!o.config.empty()) {
    std::string text;
    try {
      text = read_file(o.config);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    bool has_kind = false;
    c = read_config(text, errs, &has_kind, kind);
    if (has_kind && c.kind != kind)
      errs.push_back("config kind \"" + c.kind + "\" does not match subcommand \"" + kind + "\"");
    c.kind = kind;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.reps) c.reps = *o.reps;
  if (o.out) c.out = *o.out;
  if (o.threads && *o.threads < 1) errs.push_back("threads must be >= 1");
  for (auto& m : validation_errors(c)) errs.push_back(std::move(m));
  if (!errs.empty()) return fail_validation(errs);
  if (o.threads) set_thread_count(*o.threads);

  const RunManifest m = run(c);
  std::cout << m.kind << ": wrote " << m.files.size() + 1 << " files to " << c.out << " in "
            << detail::fixed(m.wall_clock_seconds, 2) << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equiproc: stochastic equicontinuity diagnostics for time-series models"};
  app.require_subcommand(1);

  Overrides o;
  std::string chosen;
  for (const auto& kind : equiproc::experiment_kinds()) {
    auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
    add_run_flags(*sub, o);
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  std::string dir;
  auto* summ = app.add_subcommand("summarize", "tabulate a run directory and write plot data");
  summ->add_option("dir", dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (summ->parsed()) {
      std::cout << equiproc::summarize(dir);
      return 0;
    }
    return run_experiment(chosen, o);
  } catch (const equiproc::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

// skg: batch experiments for lattice secret key generation.
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "latskg/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

bool is_config_error(latskg::Errc e) {
  using latskg::Errc;
  switch (e) {
    case Errc::ConfigError:
    case Errc::InvalidArgument:
    case Errc::NonPositiveSigma:
    case Errc::NotDegradable:
    case Errc::NotPSD:
    case Errc::DimensionTooLarge:
    case Errc::KeySpaceTooLarge:
    case Errc::EnumerationTooLarge:
    case Errc::IndexTooLarge:
    case Errc::DegenerateChain:
      return true;
    default:
      return false;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("skg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SKG_LOG")) {
    const std::string v = env;
    if (v == "error") spdlog::set_level(spdlog::level::err);
    else if (v == "warn") spdlog::set_level(spdlog::level::warn);
    else if (v == "info") spdlog::set_level(spdlog::level::info);
    else if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring SKG_LOG={} (expected error, warn, info or debug)", v);
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) latskg::fail(latskg::Errc::ConfigError, "cannot write " + path);
  out << text;
  if (!out) latskg::fail(latskg::Errc::ConfigError, "write failed for " + path);
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::string out;
  bool timing = false;
};

int run(const std::string& sub, const Options& o) {
  using namespace latskg;
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(o.config);
  if (cfg.experiment != parse_experiment(sub))
    fail(Errc::ConfigError, std::string("config is for '") + experiment_name(cfg.experiment) +
                                "', not '" + sub + "'");
  if (o.seed) cfg.seed = *o.seed;
  if (o.samples) cfg.samples = *o.samples;
  if (!o.out.empty()) cfg.out = o.out;
  if (cfg.out.empty()) cfg.out = std::string(experiment_name(cfg.experiment)) + ".csv";
  cfg.validate();
  spdlog::info("{}: seed {} samples {} config hash {}", sub, cfg.seed, cfg.samples, config_hash(cfg));

  const ExperimentReport report = run_experiment(cfg);
  write_file(cfg.out, report.csv());
  ojson meta = report_meta(cfg, report);
  if (o.timing)
    meta["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(cfg.out + ".meta.json", meta.dump(2) + "\n");
  spdlog::info("wrote {} ({} rows)", cfg.out, report.rows.size());
  for (const auto& f : report.flags) spdlog::warn("{}", f);
  for (const auto& v : report.violations) spdlog::error("{}", v);
  return report.violations.empty() ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Lattice secret key generation experiments"};
  app.require_subcommand(1);
  Options opts;
  const std::vector<std::string> names{"reliability", "uniformity", "leakage",
                                       "tradeoff",    "flatness",   "resolvability"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", opts.config, "TOML config file")->required();
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--out", opts.out, "CSV output path (sidecar is <out>.meta.json)");
    sub->add_option("--samples", opts.samples, "override the sample count");
    sub->add_flag("--timing", opts.timing, "record wall-clock time in the sidecar");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return run(sub, opts);
  } catch (const latskg::Error& e) {
    spdlog::error("{}", e.what());
    return is_config_error(e.code()) ? kExitConfig : kExitNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  }
}

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "construction.hpp"
#include "flatness.hpp"
#include "protocol.hpp"
#include "resolvability.hpp"
#include "stats.hpp"
#include "toml_lite.hpp"

#ifndef LATSKG_VERSION
#define LATSKG_VERSION "0.0.0"
#endif

namespace latskg {

using ojson = nlohmann::ordered_json;

enum class ExperimentKind { Reliability, Uniformity, Leakage, Tradeoff, FlatnessScan, Resolvability };

inline const char* experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Reliability: return "reliability";
    case ExperimentKind::Uniformity: return "uniformity";
    case ExperimentKind::Leakage: return "leakage";
    case ExperimentKind::Tradeoff: return "tradeoff";
    case ExperimentKind::FlatnessScan: return "flatness_scan";
    case ExperimentKind::Resolvability: return "resolvability";
  }
  return "?";
}

// Accepts the CLI subcommand names too ("flatness").
inline ExperimentKind parse_experiment(const std::string& s) {
  if (s == "reliability") return ExperimentKind::Reliability;
  if (s == "uniformity") return ExperimentKind::Uniformity;
  if (s == "leakage") return ExperimentKind::Leakage;
  if (s == "tradeoff") return ExperimentKind::Tradeoff;
  if (s == "flatness_scan" || s == "flatness") return ExperimentKind::FlatnessScan;
  if (s == "resolvability") return ExperimentKind::Resolvability;
  fail(Errc::ConfigError, "unknown experiment '" + s + "'");
}

struct SourceParams {
  double sigma_x = 1.0, sigma_y = 1.0, sigma_z = 1.0;
  double rho_xy = 0.9, rho_xz = 0.5;
  std::optional<double> rho_yz;
};

struct ChainParams {
  int n = 4;
  std::array<double, 3> targets{0.05, 0.2, 0.8};
  std::optional<std::int64_t> prime;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  std::string file;                   // chain JSON; overrides the fields above
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Reliability;
  std::uint64_t seed = 1;
  std::size_t samples = 10000;
  std::string out;

  SourceParams source;
  ChainParams chain;
  double sigma_q = 0.5;
  RegionKind key_region = RegionKind::Parallelepiped;
  SamplerMode sampler = SamplerMode::Exact;

  // uniformity / leakage
  std::size_t flatness_samples = 100000;
  std::size_t key_rounds = 20000;
  std::optional<double> eve_sigma_2;

  // tradeoff
  double r_p_max = 20.0;
  std::size_t tradeoff_points = 41;

  // flatness scan
  std::string family = "scaled_integer";
  std::vector<int> dims{1, 2, 4};
  double alpha = 1.0;
  int member = 1;
  std::size_t gamma_points = 9;
  std::vector<Metric> metrics{Metric::Linf, Metric::L1, Metric::KL};

  // resolvability
  std::vector<int> resolvability_dims{2, 4, 6};
  double delta0 = 0.25;
  std::size_t codes = 20;
  double rate_fraction = 0.5;
  bool controls = true;

  void validate() const {
    auto need = [](bool c, const std::string& m) { require(c, Errc::ConfigError, m); };
    need(samples >= 100, "samples must be at least 100");
    need(sigma_q > 0.0 && std::isfinite(sigma_q), "quantizer.sigma_q must be positive");
    need(chain.n >= 1 && chain.n <= kCvpMaxDim, "chain.n out of range");
    for (double t : chain.targets) need(t > 0.0 && std::isfinite(t), "chain.targets must be positive");
    need(flatness_samples >= 1000, "flatness_samples must be at least 1000");
    need(key_rounds >= 100, "key_rounds must be at least 100");
    need(r_p_max > 0.0 && std::isfinite(r_p_max), "tradeoff.r_p_max must be positive");
    need(tradeoff_points >= 2, "tradeoff.points must be at least 2");
    need(family == "scaled_integer" || family == "chain", "flatness.family must be scaled_integer or chain");
    need(!dims.empty(), "dims grid is empty");
    for (int d : dims) need(d >= 1 && d <= kCvpMaxDim, "dimension out of range in dims");
    need(alpha > 0.0, "flatness.alpha must be positive");
    need(member >= 1 && member <= 3, "flatness.member must be 1, 2 or 3");
    need(gamma_points >= 2, "flatness.gamma_points must be at least 2");
    need(!metrics.empty(), "flatness.metrics is empty");
    need(!resolvability_dims.empty(), "resolvability.dims grid is empty");
    for (int d : resolvability_dims) need(d >= 1 && d <= kCvpMaxDim, "dimension out of range in resolvability.dims");
    need(delta0 > 0.0, "resolvability.delta0 must be positive");
    need(codes >= 1, "resolvability.codes must be at least 1");
    need(rate_fraction > 0.0 && rate_fraction < 1.0, "resolvability.rate_fraction must lie in (0, 1)");
    if (eve_sigma_2) need(*eve_sigma_2 > 0.0, "leakage.sigma_2 must be positive");
  }
};

namespace detail {

// Strict view of one config table: unread keys are reported as errors.
class Section {
 public:
  Section(const ojson& root, const std::string& name) : name_(name) {
    if (name.empty()) {
      j_ = &root;
    } else if (root.contains(name)) {
      j_ = &root.at(name);
      require(j_->is_object(), Errc::ConfigError, "'" + name + "' must be a table");
    }
  }

  bool present() const { return j_ != nullptr; }
  bool has(const std::string& key) {
    used_.insert(key);
    return j_ && j_->contains(key);
  }

  double num(const std::string& key, double def) {
    if (!has(key)) return def;
    return as_double(at(key), key);
  }
  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    return as_u64(at(key), key);
  }
  std::int64_t i64(const std::string& key, std::int64_t def) {
    if (!has(key)) return def;
    const auto& v = at(key);
    require(v.is_number_integer(), Errc::ConfigError, where(key) + " must be an integer");
    return v.get<std::int64_t>();
  }
  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    require(at(key).is_boolean(), Errc::ConfigError, where(key) + " must be a boolean");
    return at(key).get<bool>();
  }
  std::string str(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    require(at(key).is_string(), Errc::ConfigError, where(key) + " must be a string");
    return at(key).get<std::string>();
  }
  const ojson* array(const std::string& key) {
    if (!has(key)) return nullptr;
    require(at(key).is_array(), Errc::ConfigError, where(key) + " must be an array");
    return &at(key);
  }

  double as_double(const ojson& v, const std::string& key) const {
    require(v.is_number(), Errc::ConfigError, where(key) + " must be a number");
    return v.get<double>();
  }
  std::uint64_t as_u64(const ojson& v, const std::string& key) const {
    require(v.is_number_unsigned(), Errc::ConfigError, where(key) + " must be a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (name_.empty() && v.is_object()) continue;
      require(used_.count(k) > 0, Errc::ConfigError, "unknown key " + where(k));
    }
  }

 private:
  const ojson& at(const std::string& key) const { return j_->at(key); }
  std::string where(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const ojson* j_ = nullptr;
  std::string name_;
  std::set<std::string> used_;
};

inline Metric parse_metric(const std::string& s) {
  if (s == "linf") return Metric::Linf;
  if (s == "l1") return Metric::L1;
  if (s == "kl") return Metric::KL;
  fail(Errc::ConfigError, "unknown metric '" + s + "'");
}

}  // namespace detail

// `base_dir` resolves a relative chain file.
inline ExperimentConfig config_from_json(const ojson& root, const std::string& base_dir = ".") {
  require(root.is_object(), Errc::ConfigError, "config must be a table");
  ExperimentConfig c;
  static const std::set<std::string> tables{"source", "chain", "quantizer", "uniformity", "leakage",
                                            "tradeoff", "flatness", "resolvability"};
  for (const auto& [k, v] : root.items())
    if (v.is_object()) require(tables.count(k) > 0, Errc::ConfigError, "unknown table [" + k + "]");

  detail::Section top(root, "");
  require(top.has("experiment"), Errc::ConfigError, "missing 'experiment'");
  c.experiment = parse_experiment(top.str("experiment", ""));
  c.seed = top.u64("seed", c.seed);
  c.samples = top.u64("samples", c.samples);
  c.out = top.str("out", "");
  top.finish();

  detail::Section src(root, "source");
  c.source.sigma_x = src.num("sigma_x", c.source.sigma_x);
  c.source.sigma_y = src.num("sigma_y", c.source.sigma_y);
  c.source.sigma_z = src.num("sigma_z", c.source.sigma_z);
  // sigma_1 / sigma_2 are accepted in place of rho_xy / rho_xz.
  auto rho_from = [&](const char* rho_key, const char* sig_key, double def) {
    const bool r = src.has(rho_key), s = src.has(sig_key);
    require(!(r && s), Errc::ConfigError, std::string("give source.") + rho_key + " or source." + sig_key + ", not both");
    if (s) {
      const double sig = src.num(sig_key, 0.0);
      require(sig > 0.0 && sig < c.source.sigma_x, Errc::ConfigError,
              std::string("source.") + sig_key + " must lie in (0, sigma_x)");
      return std::sqrt(1.0 - sig * sig / (c.source.sigma_x * c.source.sigma_x));
    }
    return src.num(rho_key, def);
  };
  c.source.rho_xy = rho_from("rho_xy", "sigma_1", c.source.rho_xy);
  c.source.rho_xz = rho_from("rho_xz", "sigma_2", c.source.rho_xz);
  if (src.has("rho_yz")) c.source.rho_yz = src.num("rho_yz", 0.0);
  src.finish();

  detail::Section ch(root, "chain");
  c.chain.n = static_cast<int>(ch.i64("n", c.chain.n));
  if (const auto* t = ch.array("targets")) {
    require(t->size() == 3, Errc::ConfigError, "chain.targets needs three entries");
    for (int i = 0; i < 3; ++i) c.chain.targets[i] = ch.as_double((*t)[i], "targets");
  }
  if (ch.has("prime")) c.chain.prime = ch.i64("prime", 0);
  if (ch.has("seed")) c.chain.seed = ch.u64("seed", 0);
  if (ch.has("file")) {
    const std::filesystem::path f = ch.str("file", "");
    c.chain.file = f.is_absolute() ? f.string() : (std::filesystem::path(base_dir) / f).string();
  }
  ch.finish();

  detail::Section q(root, "quantizer");
  c.sigma_q = q.num("sigma_q", c.sigma_q);
  const std::string region = q.str("key_region", "parallelepiped");
  require(region == "parallelepiped" || region == "voronoi", Errc::ConfigError,
          "quantizer.key_region must be parallelepiped or voronoi");
  c.key_region = region == "voronoi" ? RegionKind::Voronoi : RegionKind::Parallelepiped;
  const std::string sampler = q.str("sampler", "exact");
  require(sampler == "exact" || sampler == "klein", Errc::ConfigError, "quantizer.sampler must be exact or klein");
  c.sampler = sampler == "klein" ? SamplerMode::Klein : SamplerMode::Exact;
  q.finish();

  detail::Section uni(root, "uniformity");
  c.flatness_samples = uni.u64("flatness_samples", c.flatness_samples);
  c.key_rounds = uni.u64("key_rounds", c.key_rounds);
  uni.finish();

  detail::Section leak(root, "leakage");
  c.flatness_samples = leak.u64("flatness_samples", c.flatness_samples);
  c.key_rounds = leak.u64("key_rounds", c.key_rounds);
  if (leak.has("sigma_2")) c.eve_sigma_2 = leak.num("sigma_2", 0.0);
  leak.finish();

  detail::Section tr(root, "tradeoff");
  c.r_p_max = tr.num("r_p_max", c.r_p_max);
  c.tradeoff_points = tr.u64("points", c.tradeoff_points);
  tr.finish();

  detail::Section fl(root, "flatness");
  c.family = fl.str("family", c.family);
  if (const auto* d = fl.array("dims")) {
    c.dims.clear();
    for (const auto& v : *d) c.dims.push_back(static_cast<int>(fl.as_u64(v, "dims")));
  }
  c.alpha = fl.num("alpha", c.alpha);
  c.member = static_cast<int>(fl.i64("member", c.member));
  c.gamma_points = fl.u64("gamma_points", c.gamma_points);
  if (const auto* m = fl.array("metrics")) {
    c.metrics.clear();
    for (const auto& v : *m) {
      require(v.is_string(), Errc::ConfigError, "flatness.metrics must hold strings");
      c.metrics.push_back(detail::parse_metric(v.get<std::string>()));
    }
  }
  fl.finish();

  detail::Section rs(root, "resolvability");
  if (const auto* d = rs.array("dims")) {
    c.resolvability_dims.clear();
    for (const auto& v : *d) c.resolvability_dims.push_back(static_cast<int>(rs.as_u64(v, "dims")));
  }
  c.delta0 = rs.num("delta0", c.delta0);
  c.codes = rs.u64("codes", c.codes);
  c.rate_fraction = rs.num("rate_fraction", c.rate_fraction);
  c.controls = rs.flag("controls", c.controls);
  rs.finish();

  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  const auto dir = std::filesystem::path(path).parent_path();
  return config_from_json(toml_lite::parse_file(path), dir.empty() ? "." : dir.string());
}

// Resolved configuration for the report; the output path is left out so that
// moving an output does not change its sidecar.
inline ojson config_echo(const ExperimentConfig& c) {
  ojson j;
  j["experiment"] = experiment_name(c.experiment);
  j["seed"] = c.seed;
  j["samples"] = c.samples;
  const bool protocol = c.experiment == ExperimentKind::Reliability ||
                        c.experiment == ExperimentKind::Uniformity || c.experiment == ExperimentKind::Leakage;
  const bool chain = protocol || (c.experiment == ExperimentKind::FlatnessScan && c.family == "chain");
  if (protocol || c.experiment == ExperimentKind::Tradeoff) {
    ojson s;
    s["sigma_x"] = c.source.sigma_x;
    s["sigma_y"] = c.source.sigma_y;
    s["sigma_z"] = c.source.sigma_z;
    s["rho_xy"] = c.source.rho_xy;
    s["rho_xz"] = c.source.rho_xz;
    if (c.source.rho_yz) s["rho_yz"] = *c.source.rho_yz;
    j["source"] = s;
  }
  if (chain) {
    ojson s;
    if (!c.chain.file.empty()) {
      s["file"] = std::filesystem::path(c.chain.file).filename().string();
    } else {
      s["n"] = c.chain.n;
      s["targets"] = c.chain.targets;
      if (c.chain.prime) s["prime"] = *c.chain.prime;
      s["seed"] = c.chain.seed.value_or(c.seed);
    }
    j["chain"] = s;
  }
  if (protocol) {
    j["quantizer"] = {{"sigma_q", c.sigma_q},
                      {"key_region", c.key_region == RegionKind::Voronoi ? "voronoi" : "parallelepiped"},
                      {"sampler", c.sampler == SamplerMode::Klein ? "klein" : "exact"}};
  }
  switch (c.experiment) {
    case ExperimentKind::Uniformity:
      j["uniformity"] = {{"flatness_samples", c.flatness_samples}};
      break;
    case ExperimentKind::Leakage: {
      ojson l = {{"flatness_samples", c.flatness_samples}, {"key_rounds", c.key_rounds}};
      if (c.eve_sigma_2) l["sigma_2"] = *c.eve_sigma_2;
      j["leakage"] = l;
      break;
    }
    case ExperimentKind::Tradeoff:
      j["tradeoff"] = {{"r_p_max", c.r_p_max}, {"points", c.tradeoff_points}};
      break;
    case ExperimentKind::FlatnessScan: {
      ojson f = {{"family", c.family}, {"dims", c.dims}, {"gamma_points", c.gamma_points}};
      if (c.family == "scaled_integer") f["alpha"] = c.alpha;
      else f["member"] = c.member;
      std::vector<std::string> m;
      for (Metric x : c.metrics) m.push_back(metric_name(x));
      f["metrics"] = m;
      j["flatness"] = f;
      break;
    }
    case ExperimentKind::Resolvability:
      j["resolvability"] = {{"dims", c.resolvability_dims},
                            {"delta0", c.delta0},
                            {"codes", c.codes},
                            {"rate_fraction", c.rate_fraction},
                            {"controls", c.controls}};
      break;
    default:
      break;
  }
  return j;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config_echo(c).dump())));
  return buf;
}

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::Reliability;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  ojson summary = ojson::object();
  std::vector<std::string> violations;  // failed exact invariants
  std::vector<std::string> flags;       // statistical checks outside their slack

  void add_quantity(const std::string& name, double est, double lo, double hi) {
    rows.push_back({name, fmt_double(est), fmt_double(lo), fmt_double(hi)});
    summary[name] = {{"estimate", est}, {"ci_low", lo}, {"ci_high", hi}};
  }
  void add_exact(const std::string& name, double v) { add_quantity(name, v, v, v); }
  void add_mean(const std::string& name, const Estimate& e) {
    add_quantity(name, e.value, e.value - e.ci, e.value + e.ci);
  }
  void add_proportion(const std::string& name, std::size_t k, std::size_t n) {
    const auto ci = clopper_pearson(k, n);
    add_quantity(name, static_cast<double>(k) / static_cast<double>(n), ci.lo, ci.hi);
  }

  double estimate(const std::string& name) const { return summary.at(name).at("estimate").get<double>(); }
  double ci_low(const std::string& name) const { return summary.at(name).at("ci_low").get<double>(); }
  double ci_high(const std::string& name) const { return summary.at(name).at("ci_high").get<double>(); }

  std::string csv() const {
    std::string s;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
      }
      s += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }
};

inline const std::vector<std::string> kQuantityHeader{"quantity", "estimate", "ci_low", "ci_high"};

inline GaussianSourceModel source_model(const ExperimentConfig& c) {
  return make_source(c.source.sigma_x, c.source.sigma_y, c.source.sigma_z, c.source.rho_xy, c.source.rho_xz,
                     c.source.rho_yz);
}

inline NestedChain experiment_chain(const ExperimentConfig& c) {
  if (!c.chain.file.empty()) {
    std::ifstream in(c.chain.file);
    require(static_cast<bool>(in), Errc::ConfigError, "cannot open chain file " + c.chain.file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      fail(Errc::ConfigError, std::string("chain file is not JSON: ") + e.what());
    }
    return chain_from_json(j);
  }
  Rng rng(c.chain.seed.value_or(c.seed));
  return build_chain(c.chain.n, c.chain.targets, rng, c.chain.prime);
}

inline QuantizerConfig quantizer_config(const ExperimentConfig& c) {
  return QuantizerConfig{c.sigma_q, c.key_region, c.sampler, c.seed};
}

// ---------------------------------------------------------------- reliability

inline ExperimentReport run_reliability(const ExperimentConfig& cfg) {
  const auto m = source_model(cfg);
  const auto chain = experiment_chain(cfg);
  const auto q = quantizer_config(cfg);
  const ProtocolContext ctx(chain, q);

  struct Counts {
    std::size_t rounds = 0, key_errors = 0, recon_ok = 0, in_cell = 0, inconsistent = 0, bijection = 0;
  };
  const Rng base = Rng(cfg.seed).substream(11);
  const auto parts = run_chunks<Counts>(chunk_count(cfg.samples), [&](std::size_t c) {
    Rng s = base.substream(c);
    Counts k;
    for (std::size_t i = 0; i < chunk_size(cfg.samples, c); ++i) {
      const auto t = run_round(ctx, m, s);
      const auto chk = check_reliability(ctx, m, t);
      ++k.rounds;
      k.key_errors += t.success ? 0 : 1;
      k.recon_ok += t.reconstructed ? 1 : 0;
      k.in_cell += chk.in_cell ? 1 : 0;
      k.inconsistent += chk.consistent() ? 0 : 1;
      k.bijection += check_bijection(ctx, t) ? 0 : 1;
    }
    return k;
  });
  Counts all;
  for (const auto& p : parts) {
    all.rounds += p.rounds;
    all.key_errors += p.key_errors;
    all.recon_ok += p.recon_ok;
    all.in_cell += p.in_cell;
    all.inconsistent += p.inconsistent;
    all.bijection += p.bijection;
  }

  ExperimentReport r;
  r.kind = ExperimentKind::Reliability;
  r.header = kQuantityHeader;
  r.add_proportion("p_e", all.key_errors, all.rounds);
  r.add_proportion("reconstruction_failure", all.rounds - all.recon_ok, all.rounds);
  r.add_proportion("success_fraction", all.recon_ok, all.rounds);
  r.add_proportion("condition_fraction", all.in_cell, all.rounds);
  r.add_exact("equivalence_violations", static_cast<double>(all.inconsistent));
  r.add_exact("bijection_violations", static_cast<double>(all.bijection));
  const auto rates = rate_report(chain, m, q);
  r.add_exact("r_p", rates.r_p);
  r.add_exact("r_k", rates.r_k);
  r.add_exact("c_s", rates.c_s);
  r.add_exact("r_bar_k", rates.r_bar_k);
  r.add_exact("achievable_r_k", rates.achievable);
  const auto vc = volume_conditions(chain, m, q);
  r.add_exact("vnr_lambda1_sigma_q", vc.c1);
  r.add_exact("vnr_lambda2_sigma_tilde_1", vc.c2);
  r.add_exact("vnr_lambda3_sigma_tilde_2", vc.c3);
  if (all.recon_ok != all.in_cell)
    r.violations.push_back("success count " + std::to_string(all.recon_ok) + " differs from condition count " +
                           std::to_string(all.in_cell));
  if (all.inconsistent) r.violations.push_back("reliability equivalence failed on some rounds");
  if (all.bijection) r.violations.push_back("(s, k) bijection failed on some rounds");
  return r;
}

// ---------------------------------------------------------------- uniformity / leakage

struct KeyHistogram {
  std::vector<double> key, xbar;  // empirical pmfs
  std::size_t rounds = 0;
};

// Alice's key and X-bar cosets over `rounds` independent rounds.
inline KeyHistogram simulate_keys(const ProtocolContext& ctx, const GaussianSourceModel& m, std::size_t rounds,
                                  const Rng& rng) {
  const std::size_t nk = ctx.t23().size(), nx = ctx.t13().size();
  struct Hist {
    std::vector<std::size_t> k, x;
  };
  const auto parts = run_chunks<Hist>(chunk_count(rounds), [&](std::size_t c) {
    Rng s = rng.substream(c);
    Hist h{std::vector<std::size_t>(nk, 0), std::vector<std::size_t>(nx, 0)};
    for (std::size_t i = 0; i < chunk_size(rounds, c); ++i) {
      const Vec x = sample_source(m, ctx.dim(), s).x;
      const Vec u = sample_uniform_cell(ctx.chain().L1, s);
      const auto a = alice_encode(ctx, x, u, s);
      ++h.k[ctx.t23().index(a.k)];
      ++h.x[ctx.t13().index(a.x_q)];
    }
    return h;
  });
  KeyHistogram out{std::vector<double>(nk, 0.0), std::vector<double>(nx, 0.0), rounds};
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < nk; ++i) out.key[i] += static_cast<double>(p.k[i]);
    for (std::size_t i = 0; i < nx; ++i) out.xbar[i] += static_cast<double>(p.x[i]);
  }
  for (double& v : out.key) v /= static_cast<double>(rounds);
  for (double& v : out.xbar) v /= static_cast<double>(rounds);
  return out;
}

struct UniformityBudget {
  FlatnessReport eps1_lambda1, eps1_lambda3;
  double value = 0.0;  // 2 eps1(Lambda1, sigma_Q) + 2 eps1(Lambda3, sigma~_2)
  double se = 0.0;
};

inline FlatnessReport l1_auto(const Lattice& L, double sigma, std::size_t budget, const Rng& rng) {
  return L.dim() <= 3 ? l1_flatness(L, sigma, FlatnessMethod::Quadrature)
                      : l1_flatness(L, sigma, FlatnessMethod::MonteCarlo, budget, rng);
}

inline UniformityBudget uniformity_budget(const NestedChain& chain, const GaussianSourceModel& m,
                                          const QuantizerConfig& q, std::size_t samples, const Rng& rng) {
  UniformityBudget b;
  b.eps1_lambda1 = l1_auto(chain.L1, q.sigma_q, samples, rng.substream(1));
  b.eps1_lambda3 = l1_auto(chain.L3, q.sigma_tilde_2(m), samples, rng.substream(2));
  b.value = 2.0 * b.eps1_lambda1.value + 2.0 * b.eps1_lambda3.value;
  b.se = 2.0 * std::hypot(b.eps1_lambda1.se, b.eps1_lambda3.se);
  return b;
}

inline void add_budget_rows(ExperimentReport& r, const UniformityBudget& b) {
  auto est = [](const FlatnessReport& f) { return Estimate{f.value, f.ci_halfwidth, f.se, f.samples}; };
  r.add_mean("eps1_lambda1_sigma_q", est(b.eps1_lambda1));
  r.add_mean("eps1_lambda3_sigma_tilde_2", est(b.eps1_lambda3));
  r.add_quantity("budget", b.value, b.value - kZ95 * b.se, b.value + kZ95 * b.se);
}

inline std::size_t key_space_size(const NestedChain& c) {
  double size = 1.0;
  for (int i = c.k[2]; i < c.k[1]; ++i) size *= static_cast<double>(c.p);
  return size > 1e18 ? std::numeric_limits<std::size_t>::max() : static_cast<std::size_t>(size);
}

inline constexpr std::size_t kMaxKeySpace = 10000;

inline ExperimentReport run_uniformity(const ExperimentConfig& cfg) {
  const auto m = source_model(cfg);
  const auto chain = experiment_chain(cfg);
  const auto q = quantizer_config(cfg);
  const std::size_t ks = key_space_size(chain);
  require(ks <= kMaxKeySpace, Errc::KeySpaceTooLarge,
          "|K| = " + std::to_string(ks) + " exceeds " + std::to_string(kMaxKeySpace));
  ProtocolContext ctx(chain, q);
  ctx.build_tables();

  const Rng base = Rng(cfg.seed).substream(12);
  const auto hist = simulate_keys(ctx, m, cfg.samples, base.substream(1));
  const auto budget = uniformity_budget(chain, m, q, cfg.flatness_samples, base.substream(2));

  ExperimentReport r;
  r.kind = ExperimentKind::Uniformity;
  r.header = kQuantityHeader;
  r.add_exact("key_space", static_cast<double>(ks));
  const double d = distance_to_uniform(hist.key);
  const double slack = histogram_slack(hist.key, hist.rounds);
  r.add_quantity("key_distance", d, std::max(0.0, d - kZ95 * slack), d + kZ95 * slack);
  r.add_exact("histogram_slack", slack);
  const double dx = distance_to_uniform(hist.xbar);
  const double sx = histogram_slack(hist.xbar, hist.rounds);
  r.add_quantity("xbar_distance", dx, std::max(0.0, dx - kZ95 * sx), dx + kZ95 * sx);
  add_budget_rows(r, budget);

  // Plug-in entropy with a delta-method interval.
  const double logk = std::log(static_cast<double>(ks));
  const double h = shannon_entropy(hist.key);
  double m2 = 0.0;
  for (double p : hist.key)
    if (p > 0.0) m2 += p * std::log(p) * std::log(p);
  const double hse = std::sqrt(std::max(m2 - h * h, 0.0) / static_cast<double>(hist.rounds));
  const double gap = std::abs(h - logk);
  r.add_quantity("entropy_gap", gap, std::max(0.0, gap - kZ95 * hse), gap + kZ95 * hse);
  const double gap_bound = d <= 0.5 ? leakage_bound(d, ks) : logk;
  r.add_exact("entropy_gap_bound", gap_bound);

  const double allowed = budget.value + 3.0 * (slack + budget.se);
  const bool ok = d <= allowed;
  r.add_exact("within_budget", ok ? 1.0 : 0.0);
  r.summary["allowed"] = allowed;
  if (!ok) r.flags.push_back("key distance exceeds the flatness budget plus slack");
  return r;
}

inline ExperimentReport run_leakage(const ExperimentConfig& cfg) {
  const auto m = source_model(cfg);
  const auto chain = experiment_chain(cfg);
  const auto q = quantizer_config(cfg);
  ProtocolContext ctx(chain, q);
  ctx.build_tables();
  const std::size_t ks = ctx.t23().size();
  const double s2 = cfg.eve_sigma_2.value_or(m.sigma_2());

  ExperimentReport r;
  r.kind = ExperimentKind::Leakage;
  r.header = kQuantityHeader;
  r.add_exact("key_space", static_cast<double>(ks));
  r.add_exact("sigma_2", s2);

  const Rng base = Rng(cfg.seed).substream(13);
  const auto budget = uniformity_budget(chain, m, q, cfg.flatness_samples, base.substream(2));
  Estimate xbar, d_pk, d_uni;
  if (ctx.t13().size() == 1) {
    xbar = d_pk = d_uni = Estimate{0.0, 0.0, 0.0, cfg.samples};
  } else {
    const auto keys = simulate_keys(ctx, m, cfg.key_rounds, base.substream(1));
    const std::vector<double> uni(ks, 1.0 / static_cast<double>(ks));
    const EvePosterior eve(ctx, s2);
    const Rng zs = base.substream(3);
    struct Acc {
      Moments x, pk, u;
    };
    // Small chunks: each posterior is far costlier than a protocol round.
    const std::size_t chunk = 64;
    const std::size_t chunks = (cfg.samples + chunk - 1) / chunk;
    const auto parts = run_chunks<Acc>(chunks, [&](std::size_t c) {
      Rng s = zs.substream(c);
      Acc a;
      const std::size_t count = std::min(chunk, cfg.samples - c * chunk);
      for (std::size_t i = 0; i < count; ++i) {
        const Vec z = sample_source(m, ctx.dim(), s).z;
        const Vec u = sample_uniform_cell(ctx.chain().L1, s);
        const auto post = eve_key_posterior(eve, m, z, u);
        const auto t1 = leakage_terms(ctx, post, keys.key);
        const auto t2 = leakage_terms(ctx, post, uni);
        a.x.add(t1.xbar_distance);
        a.pk.add(t1.d_weighted);
        a.u.add(t2.d_weighted);
      }
      return a;
    });
    Acc all;
    for (const auto& p : parts) {
      all.x.merge(p.x);
      all.pk.merge(p.pk);
      all.u.merge(p.u);
    }
    xbar = all.x.estimate();
    d_pk = all.pk.estimate();
    d_uni = all.u.estimate();
  }
  r.add_mean("xbar_distance", xbar);
  r.add_mean("d_av_key_weights", d_pk);
  r.add_mean("d_av_uniform_weights", d_uni);
  auto bound_row = [&](const std::string& name, const Estimate& e) {
    auto f = [&](double d) { return leakage_bound(std::clamp(d, 0.0, static_cast<double>(ks) / kE), ks); };
    r.add_quantity(name, f(e.value), f(e.value - e.ci), f(e.value + e.ci));
  };
  bound_row("leakage_bound_key_weights", d_pk);
  bound_row("leakage_bound_uniform_weights", d_uni);
  add_budget_rows(r, budget);
  const double allowed = budget.value + 3.0 * (xbar.se + budget.se);
  const bool ok = xbar.value <= allowed;
  r.add_exact("within_budget", ok ? 1.0 : 0.0);
  r.summary["allowed"] = allowed;
  if (!ok) r.flags.push_back("posterior distance exceeds the flatness budget plus slack");
  return r;
}

// ---------------------------------------------------------------- tradeoff

// sigma_Q at which the quantizer runs at public rate r_p.
inline double matched_sigma_q(double sigma_1, double r_p) {
  if (r_p <= 0.0) return std::numeric_limits<double>::infinity();
  if (std::isinf(r_p)) return 0.0;
  return sigma_1 / std::sqrt(std::expm1(2.0 * r_p));
}

inline ExperimentReport run_tradeoff(const ExperimentConfig& cfg) {
  const auto m = source_model(cfg);
  const double s1 = m.sigma_1(), s2 = m.sigma_2();
  require(s2 > s1, Errc::NotDegradable, "tradeoff needs sigma_2 > sigma_1");
  const double cs = secret_key_capacity(s1, s2);
  ExperimentReport r;
  r.kind = ExperimentKind::Tradeoff;
  r.header = {"r_p", "r_bar_k", "sigma_q", "achievable_r_k"};
  double max_gap = 0.0;
  auto row = [&](double rp) {
    const double sq = matched_sigma_q(s1, rp);
    const double bound = tradeoff_bound(s1, s2, rp);
    double ach;
    if (std::isinf(sq)) ach = 0.0;
    else if (sq == 0.0) ach = cs;
    else ach = achievable_bound(s1, s2, sq);
    max_gap = std::max(max_gap, std::abs(ach - bound));
    r.rows.push_back({fmt_double(rp), fmt_double(bound), fmt_double(sq), fmt_double(ach)});
  };
  for (std::size_t i = 0; i < cfg.tradeoff_points; ++i)
    row(cfg.r_p_max * static_cast<double>(i) / static_cast<double>(cfg.tradeoff_points - 1));
  row(std::numeric_limits<double>::infinity());
  r.summary["sigma_1"] = s1;
  r.summary["sigma_2"] = s2;
  r.summary["c_s"] = cs;
  r.summary["matched_identity_max_gap"] = max_gap;
  return r;
}

// ---------------------------------------------------------------- flatness scan

inline std::vector<double> vnr_grid(std::size_t points) {
  const double lo = kPi, hi = 4.0 * kPi * kE;
  std::vector<double> g;
  for (std::size_t i = 0; i < points; ++i)
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(points - 1)));
  return g;
}

inline ExperimentReport run_flatness_scan(const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.kind = ExperimentKind::FlatnessScan;
  r.header = {"n", "sigma", "vnr", "metric", "method", "value", "ci"};
  const bool need_mc = std::any_of(cfg.metrics.begin(), cfg.metrics.end(), [](Metric m) { return m != Metric::Linf; });
  require(!need_mc || cfg.samples >= 1000, Errc::ConfigError, "Monte Carlo flatness needs samples >= 1000");
  const Rng base = Rng(cfg.seed).substream(14);
  std::vector<double> gammas = vnr_grid(cfg.gamma_points);
  std::reverse(gammas.begin(), gammas.end());  // sigma ascending

  std::vector<std::pair<int, Lattice>> family;
  if (cfg.family == "scaled_integer") {
    for (int n : cfg.dims) family.emplace_back(n, Lattice::integer(n, cfg.alpha));
  } else {
    const auto chain = experiment_chain(cfg);
    family.emplace_back(chain.n, chain.lattice(cfg.member - 1));
  }

  std::size_t blowup_checked = 0, blowup_violations = 0, monotone_violations = 0;
  double product_gap = 0.0;
  std::uint64_t stream = 0;
  for (const auto& [n, L] : family) {
    const double scale = std::pow(L.volume(), 1.0 / n);
    auto emit_series = [&](Metric metric, const std::string& method, const auto& eval) {
      double prev = std::numeric_limits<double>::infinity(), prev_ci = 0.0;
      for (double g : gammas) {
        const double sigma = scale / std::sqrt(g);
        const auto [value, ci] = eval(sigma);
        if (value > prev + 3.0 * std::hypot(ci, prev_ci) + 1e-12 * std::abs(prev)) ++monotone_violations;
        prev = value;
        prev_ci = ci;
        if (metric == Metric::Linf && g > 2.0 * kPi) {
          ++blowup_checked;
          if (value < std::pow(g / (2.0 * kPi), 0.5 * n) - 1.0) ++blowup_violations;
        }
        r.rows.push_back({std::to_string(n), fmt_double(sigma), fmt_double(g), metric_name(metric), method,
                          fmt_double(value), fmt_double(ci)});
      }
    };
    for (Metric metric : cfg.metrics) {
      const Rng rs = base.substream(++stream);
      switch (metric) {
        case Metric::Linf:
          if (cfg.family == "scaled_integer") {
            emit_series(metric, "product", [&](double s) {
              const double v = zn_scaled_flatness(cfg.alpha, s, n).value;
              const double t = linf_flatness(L, s).value;
              product_gap = std::max(product_gap, std::abs(v - t) / std::max(std::abs(t), 1e-300));
              return std::pair{v, 0.0};
            });
          }
          emit_series(metric, method_name(FlatnessMethod::Theta),
                      [&](double s) { return std::pair{linf_flatness(L, s).value, 0.0}; });
          break;
        case Metric::L1: {
          const auto method = n <= 3 ? FlatnessMethod::Quadrature : FlatnessMethod::MonteCarlo;
          std::uint64_t k = 0;
          emit_series(metric, method_name(method), [&](double s) {
            const auto f = l1_flatness(L, s, method, cfg.samples, rs.substream(++k));
            return std::pair{f.value, f.ci_halfwidth};
          });
          break;
        }
        case Metric::KL: {
          std::uint64_t k = 0;
          emit_series(metric, method_name(FlatnessMethod::MonteCarlo), [&](double s) {
            const auto f = kl_flatness(L, s, cfg.samples, rs.substream(++k));
            return std::pair{f.value, f.ci_halfwidth};
          });
          break;
        }
      }
    }
  }
  r.summary["family"] = cfg.family;
  r.summary["blowup_rows"] = blowup_checked;
  r.summary["blowup_violations"] = blowup_violations;
  r.summary["monotone_violations"] = monotone_violations;
  r.summary["product_vs_theta_max_rel"] = product_gap;
  if (blowup_violations) r.violations.push_back("Linf flatness below (gamma/2pi)^(n/2) - 1");
  return r;
}

// ---------------------------------------------------------------- resolvability

struct ResolvabilityPoint {
  int n = 0, k = 0;
  std::int64_t p = 0;
  double alpha = 0.0, sigma = 0.0, delta0 = 0.0;
  Estimate mean_divergence;
  std::size_t codes = 0;
};

// p and alpha follow choose_prime, alpha p = 2 sqrt(n); sigma puts the coarse
// lattice at gap delta0.
inline ModChannelSpec resolvability_channel(int n, int k, double delta0) {
  const auto pc = choose_prime(n);
  const double alpha = 2.0 * std::sqrt(static_cast<double>(n)) / static_cast<double>(pc.p);
  const double v2n = alpha * alpha * std::pow(static_cast<double>(pc.p), 2.0 * (n - k) / n);
  const double gamma = 2.0 * kPi * kE * std::exp(-2.0 * delta0);
  return {alpha, pc.p, std::sqrt(v2n / gamma)};
}

inline ResolvabilityPoint resolvability_point(int n, int k, const ModChannelSpec& s, std::size_t codes,
                                              std::size_t samples, const Rng& rng) {
  ResolvabilityPoint pt;
  pt.n = n;
  pt.k = k;
  pt.p = s.p;
  pt.alpha = s.alpha;
  pt.sigma = s.sigma;
  pt.delta0 = rate_gap(s, n, std::pow(s.alpha, n) * std::pow(static_cast<double>(s.p), n - k)).delta0;
  pt.codes = codes;
  Moments between;
  double within = 0.0;
  for (std::size_t c = 0; c < codes; ++c) {
    Rng cr = rng.substream(2 * c);
    IntMat code(k, n);
    for (int attempt = 0;; ++attempt) {
      require(attempt < 1000, Errc::ConstructionFailed, "no full-rank random code");
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) code(i, j) = static_cast<std::int64_t>(cr() % static_cast<std::uint64_t>(s.p));
      if (k == 0 || rank_mod_p(code, s.p) == k) break;
    }
    const auto run = resolvability_divergence(s, n, code, samples, rng.substream(2 * c + 1));
    between.add(run.divergence.value);
    within += run.divergence.se * run.divergence.se;
  }
  const double se = std::max(between.se(), std::sqrt(within) / static_cast<double>(codes));
  pt.mean_divergence = {between.mean(), kZ95 * se, se, codes};
  return pt;
}

inline ExperimentReport run_resolvability(const ExperimentConfig& cfg) {
  ExperimentReport r;
  r.kind = ExperimentKind::Resolvability;
  r.header = {"n", "p", "alpha", "k", "sigma", "delta0", "mean_divergence", "ci", "num_codes"};
  const Rng base = Rng(cfg.seed).substream(15);
  ojson means = ojson::array();
  for (int n : cfg.resolvability_dims) {
    const int k = std::clamp(static_cast<int>(std::lround(cfg.rate_fraction * n)), 1, n - (n > 1 ? 1 : 0));
    const auto s = resolvability_channel(n, k, cfg.delta0);
    std::vector<int> ks{k};
    if (cfg.controls && k != n) ks.push_back(n);
    for (int kk : ks) {
      const auto pt = resolvability_point(n, kk, s, cfg.codes, cfg.samples, base.substream(1000 * n + kk));
      r.rows.push_back({std::to_string(n), std::to_string(pt.p), fmt_double(pt.alpha), std::to_string(kk),
                        fmt_double(pt.sigma), fmt_double(pt.delta0), fmt_double(pt.mean_divergence.value),
                        fmt_double(pt.mean_divergence.ci), std::to_string(pt.codes)});
      if (kk == k)
        means.push_back({{"n", n}, {"mean", pt.mean_divergence.value}, {"ci", pt.mean_divergence.ci}});
    }
  }
  bool trend = true;
  for (std::size_t i = 1; i < means.size(); ++i) {
    const double a = means[i - 1]["mean"].get<double>(), b = means[i]["mean"].get<double>();
    const double ca = means[i - 1]["ci"].get<double>(), cb = means[i]["ci"].get<double>();
    if (b > a + std::hypot(ca, cb)) trend = false;
  }
  r.summary["means"] = means;
  r.summary["non_increasing"] = trend;
  return r;
}

// ---------------------------------------------------------------- dispatch

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::Reliability: return run_reliability(cfg);
    case ExperimentKind::Uniformity: return run_uniformity(cfg);
    case ExperimentKind::Leakage: return run_leakage(cfg);
    case ExperimentKind::Tradeoff: return run_tradeoff(cfg);
    case ExperimentKind::FlatnessScan: return run_flatness_scan(cfg);
    case ExperimentKind::Resolvability: return run_resolvability(cfg);
  }
  fail(Errc::ConfigError, "unknown experiment");
}

inline ojson report_meta(const ExperimentConfig& cfg, const ExperimentReport& r) {
  ojson j;
  j["experiment"] = experiment_name(cfg.experiment);
  j["seed"] = cfg.seed;
  j["samples"] = cfg.samples;
  j["config_hash"] = config_hash(cfg);
  j["version"] = LATSKG_VERSION;
  j["config"] = config_echo(cfg);
  j["summary"] = r.summary;
  j["violations"] = r.violations;
  j["flags"] = r.flags;
  return j;
}

}  // namespace latskg

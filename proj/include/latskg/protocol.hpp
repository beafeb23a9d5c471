#pragma once

#include <fftw3.h>

#include <Eigen/Eigenvalues>
#include <complex>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "construction.hpp"
#include "gaussian.hpp"
#include "stats.hpp"

namespace latskg {

// ---------------------------------------------------------------- source model

struct GaussianSourceModel {
  double sigma_x = 1.0, sigma_y = 1.0, sigma_z = 1.0;
  double rho_xy = 0.0, rho_xz = 0.0, rho_yz = 0.0;
  bool rho_yz_defaulted = false;

  double sigma_1() const { return sigma_x * std::sqrt(1.0 - rho_xy * rho_xy); }
  double sigma_2() const { return sigma_x * std::sqrt(1.0 - rho_xz * rho_xz); }
  double sigma_hat_y() const { return rho_xy * sigma_x; }
  double sigma_hat_z() const { return rho_xz * sigma_x; }
  // Y-hat = y_scale * Y is the MMSE estimate of X from Y.
  double y_scale() const { return rho_xy * sigma_x / sigma_y; }
  double z_scale() const { return rho_xz * sigma_x / sigma_z; }

  Eigen::Matrix3d correlation() const {
    Eigen::Matrix3d c;
    c << 1.0, rho_xy, rho_xz, rho_xy, 1.0, rho_yz, rho_xz, rho_yz, 1.0;
    return c;
  }
  Eigen::Matrix3d covariance() const {
    const Eigen::Vector3d s(sigma_x, sigma_y, sigma_z);
    return s.asDiagonal() * correlation() * s.asDiagonal();
  }
};

inline GaussianSourceModel make_source(double sx, double sy, double sz, double rxy, double rxz,
                                       std::optional<double> ryz = std::nullopt) {
  require_sigma(sx);
  require_sigma(sy);
  require_sigma(sz);
  for (double r : {rxy, rxz, ryz.value_or(0.0)})
    require(std::abs(r) < 1.0, Errc::InvalidArgument, "correlations must lie in (-1, 1)");
  require(std::abs(rxz) < std::abs(rxy), Errc::NotDegradable, "need |rho_xz| < |rho_xy| (sigma_2 > sigma_1)");
  GaussianSourceModel m{sx, sy, sz, rxy, rxz, 0.0, !ryz.has_value()};
  m.rho_yz = ryz ? *ryz : rxz / rxy;
  require(m.correlation().determinant() >= -1e-12, Errc::NotPSD, "correlation matrix is not PSD");
  return m;
}

inline GaussianSourceModel degraded_surrogate(const GaussianSourceModel& m) {
  GaussianSourceModel d = m;
  d.rho_yz = m.rho_xz / m.rho_xy;
  return d;
}

struct SourceSample {
  Vec x, y, z;
};

inline SourceSample sample_source(const GaussianSourceModel& m, int n, Rng& rng) {
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m.covariance());
  const Eigen::Matrix3d root =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  SourceSample s{Vec(n), Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d g(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d v = root * g;
    s.x[i] = v[0];
    s.y[i] = v[1];
    s.z[i] = v[2];
  }
  return s;
}

// ---------------------------------------------------------------- quantizer

struct QuantizerConfig {
  double sigma_q = 0.5;
  RegionKind key_region = RegionKind::Parallelepiped;  // R(Lambda_3)
  SamplerMode sampler = SamplerMode::Exact;
  std::uint64_t seed = 0;

  double sigma_tilde_1(const GaussianSourceModel& m) const { return std::hypot(m.sigma_1(), sigma_q); }
  double sigma_tilde_2(const GaussianSourceModel& m) const { return std::hypot(m.sigma_2(), sigma_q); }
  double sigma_tilde_x(const GaussianSourceModel& m) const { return std::hypot(m.sigma_x, sigma_q); }
};

struct VolumeConditions {
  double c1, c2, c3;  // V_i^{2/n} over sigma_Q^2, sigma~_1^2, sigma~_2^2
  bool ok1, ok2, ok3;
  bool all() const { return ok1 && ok2 && ok3; }
};

inline VolumeConditions volume_conditions(const NestedChain& c, const GaussianSourceModel& m,
                                          const QuantizerConfig& q) {
  const double two_pi_e = 2.0 * kPi * kE;
  auto g = [&](int i, double s) { return std::pow(c.volume(i), 2.0 / c.n) / (s * s); };
  VolumeConditions v{g(0, q.sigma_q), g(1, q.sigma_tilde_1(m)), g(2, q.sigma_tilde_2(m)), false, false, false};
  v.ok1 = v.c1 < two_pi_e;
  v.ok2 = v.c2 > two_pi_e;
  v.ok3 = v.c3 < two_pi_e;
  return v;
}

// ---------------------------------------------------------------- protocol

inline bool same_point(const Vec& a, const Vec& b, double tol = 1e-9) {
  return (a - b).lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, a.lpNorm<Eigen::Infinity>());
}

inline bool is_zero_coeffs(const IntVec& z) {
  return std::all_of(z.begin(), z.end(), [](std::int64_t v) { return v == 0; });
}

// Everything a round needs that depends only on (chain, config).
class ProtocolContext {
 public:
  ProtocolContext(NestedChain chain, QuantizerConfig cfg)
      : chain_(std::move(chain)),
        cfg_(cfg),
        dither_region_(chain_.L1),
        key_region_(chain_.L3, cfg.key_region) {
    require_sigma(cfg_.sigma_q);
  }

  const NestedChain& chain() const { return chain_; }
  const QuantizerConfig& config() const { return cfg_; }
  int dim() const { return chain_.n; }
  const FundamentalRegion& dither_region() const { return dither_region_; }
  const FundamentalRegion& key_region() const { return key_region_; }

  Vec q2(const Vec& x) const { return nearest_lattice_point(chain_.L2, x); }
  Vec mod_v2(const Vec& x) const { return x - q2(x); }
  Vec mod_r3(const Vec& x) const { return key_region_.residue(x); }

  // Coset tables for Lambda1/Lambda3, Lambda1/Lambda2 and Lambda2/Lambda3.
  bool has_tables() const { return tables_.has_value(); }
  void build_tables(std::size_t max_index = kMaxCosetIndex) {
    if (tables_) return;
    Tables t{CosetTable(chain_.L1, chain_.L3, max_index), CosetTable(chain_.L1, chain_.L2, max_index),
             CosetTable(chain_.L2, chain_.L3, max_index), {}, {}};
    for (const Vec& r : t.t13.representatives()) {
      t.s_of.push_back(t.t12.index(r));
      t.k_of.push_back(t.t23.index(q2(r)));
    }
    tables_ = std::move(t);
  }
  const CosetTable& t13() const { return tables().t13; }
  const CosetTable& t12() const { return tables().t12; }
  const CosetTable& t23() const { return tables().t23; }
  // For coset i of Lambda1/Lambda3: its public-message and key indices.
  std::size_t s_of(std::size_t i) const { return tables().s_of[i]; }
  std::size_t k_of(std::size_t i) const { return tables().k_of[i]; }

 private:
  struct Tables {
    CosetTable t13, t12, t23;
    std::vector<std::size_t> s_of, k_of;
  };
  const Tables& tables() const {
    if (!tables_) fail(Errc::InvalidArgument, "coset tables not built");
    return *tables_;
  }

  NestedChain chain_;
  QuantizerConfig cfg_;
  FundamentalRegion dither_region_, key_region_;
  std::optional<Tables> tables_;
};

struct AliceOutput {
  Vec x_q, s, k;
};

inline AliceOutput alice_encode(const ProtocolContext& ctx, const Vec& x, const Vec& u, Rng& rng) {
  ctx.chain().L1.check_dim(x);
  ctx.chain().L1.check_dim(u);
  AliceOutput a;
  a.x_q = randomized_round(ctx.chain().L1, ctx.config().sigma_q, x + u, rng, ctx.config().sampler);
  const Vec q = ctx.q2(a.x_q);
  a.s = a.x_q - q;
  a.k = ctx.mod_r3(q);
  return a;
}

inline bool valid_public_message(const ProtocolContext& ctx, const Vec& s) {
  if (s.size() != ctx.dim() || !ctx.chain().L1.contains(s)) return false;
  return is_zero_coeffs(closest_coeffs(ctx.chain().L2, s));
}

struct BobOutput {
  Vec x_hat_q, k_hat;
};

inline BobOutput bob_decode(const ProtocolContext& ctx, const GaussianSourceModel& m, const Vec& y,
                            const Vec& u, const Vec& s) {
  if (!valid_public_message(ctx, s))
    fail(Errc::InvalidPublicMessage, "public message is not a coset representative of Lambda1/Lambda2");
  const Vec y_hat = m.y_scale() * y;
  BobOutput b;
  b.x_hat_q = s + ctx.q2(y_hat + u - s);
  b.k_hat = ctx.mod_r3(ctx.q2(b.x_hat_q));
  return b;
}

inline Vec recombine(const ProtocolContext& ctx, const Vec& s, const Vec& k) { return ctx.mod_r3(s + k); }

// Inverse of recombine: split a Lambda1/Lambda3 representative into (s, k).
inline std::pair<Vec, Vec> decompose(const ProtocolContext& ctx, const Vec& x_bar) {
  const Vec q = ctx.q2(x_bar);
  return {x_bar - q, ctx.mod_r3(q)};
}

struct ProtocolTranscript {
  Vec u, x, y, z;
  Vec x_q, x_bar_q, s, k, k_hat, x_hat_q;
  bool success = false;        // k == k_hat
  bool reconstructed = false;  // x_hat_q == x_q
};

inline ProtocolTranscript run_round(const ProtocolContext& ctx, const GaussianSourceModel& m, Rng& rng) {
  ProtocolTranscript t;
  const auto src = sample_source(m, ctx.dim(), rng);
  t.x = src.x;
  t.y = src.y;
  t.z = src.z;
  t.u = sample_uniform_cell(ctx.chain().L1, rng);
  const auto a = alice_encode(ctx, t.x, t.u, rng);
  t.x_q = a.x_q;
  t.s = a.s;
  t.k = a.k;
  t.x_bar_q = ctx.mod_r3(a.x_q);
  const auto b = bob_decode(ctx, m, t.y, t.u, t.s);
  t.x_hat_q = b.x_hat_q;
  t.k_hat = b.k_hat;
  t.success = same_point(t.k, t.k_hat);
  t.reconstructed = same_point(t.x_q, t.x_hat_q);
  return t;
}

// The three equivalent statements of the reliability condition for one round.
struct ReliabilityCheck {
  bool reconstructed;   // x_hat_Q == x_Q
  bool quantizer_zero;  // Q_{Lambda2}(y_hat + u - x_Q) == 0
  bool in_cell;         // y_hat in x_Q - u + V(Lambda2)
  bool consistent() const { return reconstructed == quantizer_zero && quantizer_zero == in_cell; }
};

inline ReliabilityCheck check_reliability(const ProtocolContext& ctx, const GaussianSourceModel& m,
                                          const ProtocolTranscript& t) {
  const Vec d = m.y_scale() * t.y + t.u - t.x_q;
  return {t.reconstructed, is_zero_coeffs(closest_coeffs(ctx.chain().L2, d)),
          in_voronoi_cell(ctx.chain().L2, d)};
}

inline bool check_bijection(const ProtocolContext& ctx, const ProtocolTranscript& t) {
  const Vec xb = recombine(ctx, t.s, t.k);
  if (!same_point(xb, t.x_bar_q)) return false;
  const auto [s, k] = decompose(ctx, xb);
  return same_point(s, t.s) && same_point(k, t.k);
}

namespace detail {

inline nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec json_vec(const nlohmann::json& j) {
  const auto d = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(d.data(), static_cast<Eigen::Index>(d.size()));
}

}  // namespace detail

inline std::string transcript_to_json_line(const ProtocolTranscript& t) {
  nlohmann::ordered_json j;
  j["u"] = detail::vec_json(t.u);
  j["x"] = detail::vec_json(t.x);
  j["y"] = detail::vec_json(t.y);
  j["z"] = detail::vec_json(t.z);
  j["x_Q"] = detail::vec_json(t.x_q);
  j["x_bar_Q"] = detail::vec_json(t.x_bar_q);
  j["s"] = detail::vec_json(t.s);
  j["k"] = detail::vec_json(t.k);
  j["k_hat"] = detail::vec_json(t.k_hat);
  j["success"] = t.success;
  return j.dump();
}

inline ProtocolTranscript transcript_from_json_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ProtocolTranscript t;
    t.u = detail::json_vec(j.at("u"));
    t.x = detail::json_vec(j.at("x"));
    t.y = detail::json_vec(j.at("y"));
    t.z = detail::json_vec(j.at("z"));
    t.x_q = detail::json_vec(j.at("x_Q"));
    t.x_bar_q = detail::json_vec(j.at("x_bar_Q"));
    t.s = detail::json_vec(j.at("s"));
    t.k = detail::json_vec(j.at("k"));
    t.k_hat = detail::json_vec(j.at("k_hat"));
    t.success = j.at("success").get<bool>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, std::string("malformed transcript line: ") + e.what());
  }
}

// ---------------------------------------------------------------- Eve

// Posterior of X_Q mod Lambda3 given (z, u): the law of
// randomized_round(Lambda1, sigma_Q, W2 + z_hat + u) reduced mod Lambda3.
//
// p(x_Q) = f_{st2}(x_Q - c) h(c + beta (x_Q - c)), with st2^2 = s2^2 + sQ^2,
// beta = s2^2 / st2^2 and h = (1 / f_{sQ,Lambda1}) * N(0, sb^2), sb^2 = sQ^2 s2^2 / st2^2.
// h is evaluated from the Fourier series of 1/f_{sQ,Lambda1}, which is computed
// by an FFT over one cell of an LLL-reduced basis.
class EvePosterior {
 public:
  EvePosterior(const ProtocolContext& ctx, double sigma_2, double tail = 1e-13)
      : ctx_(&ctx), sigma_2_(sigma_2), tail_(tail) {
    require_sigma(sigma_2);
    const double sq = ctx.config().sigma_q;
    st2_ = std::hypot(sigma_2, sq);
    beta_ = sigma_2 * sigma_2 / (st2_ * st2_);
    sbar2_ = sq * sq * beta_;
    dual3_ = dual_lattice(ctx.chain().L3);
    build_kernel();
    build_dual_terms();
  }

  double sigma_tilde_2() const { return st2_; }
  std::size_t kernel_terms() const { return coef_.size(); }
  const std::vector<int>& grid() const { return grid_; }

  double h(const Vec& m) const {
    const Vec t = reduced_inv_ * m;
    long double acc = 0.0L;
    for (std::size_t i = 0; i < coef_.size(); ++i) {
      const double ph = 2.0 * kPi * freq_[i].dot(t);
      acc += coef_[i].real() * std::cos(ph) - coef_[i].imag() * std::sin(ph);
    }
    return static_cast<double>(acc);
  }

  // Posterior over Lambda1/Lambda3 cosets at c = z_hat + u. The unnormalised
  // mass is returned through `mass` (1 up to truncation).
  //
  // Poisson summation over each coset x + Lambda3 turns the sum into
  // (1/V3) sum_{mu in Lambda3*} T(mu) e(<mu, x - c>) with
  // T(mu) = sum_k w_k e(<l*_k, c>) exp(-2 pi^2 st2^2 |mu - beta l*_k|^2).
  std::vector<double> pmf_at(const Vec& c, double* mass = nullptr) const {
    ctx_->chain().L1.check_dim(c);
    std::vector<std::complex<double>> phase(coef_.size());
    for (std::size_t i = 0; i < coef_.size(); ++i)
      phase[i] = coef_[i] * std::polar(1.0, 2.0 * kPi * lam_[i].dot(c));
    std::vector<std::complex<double>> T(mu_.size(), 0.0);
    for (const auto& e : entries_) T[e.mu] += e.weight * phase[e.k];
    for (std::size_t m = 0; m < mu_.size(); ++m) T[m] *= std::polar(1.0, -2.0 * kPi * mu_[m].dot(c));
    const std::size_t cosets = ctx_->t13().size();
    const double v3 = ctx_->chain().L3.volume();
    std::vector<double> out(cosets);
    long double total = 0.0L;
    for (std::size_t j = 0; j < cosets; ++j) {
      long double acc = 0.0L;
      const std::complex<double>* row = coset_phase_.data() + j * mu_.size();
      for (std::size_t m = 0; m < mu_.size(); ++m)
        acc += T[m].real() * row[m].real() - T[m].imag() * row[m].imag();
      out[j] = static_cast<double>(acc / v3);
      total += acc / v3;
    }
    if (mass) *mass = static_cast<double>(total);
    for (double& v : out) v = std::max(0.0, v / static_cast<double>(total));
    return out;
  }

  // Reference evaluation by direct enumeration of Lambda1 points around c.
  std::vector<double> pmf_at_primal(const Vec& c, double* mass = nullptr) const {
    const auto& L1 = ctx_->chain().L1;
    const auto& t13 = ctx_->t13();
    std::vector<long double> acc(t13.size(), 0.0L);
    const double r = gaussian_tail_radius(ctx_->dim(), st2_, tail_);
    const double inv = 1.0 / (2.0 * st2_ * st2_);
    const double lognorm = -0.5 * ctx_->dim() * std::log(2.0 * kPi * st2_ * st2_);
    for_each_point_in_ball(L1, c, r, [&](const IntVec& z, double d2) {
      const Vec xq = L1.point(z);
      const double w = std::exp(lognorm - d2 * inv) * h(c + beta_ * (xq - c));
      acc[t13.index(xq)] += w;
    }, kMaxEnumerated);
    long double total = 0.0L;
    for (auto v : acc) total += v;
    if (mass) *mass = static_cast<double>(total);
    std::vector<double> out(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<double>(acc[i] / total);
    return out;
  }

 private:
  void build_kernel() {
    const auto& L1 = ctx_->chain().L1;
    const int n = L1.dim();
    const Mat reduced = lll_basis(L1);
    reduced_inv_ = reduced.inverse();
    dual_ = reduced_inv_.transpose();
    const Mat& dual = dual_;
    const double sq = ctx_->config().sigma_q;
    const double vol = L1.volume();
    // Grid sizes per reduced axis; an axis is refined while the coefficients
    // on its Nyquist face are not negligible.
    std::vector<int> dims(n, 16);
    for (;;) {
      std::size_t total = 1;
      for (int d : dims) total *= static_cast<std::size_t>(d);
      if (total > (std::size_t{1} << 23))
        fail(Errc::QuadratureFailure, "Fourier kernel of Eve's posterior does not resolve");
      const int last = dims[n - 1];
      const std::size_t spectral = total / last * (last / 2 + 1);
      std::vector<double> grid(total);
      fftw_complex* spec = fftw_alloc_complex(spectral);
      fftw_plan inv, fwd;
      {
        const std::lock_guard<std::mutex> lock(fftw_mutex());
        inv = fftw_plan_dft_c2r(n, dims.data(), spec, grid.data(), FFTW_ESTIMATE);
        fwd = fftw_plan_dft_r2c(n, dims.data(), grid.data(), spec, FFTW_ESTIMATE);
      }
      // f on the grid from its Fourier series (1/V) sum exp(-2 pi^2 sQ^2 |l*|^2) e(<l*, v>).
      std::vector<Vec> ks(spectral);
      std::vector<int> face(spectral, -1);
      for (std::size_t g = 0; g < spectral; ++g) {
        std::size_t rem = g;
        Vec k(n);
        for (int i = n - 1; i >= 0; --i) {
          const int size = i == n - 1 ? last / 2 + 1 : dims[i];
          int v = static_cast<int>(rem % size);
          rem /= size;
          if (i != n - 1 && v > dims[i] / 2) v -= dims[i];
          if (2 * std::abs(v) == dims[i]) face[g] = i;
          k[i] = v;
        }
        ks[g] = k;
        spec[g][0] = std::exp(-2.0 * kPi * kPi * sq * sq * (dual * k).squaredNorm()) / vol;
        spec[g][1] = 0.0;
      }
      fftw_execute(inv);
      for (double& v : grid) v = 1.0 / v;
      fftw_execute(fwd);
      coef_.clear();
      freq_.clear();
      const double scale = 1.0 / static_cast<double>(total);
      const double c0 = std::abs(spec[0][0]) * scale;
      std::vector<double> edge(n, 0.0);
      for (std::size_t g = 0; g < spectral; ++g) {
        const std::complex<double> a(spec[g][0] * scale, spec[g][1] * scale);
        if (face[g] >= 0) {
          edge[face[g]] = std::max(edge[face[g]], std::abs(a));
          continue;
        }
        const Vec& k = ks[g];
        const double damp = std::exp(-2.0 * kPi * kPi * sbar2_ * (dual * k).squaredNorm());
        // Half spectrum: interior last-axis frequencies stand for +k and -k.
        const double mult = k[n - 1] == 0 ? 1.0 : 2.0;
        const std::complex<double> w = a * damp * mult;
        if (g != 0 && std::abs(w) < 1e-16 * c0) continue;
        coef_.push_back(w);
        freq_.push_back(k);
      }
      {
        const std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(inv);
        fftw_destroy_plan(fwd);
      }
      fftw_free(spec);
      grid_ = dims;
      bool done = true;
      for (int i = 0; i < n; ++i)
        if (edge[i] > 1e-12 * c0) {
          dims[i] *= 2;
          done = false;
        }
      if (done) break;
    }
  }

  // Everything in the dual-side sum that does not depend on c.
  void build_dual_terms() {
    const auto& t13 = ctx_->t13();
    const double a = 2.0 * kPi * kPi * st2_ * st2_;
    const double radius = std::sqrt(std::log(1.0 / tail_) / a);
    std::unordered_map<IntVec, std::size_t, IntVecHash> index;
    std::vector<IntVec> keys;
    lam_.clear();
    for (std::size_t i = 0; i < coef_.size(); ++i) {
      lam_.push_back(dual_ * freq_[i]);
      for_each_point_in_ball(dual3_, beta_ * lam_[i], radius, [&](const IntVec& z, double d2) {
        auto [it, fresh] = index.emplace(z, keys.size());
        if (fresh) keys.push_back(z);
        entries_.push_back({it->second, i, std::exp(-a * d2)});
      });
    }
    mu_.clear();
    for (const auto& z : keys) mu_.push_back(dual3_.point(z));
    const std::size_t cells = mu_.size() * t13.size();
    if (cells > (std::size_t{1} << 26)) fail(Errc::EnumerationTooLarge, "posterior phase table too large");
    coset_phase_.resize(cells);
    for (std::size_t j = 0; j < t13.size(); ++j)
      for (std::size_t m = 0; m < mu_.size(); ++m)
        coset_phase_[j * mu_.size() + m] = std::polar(1.0, 2.0 * kPi * mu_[m].dot(t13.representative(j)));
  }

  struct DualEntry {
    std::size_t mu, k;
    double weight;
  };

  static std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
  }

  const ProtocolContext* ctx_;
  double sigma_2_, tail_;
  double st2_ = 0.0, beta_ = 0.0, sbar2_ = 0.0;
  std::vector<int> grid_;
  Mat reduced_inv_, dual_;
  Lattice dual3_ = Lattice::integer(1);
  std::vector<Vec> lam_, mu_;
  std::vector<DualEntry> entries_;
  std::vector<std::complex<double>> coset_phase_;
  std::vector<std::complex<double>> coef_;
  std::vector<Vec> freq_;
};

inline std::vector<double> eve_key_posterior(const EvePosterior& eve, const GaussianSourceModel& m,
                                             const Vec& z, const Vec& u) {
  return eve.pmf_at(m.z_scale() * z + u);
}

// Leakage proxies for one posterior over Lambda1/Lambda3 cosets.
struct LeakageTerms {
  double xbar_distance;  // V(p_{Xbar|z,u}, U)
  double d_weighted;     // sum_k w_k V(p_{S|z,u,k}, U_S) + V(U_S, p_{S|z,u})
};

inline LeakageTerms leakage_terms(const ProtocolContext& ctx, const std::vector<double>& post,
                                  const std::vector<double>& key_weights) {
  const std::size_t ns = ctx.t12().size(), nk = ctx.t23().size();
  require(key_weights.size() == nk, Errc::DimensionMismatch, "key weights have wrong size");
  std::vector<double> joint(ns * nk, 0.0), ps(ns, 0.0), pk(nk, 0.0);
  for (std::size_t i = 0; i < post.size(); ++i) {
    joint[ctx.k_of(i) * ns + ctx.s_of(i)] += post[i];
    ps[ctx.s_of(i)] += post[i];
    pk[ctx.k_of(i)] += post[i];
  }
  const double us = 1.0 / static_cast<double>(ns);
  double cond = 0.0;
  for (std::size_t k = 0; k < nk; ++k) {
    if (pk[k] <= 0.0) {
      cond += key_weights[k] * 2.0;
      continue;
    }
    double v = 0.0;
    for (std::size_t s = 0; s < ns; ++s) v += std::abs(joint[k * ns + s] / pk[k] - us);
    cond += key_weights[k] * v;
  }
  return {distance_to_uniform(post), cond + distance_to_uniform(ps)};
}

// Upper bound on I(K; S, Z, U) from d_av (valid when d_av <= 1/2).
inline double leakage_bound(double d_av, std::size_t key_space) {
  if (d_av <= 0.0) return 0.0;
  return d_av * std::log(static_cast<double>(key_space) / d_av);
}

// ---------------------------------------------------------------- rates

inline double secret_key_capacity(double sigma_1, double sigma_2) {
  require_sigma(sigma_1);
  require(sigma_2 >= sigma_1, Errc::NotDegradable, "need sigma_2 >= sigma_1");
  return 0.5 * std::log(sigma_2 * sigma_2 / (sigma_1 * sigma_1));
}

inline double tradeoff_bound(double sigma_1, double sigma_2, double r_p) {
  require(r_p >= 0.0, Errc::InvalidArgument, "R_P must be nonnegative");
  const double cs = secret_key_capacity(sigma_1, sigma_2);
  if (std::isinf(r_p)) return cs;
  const double e = std::exp(-2.0 * r_p);
  const double ratio = sigma_2 * sigma_2 / (sigma_1 * sigma_1);
  return 0.5 * std::log(e + ratio * (-std::expm1(-2.0 * r_p)));
}

inline double achievable_bound(double sigma_1, double sigma_2, double sigma_q) {
  require_sigma(sigma_1);
  require_sigma(sigma_2);
  require_sigma(sigma_q);
  const double q = sigma_q * sigma_q;
  return 0.5 * std::log((sigma_2 * sigma_2 + q) / (sigma_1 * sigma_1 + q));
}

// Public rate at which the quantizer with sigma_Q operates.
inline double matched_public_rate(double sigma_1, double sigma_q) {
  require_sigma(sigma_1);
  require_sigma(sigma_q);
  return 0.5 * std::log((sigma_1 * sigma_1 + sigma_q * sigma_q) / (sigma_q * sigma_q));
}

struct RateReport {
  double r_p, r_k, c_s, r_bar_k, achievable;
};

inline RateReport rate_report(const NestedChain& c, const GaussianSourceModel& m, const QuantizerConfig& q) {
  const auto r = chain_rates(c);
  const double s1 = m.sigma_1(), s2 = m.sigma_2();
  return {r.r_p, r.r_k, secret_key_capacity(s1, s2), tradeoff_bound(s1, s2, r.r_p),
          achievable_bound(s1, s2, q.sigma_q)};
}

}  // namespace latskg

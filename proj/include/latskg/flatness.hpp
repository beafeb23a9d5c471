#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gaussian.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace latskg {

enum class Metric { Linf, L1, KL };
enum class FlatnessMethod { Theta, DualTheta, Quadrature, MonteCarlo };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::Linf: return "linf";
    case Metric::L1: return "l1";
    case Metric::KL: return "kl";
  }
  return "?";
}

inline const char* method_name(FlatnessMethod m) {
  switch (m) {
    case FlatnessMethod::Theta: return "theta";
    case FlatnessMethod::DualTheta: return "dual_theta";
    case FlatnessMethod::Quadrature: return "quadrature";
    case FlatnessMethod::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

struct FlatnessReport {
  Metric metric = Metric::Linf;
  double sigma = 0.0;
  double vnr = 0.0;
  double value = 0.0;
  double ci_halfwidth = 0.0;
  double se = 0.0;
  FlatnessMethod method = FlatnessMethod::Theta;
  std::size_t samples = 0;
  // Linf only: both evaluations and the raw theta value. The primal copies
  // the dual when its enumeration would be too large.
  double theta = 0.0;
  double primal_value = 0.0;
  double dual_value = 0.0;
};

// Sum over nonzero lattice points of exp(-pi tau |lambda|^2), in extended precision.
inline long double theta_tail(const Lattice& L, double tau, double rel_tol = 1e-18) {
  require(tau > 0.0, Errc::InvalidArgument, "tau must be positive");
  const int n = L.dim();
  const double sigma = 1.0 / std::sqrt(2.0 * kPi * tau);
  const double r = gaussian_tail_radius(n, sigma, rel_tol / 10.0);
  const Mat& B = L.basis();
  const long double a = static_cast<long double>(kPi) * tau;
  long double acc = 0.0L;
  for_each_point_in_ball(L, Vec::Zero(n), r, [&](const IntVec& z, double) {
    long double norm2 = 0.0L;
    bool zero = true;
    for (int i = 0; i < n; ++i) {
      long double c = 0.0L;
      for (int j = 0; j < n; ++j) c += static_cast<long double>(B(i, j)) * z[j];
      norm2 += c * c;
      zero = zero && z[i] == 0;
    }
    if (!zero) acc += std::exp(-a * norm2);
  });
  return acc;
}

inline double theta_series(const Lattice& L, double tau, double rel_tol = 1e-15) {
  return static_cast<double>(1.0L + theta_tail(L, tau, rel_tol));
}

inline FlatnessReport linf_flatness(const Lattice& L, double sigma) {
  require_sigma(sigma);
  const int n = L.dim();
  FlatnessReport r;
  r.metric = Metric::Linf;
  r.sigma = sigma;
  r.vnr = vnr(L, sigma);
  const double tau = 1.0 / (2.0 * kPi * sigma * sigma);
  const long double scale =
      std::pow(static_cast<long double>(r.vnr) / (2.0L * static_cast<long double>(kPi)), 0.5L * n);
  const double primal_terms = ball_volume(n, gaussian_tail_radius(n, sigma, 1e-19)) / L.volume();
  // Dual form sums only nonzero dual points, so it stays accurate for tiny values.
  const double dual_tau = 2.0 * kPi * sigma * sigma;
  const double dual_sigma = 1.0 / std::sqrt(2.0 * kPi * dual_tau);
  const double dual_terms =
      ball_volume(n, gaussian_tail_radius(n, dual_sigma, 1e-19)) * L.volume();
  const bool primal = primal_terms < 5e6 || dual_terms >= 5e6;
  if (primal) {
    const long double tail = theta_tail(L, tau);
    r.theta = static_cast<double>(1.0L + tail);
    r.primal_value = static_cast<double>(scale * (1.0L + tail) - 1.0L);
  }
  if (dual_terms < 5e6) {
    r.dual_value = static_cast<double>(theta_tail(dual_lattice(L), dual_tau));
    r.value = r.dual_value;
    r.method = FlatnessMethod::DualTheta;
    if (!primal) {
      r.primal_value = r.dual_value;
      r.theta = static_cast<double>((1.0L + static_cast<long double>(r.dual_value)) / scale);
    }
  } else {
    r.dual_value = r.primal_value;
    r.value = r.primal_value;
    r.method = FlatnessMethod::Theta;
  }
  return r;
}

struct ScaledIntegerFlatness {
  double value;      // exact flatness of (alpha Z)^n
  double eps_1d;     // flatness of alpha Z
  double bound_1d;   // 4 exp(-2 pi^2 sigma^2 / alpha^2)
};

inline ScaledIntegerFlatness zn_scaled_flatness(double alpha, double sigma, int n) {
  require(alpha > 0.0, Errc::InvalidArgument, "alpha must be positive");
  require_sigma(sigma);
  require(n >= 1, Errc::InvalidArgument, "n must be positive");
  const double e1 = linf_flatness(Lattice::integer(1, alpha), sigma).value;
  const double value = std::expm1(n * std::log1p(e1));
  const double bound = 4.0 * std::exp(-2.0 * kPi * kPi * sigma * sigma / (alpha * alpha));
  return {value, e1, bound};
}

namespace detail {

inline FlatnessReport l1_quadrature(const Lattice& L, double sigma) {
  const int n = L.dim();
  PeriodicGaussian pg(L, sigma);
  FlatnessReport r;
  r.metric = Metric::L1;
  r.sigma = sigma;
  r.vnr = vnr(L, sigma);
  r.method = FlatnessMethod::Quadrature;
  const Mat& B = L.basis();
  if (n == 1) {
    auto f = [&](double t) {
      Vec x(1);
      x[0] = B(0, 0) * t;
      return pg.deviation(x);
    };
    const auto q = integrate_abs(f, 0.0, 1.0, 1e-10);
    r.value = q.value;
    r.ci_halfwidth = q.error;
    return r;
  }
  // Periodic integrand: midpoint rule on a doubling tensor grid.
  auto grid = [&](int m) {
    long double acc = 0.0L;
    const std::size_t total = static_cast<std::size_t>(std::pow(m, n));
    std::vector<int> idx(n, 0);
    Vec t(n);
    for (std::size_t k = 0; k < total; ++k) {
      for (int i = 0; i < n; ++i) t[i] = (idx[i] + 0.5) / m;
      acc += std::abs(pg.deviation(B * t));
      for (int i = n - 1; i >= 0; --i) {
        if (++idx[i] < m) break;
        idx[i] = 0;
      }
    }
    return static_cast<double>(acc / static_cast<long double>(total));
  };
  const int max_m = n == 2 ? 1024 : 128;
  int m = 16;
  double prev = grid(m);
  double err = 0.0;
  double cur = prev;
  while (m < max_m) {
    m *= 2;
    cur = grid(m);
    err = std::abs(cur - prev);
    if (err <= 1e-10 || err <= 1e-7 * cur) break;
    prev = cur;
  }
  r.value = cur;
  r.ci_halfwidth = err;
  r.samples = static_cast<std::size_t>(std::pow(m, n));
  return r;
}

}  // namespace detail

inline FlatnessReport l1_flatness(const Lattice& L, double sigma, FlatnessMethod method,
                                  std::size_t budget = 100000, const Rng& rng = Rng(0)) {
  require_sigma(sigma);
  if (method == FlatnessMethod::Quadrature) {
    if (L.dim() > 3) fail(Errc::MethodUnsupported, "L1 quadrature supports n <= 3");
    return detail::l1_quadrature(L, sigma);
  }
  if (method != FlatnessMethod::MonteCarlo)
    fail(Errc::MethodUnsupported, "L1 flatness needs quadrature or monte_carlo");
  PeriodicGaussian pg(L, sigma);
  const auto parts = run_chunks<Moments>(chunk_count(budget), [&](std::size_t c) {
    Rng s = rng.substream(c);
    Moments m;
    for (std::size_t i = 0; i < chunk_size(budget, c); ++i)
      m.add(std::abs(pg.deviation(sample_uniform_cell(L, s))));
    return m;
  });
  Moments all;
  for (const auto& p : parts) all.merge(p);
  FlatnessReport r;
  r.metric = Metric::L1;
  r.sigma = sigma;
  r.vnr = vnr(L, sigma);
  r.method = FlatnessMethod::MonteCarlo;
  r.value = all.mean();
  r.se = all.se();
  r.ci_halfwidth = kZ95 * r.se;
  r.samples = budget;
  return r;
}

// Mean of log(V f(W mod R)) under W ~ N(0, sigma^2 I): log V - h(f).
// When eps_inf < 1 the zero-mean term 1/(V f) - 1 is added per sample; then
// each term log t + 1/t - 1 is nonnegative and the variance drops to O(eps^4).
inline FlatnessReport kl_flatness(const Lattice& L, double sigma, std::size_t samples,
                                  const Rng& rng) {
  require_sigma(sigma);
  require(samples >= 1000, Errc::InvalidArgument, "kl_flatness needs at least 1000 samples");
  PeriodicGaussian pg(L, sigma);
  const FundamentalRegion region(L);
  const double logv = std::log(L.volume());
  const int n = L.dim();
  const bool control = linf_flatness(L, sigma).value < 1.0;
  const auto parts = run_chunks<Moments>(chunk_count(samples), [&](std::size_t c) {
    Rng s = rng.substream(c);
    Moments m;
    for (std::size_t i = 0; i < chunk_size(samples, c); ++i) {
      const Vec w = region.residue(sample_normal_vector(n, sigma, s));
      if (control) {
        const double d = pg.deviation(w);
        m.add(std::log1p(d) - d / (1.0 + d));
      } else {
        m.add(logv + pg.log_density(w));
      }
    }
    return m;
  });
  Moments all;
  for (const auto& p : parts) all.merge(p);
  FlatnessReport r;
  r.metric = Metric::KL;
  r.sigma = sigma;
  r.vnr = vnr(L, sigma);
  r.method = FlatnessMethod::MonteCarlo;
  r.value = all.mean();
  r.se = all.se();
  r.ci_halfwidth = kZ95 * r.se;
  r.samples = samples;
  return r;
}

struct QuotientCapacity {
  Estimate chain;    // C(coarse) - C(fine), independent streams
  Estimate direct;   // divergence form
  Estimate coarse_kl;
  Estimate fine_kl;
  std::size_t index = 1;
};

inline Estimate to_estimate(const FlatnessReport& r) {
  return {r.value, r.ci_halfwidth, r.se, r.samples};
}

inline QuotientCapacity quotient_capacity(const Lattice& fine, const Lattice& coarse, double sigma,
                                          std::size_t samples, const Rng& rng) {
  require_sigma(sigma);
  const IntMat m = relative_basis(fine, coarse);
  const double det = std::abs(m.cast<double>().determinant());
  QuotientCapacity q;
  q.index = static_cast<std::size_t>(std::llround(det));
  if (q.index == 1) {
    q.chain = q.direct = {0.0, 0.0, 0.0, samples};
    q.coarse_kl = q.fine_kl = {0.0, 0.0, 0.0, 0};
    return q;
  }
  q.coarse_kl = to_estimate(kl_flatness(coarse, sigma, samples, rng.substream(1)));
  q.fine_kl = to_estimate(kl_flatness(fine, sigma, samples, rng.substream(2)));
  const double se = std::hypot(q.coarse_kl.se, q.fine_kl.se);
  q.chain = {q.coarse_kl.value - q.fine_kl.value, kZ95 * se, se, samples};

  PeriodicGaussian pc(coarse, sigma), pf(fine, sigma);
  const double logn = std::log(static_cast<double>(q.index));
  const FundamentalRegion region(coarse);
  const Rng base = rng.substream(3);
  const int n = fine.dim();
  const auto parts = run_chunks<Moments>(chunk_count(samples), [&](std::size_t c) {
    Rng s = base.substream(c);
    Moments mm;
    for (std::size_t i = 0; i < chunk_size(samples, c); ++i) {
      const Vec w = region.residue(sample_normal_vector(n, sigma, s));
      mm.add(logn + pc.log_density(w) - pf.log_density(w));
    }
    return mm;
  });
  Moments all;
  for (const auto& p : parts) all.merge(p);
  q.direct = all.estimate();
  return q;
}

// Bisection in log sigma; the flatness factors decrease in sigma.
inline double smoothing_parameter(const Lattice& L, double eps_target, Metric metric,
                                  std::size_t budget = 100000, const Rng& rng = Rng(0)) {
  require(eps_target > 0.0, Errc::InvalidArgument, "eps_target must be positive");
  require(metric != Metric::KL, Errc::MethodUnsupported, "smoothing parameter is Linf or L1");
  const double scale = std::pow(L.volume(), 1.0 / L.dim());
  auto eval = [&](double s) -> FlatnessReport {
    if (metric == Metric::Linf) return linf_flatness(L, s);
    return L.dim() <= 3 ? l1_flatness(L, s, FlatnessMethod::Quadrature)
                        : l1_flatness(L, s, FlatnessMethod::MonteCarlo, budget, rng);
  };
  double lo = 0.05 * scale, hi = 5.0 * scale;
  const auto rlo = eval(lo), rhi = eval(hi);
  if (!(rlo.value >= eps_target && rhi.value <= eps_target))
    fail(Errc::NonBracketed, "target flatness not bracketed on the search interval");
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    const auto r = eval(mid);
    const double tol = metric == Metric::Linf ? 1e-6 * eps_target : r.ci_halfwidth;
    if (std::abs(r.value - eps_target) <= tol && (metric == Metric::L1 || hi / lo < 1.0 + 1e-9))
      return mid;
    if (r.value > eps_target)
      lo = mid;
    else
      hi = mid;
    if (hi / lo < 1.0 + 1e-13) return mid;
  }
  return std::sqrt(lo * hi);
}

}  // namespace latskg

#pragma once

#include <cmath>
#include <vector>

#include "construction.hpp"
#include "flatness.hpp"
#include "quadrature.hpp"

namespace latskg {

struct ModChannelSpec {
  double alpha = 1.0;
  std::int64_t p = 2;
  double sigma = 1.0;

  void validate() const {
    require(alpha > 0.0, Errc::InvalidArgument, "alpha must be positive");
    require(is_prime(p), Errc::InvalidArgument, "p must be prime");
    require_sigma(sigma);
  }
  double period() const { return alpha * static_cast<double>(p); }
  Lattice fine() const { return Lattice::integer(1, alpha); }
  Lattice coarse() const { return Lattice::integer(1, period()); }
};

// log sum_k f_sigma(y + k T) for the 1D lattice TZ.
inline double log_fold_1d(double T, double sigma, double y) {
  const double r = y - T * std::round(y / T);
  const double reach = r * r > 0 ? std::abs(r) : 0.0;
  const double w = reach + 9.0 * sigma;  // tail below 1e-17 relative
  const auto kmax = static_cast<long>(std::ceil(w / T)) + 1;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  long double acc = 0.0L;
  const double m = r * r;
  for (long k = -kmax; k <= kmax; ++k) {
    const double d = r + static_cast<double>(k) * T;
    const double e = (d * d - m) * inv;
    if (e < 800.0) acc += std::exp(-e);
  }
  return -m * inv + static_cast<double>(std::log(acc)) - 0.5 * std::log(2.0 * kPi * sigma * sigma);
}

inline double channel_log_density(const ModChannelSpec& s, std::int64_t x, double y) {
  return log_fold_1d(s.period(), s.sigma, y - s.alpha * static_cast<double>(x));
}

inline double output_log_density(const ModChannelSpec& s, double y) {
  return log_fold_1d(s.alpha, s.sigma, y) - std::log(static_cast<double>(s.p));
}

inline double renyi_entropy(const std::vector<double>& pmf, double rho) {
  require(rho > 0.0 && rho <= 1.0, Errc::InvalidArgument, "rho must lie in (0, 1]");
  double total = 0.0;
  for (double v : pmf) {
    require(v >= 0.0, Errc::InvalidDistribution, "negative probability");
    total += v;
  }
  require(std::abs(total - 1.0) <= 1e-9, Errc::InvalidDistribution, "pmf does not sum to 1");
  long double acc = 0.0L;
  for (double v : pmf)
    if (v > 0.0) acc += std::pow(static_cast<long double>(v), 1.0L + rho);
  return static_cast<double>(-std::log(acc) / rho);
}

namespace detail {

// Integral over one coarse cell of sum_x (1/p) W_x(y) g(L_x(y)).
template <class G>
QuadratureResult channel_expectation(const ModChannelSpec& s, G&& g, double rel_tol = 1e-11) {
  const double pinv = 1.0 / static_cast<double>(s.p);
  auto integrand = [&](double y) {
    const double lo = output_log_density(s, y);
    long double acc = 0.0L;
    for (std::int64_t x = 0; x < s.p; ++x) {
      const double lw = channel_log_density(s, x, y);
      acc += std::exp(lw) * g(lw - lo);
    }
    return static_cast<double>(acc * pinv);
  };
  return composite_gauss(integrand, 0.0, s.period(), rel_tol, 1e-300, static_cast<int>(4 * s.p));
}

// psi for any real rho (negative values feed the finite-difference check).
inline double psi_any(const ModChannelSpec& s, double rho) {
  s.validate();
  if (rho == 0.0) return 0.0;
  const auto num = channel_expectation(s, [&](double l) { return std::expm1(rho * l); }, 1e-10);
  const auto den = channel_expectation(s, [](double) { return 1.0; }, 1e-12);
  return std::log1p(num.value / den.value);
}

}  // namespace detail

inline double psi(const ModChannelSpec& s, double rho) {
  require(rho >= 0.0 && rho <= 1.0, Errc::InvalidArgument, "rho must lie in [0, 1]");
  return detail::psi_any(s, rho);
}

// I(X;Y) for uniform input, equal to psi'(0).
inline double mod_channel_capacity(const ModChannelSpec& s) {
  s.validate();
  const auto m1 = detail::channel_expectation(s, [](double l) { return l; });
  const auto den = detail::channel_expectation(s, [](double) { return 1.0; });
  return m1.value / den.value;
}

struct Curvature {
  double value;       // variance form
  double finite_diff; // (psi(h) - 2 psi(0) + psi(-h)) / h^2
};

inline Curvature psi_curvature_at_zero(const ModChannelSpec& s, double h = 1e-3) {
  s.validate();
  const auto den = detail::channel_expectation(s, [](double) { return 1.0; });
  const auto m1 = detail::channel_expectation(s, [](double l) { return l; });
  const auto m2 = detail::channel_expectation(s, [](double l) { return l * l; });
  const double mean = m1.value / den.value;
  const double var = std::max(0.0, m2.value / den.value - mean * mean);
  const double fd = (detail::psi_any(s, h) + detail::psi_any(s, -h)) / (h * h);
  return {var, fd};
}

// psi of the n-fold product channel by explicit n-dimensional quadrature
// over every input tuple; does not use the factorisation.
inline double psi_product(const ModChannelSpec& s, double rho, int n, int panels = 0) {
  s.validate();
  require(n >= 1 && n <= 3, Errc::InvalidArgument, "psi_product supports n <= 3");
  using boost::math::quadrature::gauss;
  const auto& ab = gauss<double, 20>::abscissa();
  const auto& wt = gauss<double, 20>::weights();
  if (panels == 0) panels = static_cast<int>(4 * s.p);
  std::vector<double> nodes, weights;
  const double h = s.period() / panels;
  for (int k = 0; k < panels; ++k) {
    const double mid = (k + 0.5) * h, half = 0.5 * h;
    for (std::size_t i = 0; i < ab.size(); ++i) {
      if (ab[i] == 0.0) {
        nodes.push_back(mid);
        weights.push_back(wt[i] * half);
        continue;
      }
      nodes.push_back(mid - ab[i] * half);
      weights.push_back(wt[i] * half);
      nodes.push_back(mid + ab[i] * half);
      weights.push_back(wt[i] * half);
    }
  }
  const std::size_t m = nodes.size();
  const auto p = static_cast<std::size_t>(s.p);
  // Per-letter tables: W_x(y) and (W o U)(y) at every node.
  std::vector<double> lw(p * m), lo(m);
  for (std::size_t j = 0; j < m; ++j) {
    lo[j] = output_log_density(s, nodes[j]);
    for (std::size_t x = 0; x < p; ++x)
      lw[x * m + j] = channel_log_density(s, static_cast<std::int64_t>(x), nodes[j]);
  }
  std::size_t tuples = 1;
  for (int i = 0; i < n; ++i) tuples *= p;
  long double num = 0.0L, den = 0.0L;
  std::vector<std::size_t> j(n, 0), x(n, 0);
  std::size_t grid = 1;
  for (int i = 0; i < n; ++i) grid *= m;
  for (std::size_t g = 0; g < grid; ++g) {
    std::size_t rem = g;
    double w = 1.0, lout = 0.0;
    for (int i = 0; i < n; ++i) {
      j[i] = rem % m;
      rem /= m;
      w *= weights[j[i]];
      lout += lo[j[i]];
    }
    long double inner_num = 0.0L, inner_den = 0.0L;
    for (std::size_t t = 0; t < tuples; ++t) {
      std::size_t r = t;
      double lwn = 0.0;
      for (int i = 0; i < n; ++i) {
        lwn += lw[(r % p) * m + j[i]];
        r /= p;
      }
      const double wn = std::exp(lwn);
      inner_num += wn * std::expm1(rho * (lwn - lout));
      inner_den += wn;
    }
    num += w * inner_num;
    den += w * inner_den;
  }
  return static_cast<double>(std::log1p(num / den));
}

struct RateGap {
  double delta0;
  double gamma;
  double rate;      // (1/n) log(|Lambda_f^n / Lambda|) in nats
  double capacity;  // C(Lambda_f / Lambda_c, sigma^2)
  bool rate_condition;
};

inline RateGap rate_gap(const ModChannelSpec& s, int n, double v_target) {
  s.validate();
  require(v_target > 0.0, Errc::InvalidArgument, "V_target must be positive");
  RateGap g;
  g.gamma = std::pow(v_target, 2.0 / n) / (s.sigma * s.sigma);
  g.delta0 = 0.5 * std::log(2.0 * kPi * kE / g.gamma);
  g.rate = std::log(s.period()) - std::log(v_target) / n;
  g.capacity = mod_channel_capacity(s);
  g.rate_condition = g.rate > g.capacity;
  return g;
}

struct ResolvabilityRun {
  int n = 0;
  int k = 0;
  double rate = 0.0;
  double rate_gap = 0.0;
  Estimate divergence;  // chain-rule estimator
  Estimate direct;      // divergence-form estimator
};

// D(W^n o U_C || W^n o U^n) as C(Lambda_f^n / Lambda) with Lambda = alpha(pZ^n + C).
// `code` is k x n (rows span C).
inline ResolvabilityRun resolvability_divergence(const ModChannelSpec& s, int n, const IntMat& code,
                                                 std::size_t samples, const Rng& rng) {
  s.validate();
  require(code.rows() == 0 || code.cols() == n, Errc::DimensionMismatch, "code must be k x n");
  const int k = static_cast<int>(code.rows());
  if (k > 0 && rank_mod_p(code, s.p) < k) fail(Errc::RankDeficientCode, "code is not full rank");
  const IntMat g = k > 0 ? IntMat(code.transpose()) : IntMat(n, 0);
  const Lattice L = construction_a(g, s.p, s.alpha);
  const Lattice F = Lattice::integer(n, s.alpha);
  ResolvabilityRun r;
  r.n = n;
  r.k = k;
  r.rate = static_cast<double>(k) / n * std::log(static_cast<double>(s.p));
  r.rate_gap = 0.5 * std::log(2.0 * kPi * kE / vnr(L, s.sigma));
  const auto q = quotient_capacity(F, L, s.sigma, samples, rng);
  r.divergence = q.chain;
  r.direct = q.direct;
  return r;
}

}  // namespace latskg

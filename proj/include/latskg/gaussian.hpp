#pragma once

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "lattice.hpp"
#include "rng.hpp"

namespace latskg {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kE = std::numbers::e;

inline double gaussian_log_density(const Vec& x, double sigma) {
  require_sigma(sigma);
  const double n = static_cast<double>(x.size());
  return -x.squaredNorm() / (2.0 * sigma * sigma) - 0.5 * n * std::log(2.0 * kPi * sigma * sigma);
}

inline double gaussian_density(const Vec& x, double sigma) {
  return std::exp(gaussian_log_density(x, sigma));
}

// Smallest r with P(|N(0, sigma^2 I_n)| > r) below tail.
inline double gaussian_tail_radius(int n, double sigma, double tail) {
  require_sigma(sigma);
  const double q = boost::math::gamma_q_inv(0.5 * n, tail);
  return sigma * std::sqrt(2.0 * q);
}

inline double ball_volume(int n, double r = 1.0) {
  return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0) * std::pow(r, n);
}

struct GaussianProduct {
  double sigma_sum;  // sqrt(s1^2 + s2^2)
  double sigma_bar;  // 1/sb^2 = 1/s1^2 + 1/s2^2
  Vec center_bar;
};

inline GaussianProduct gaussian_product_decompose(double sigma1, double sigma2, const Vec& c1,
                                                  const Vec& c2) {
  require_sigma(sigma1);
  require_sigma(sigma2);
  require(c1.size() == c2.size(), Errc::DimensionMismatch, "centers differ in dimension");
  const double s1 = sigma1 * sigma1, s2 = sigma2 * sigma2;
  const double sb2 = s1 * s2 / (s1 + s2);
  return {std::sqrt(s1 + s2), std::sqrt(sb2), (sb2 / s1) * c1 + (sb2 / s2) * c2};
}

// Log of sum_{lambda} exp(-|lambda - x|^2 / (2 sigma^2)) over the lattice, with
// the cutoff radius extended past the nearest point so that the relative
// truncation error stays below rel_tol even when x sits far from every point.
inline double log_gaussian_lattice_sum(const Lattice& L, double sigma, const Vec& x,
                                       double rel_tol) {
  require_sigma(sigma);
  const Vec near = nearest_lattice_point(L, x);
  const double dmin2 = (x - near).squaredNorm();
  const double r = std::sqrt(dmin2) + gaussian_tail_radius(L.dim(), sigma, rel_tol / 10.0);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  long double acc = 0.0L;
  for_each_point_in_ball(L, x, r, [&](const IntVec&, double d2) {
    acc += std::exp(-static_cast<long double>(d2 - dmin2) * inv);
  });
  return -dmin2 * inv + static_cast<double>(std::log(acc));
}

inline double periodic_log_density(const Lattice& L, double sigma, const Vec& x,
                                   double rel_tol = 1e-12) {
  return log_gaussian_lattice_sum(L, sigma, x, rel_tol) -
         0.5 * L.dim() * std::log(2.0 * kPi * sigma * sigma);
}

inline double periodic_density(const Lattice& L, double sigma, const Vec& x,
                               double rel_tol = 1e-12) {
  require(rel_tol > 0.0 && rel_tol <= 1e-3, Errc::InvalidArgument, "rel_tol must lie in (0, 1e-3]");
  return std::exp(periodic_log_density(L, sigma, x, rel_tol));
}

// Evaluator of the folded Gaussian f_{sigma,L} for a fixed (L, sigma). In the
// flat regime V f - 1 is summed over the dual lattice, which avoids
// cancellation; otherwise the primal sum is used.
class PeriodicGaussian {
 public:
  PeriodicGaussian(const Lattice& L, double sigma, double rel_tol = 1e-13)
      : L_(L), sigma_(sigma), rel_tol_(rel_tol) {
    require_sigma(sigma);
    const int n = L.dim();
    const double v = L.volume();
    const double rp = gaussian_tail_radius(n, sigma, rel_tol / 10.0);
    const double s_dual = 1.0 / (2.0 * kPi * sigma);
    const double rd = gaussian_tail_radius(n, s_dual, 1e-17);
    const double primal_terms = ball_volume(n, rp) / v + 1.0;
    const double dual_terms = ball_volume(n, rd) * v + 1.0;
    const double gamma = vnr(L, sigma);
    use_dual_ = dual_terms < 2e5 && dual_terms < 4.0 * primal_terms && gamma < 8.0 * kPi;
    if (use_dual_) {
      const Lattice D = dual_lattice(L);
      const double a = 2.0 * kPi * kPi * sigma * sigma;
      for_each_point_in_ball(D, Vec::Zero(n), rd, [&](const IntVec& z, double norm2) {
        // Keep one of each +/- pair: first nonzero coordinate positive.
        for (auto c : z) {
          if (c == 0) continue;
          if (c > 0) {
            dual_freqs_.push_back(D.point(z));
            dual_weights_.push_back(2.0 * std::exp(-a * norm2));
          }
          return;
        }
      });
    }
  }

  const Lattice& lattice() const { return L_; }
  double sigma() const { return sigma_; }
  bool uses_dual() const { return use_dual_; }

  // V(L) f(x) - 1.
  double deviation(const Vec& x) const {
    if (use_dual_) {
      long double acc = 0.0L;
      const double two_pi = 2.0 * kPi;
      for (std::size_t i = 0; i < dual_freqs_.size(); ++i)
        acc += dual_weights_[i] * std::cos(two_pi * dual_freqs_[i].dot(x));
      return static_cast<double>(acc);
    }
    return std::expm1(log_density(x) + std::log(L_.volume()));
  }

  double log_density(const Vec& x) const {
    if (use_dual_) {
      const double dev = deviation(x);
      if (dev > -0.5) return std::log1p(dev) - std::log(L_.volume());
    }
    return periodic_log_density(L_, sigma_, x, rel_tol_);
  }

  double density(const Vec& x) const { return std::exp(log_density(x)); }

 private:
  Lattice L_;
  double sigma_;
  double rel_tol_;
  bool use_dual_ = false;
  std::vector<Vec> dual_freqs_;
  std::vector<double> dual_weights_;
};

// Enumerated support of D_{L,sigma,c} with mass >= 1 - tail.
struct DiscreteGaussianSupport {
  std::vector<IntVec> coeffs;
  std::vector<double> pmf;
  std::vector<double> cdf;
  double log_normalizer = 0.0;  // log sum exp(-|lambda-c|^2/(2 sigma^2))
};

inline DiscreteGaussianSupport discrete_gaussian_support(const Lattice& L, double sigma,
                                                         const Vec& c, double tail = 1e-12) {
  require_sigma(sigma);
  const Vec near = nearest_lattice_point(L, c);
  const double dmin2 = (c - near).squaredNorm();
  const double r = std::sqrt(dmin2) + gaussian_tail_radius(L.dim(), sigma, tail / 10.0);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  DiscreteGaussianSupport s;
  for_each_point_in_ball(L, c, r, [&](const IntVec& z, double d2) {
    s.coeffs.push_back(z);
    s.pmf.push_back(std::exp(-(d2 - dmin2) * inv));
  });
  long double total = 0.0L;
  for (double w : s.pmf) total += w;
  s.cdf.resize(s.pmf.size());
  long double run = 0.0L;
  for (std::size_t i = 0; i < s.pmf.size(); ++i) {
    run += s.pmf[i];
    s.pmf[i] = static_cast<double>(s.pmf[i] / total);
    s.cdf[i] = static_cast<double>(run / total);
  }
  if (!s.cdf.empty()) s.cdf.back() = 1.0;
  s.log_normalizer = -dmin2 * inv + static_cast<double>(std::log(total));
  return s;
}

inline double discrete_gaussian_log_pmf(const Lattice& L, double sigma, const Vec& c,
                                        const Vec& lam, double rel_tol = 1e-12) {
  require(L.contains(lam), Errc::NotLatticePoint, "lam is not a lattice point");
  return -(lam - c).squaredNorm() / (2.0 * sigma * sigma) -
         log_gaussian_lattice_sum(L, sigma, c, rel_tol);
}

inline double discrete_gaussian_pmf(const Lattice& L, double sigma, const Vec& c, const Vec& lam,
                                    double rel_tol = 1e-12) {
  return std::exp(discrete_gaussian_log_pmf(L, sigma, c, lam, rel_tol));
}

inline std::size_t sample_index(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

inline IntVec sample_discrete_gaussian_coeffs(const Lattice& L, double sigma, const Vec& c,
                                              Rng& rng) {
  const auto s = discrete_gaussian_support(L, sigma, c);
  return s.coeffs[sample_index(s.cdf, rng)];
}

inline Vec sample_discrete_gaussian(const Lattice& L, double sigma, const Vec& c, Rng& rng) {
  return L.point(sample_discrete_gaussian_coeffs(L, sigma, c, rng));
}

// Exact D_{Z,sigma,c}.
inline std::int64_t sample_integer_gaussian(double sigma, double c, Rng& rng) {
  const double r = gaussian_tail_radius(1, sigma, 1e-13) + 1.0;
  const auto lo = static_cast<std::int64_t>(std::ceil(c - r));
  const auto hi = static_cast<std::int64_t>(std::floor(c + r));
  std::vector<double> cdf;
  cdf.reserve(static_cast<std::size_t>(hi - lo + 1));
  const double cr = std::round(c);
  const double dmin2 = (cr - c) * (cr - c);
  long double run = 0.0L;
  for (std::int64_t k = lo; k <= hi; ++k) {
    const double d = static_cast<double>(k) - c;
    run += std::exp(-(d * d - dmin2) / (2.0 * sigma * sigma));
    cdf.push_back(static_cast<double>(run));
  }
  for (auto& v : cdf) v /= static_cast<double>(run);
  cdf.back() = 1.0;
  return lo + static_cast<std::int64_t>(sample_index(cdf, rng));
}

// Klein's nearest-plane sampler. Exact when the basis is orthogonal.
inline Vec sample_klein(const Lattice& L, double sigma, const Vec& c, Rng& rng) {
  require_sigma(sigma);
  L.check_dim(c);
  const Mat& R = L.r_factor();
  const Vec y = L.qt_factor() * c;
  const int n = L.dim();
  IntVec z(n, 0);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int j = i + 1; j < n; ++j) s -= R(i, j) * static_cast<double>(z[j]);
    z[i] = sample_integer_gaussian(sigma / std::abs(R(i, i)), s / R(i, i), rng);
  }
  return L.point(z);
}

enum class SamplerMode { Exact, Klein };

inline Vec randomized_round(const Lattice& L, double sigma_q, const Vec& x, Rng& rng,
                            SamplerMode mode = SamplerMode::Exact) {
  return mode == SamplerMode::Exact ? sample_discrete_gaussian(L, sigma_q, x, rng)
                                    : sample_klein(L, sigma_q, x, rng);
}

inline Vec sample_normal_vector(int n, double sigma, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = sigma * rng.normal();
  return v;
}

// Uniform point of the parallelepiped P(L).
inline Vec sample_uniform_cell(const Lattice& L, Rng& rng) {
  Vec t(L.dim());
  for (int i = 0; i < L.dim(); ++i) t[i] = rng.uniform();
  return L.basis() * t;
}

}  // namespace latskg

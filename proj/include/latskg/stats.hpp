#pragma once

#include <algorithm>
#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "error.hpp"

namespace latskg {

inline constexpr double kZ95 = 1.959963984540054;

struct Estimate {
  double value = 0.0;
  double ci = 0.0;  // 95% half-width
  double se = 0.0;
  std::size_t samples = 0;
};

// Welford accumulator that merges exactly in a fixed order.
class Moments {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const Moments& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double se() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

  Estimate estimate() const { return {mean_, kZ95 * se(), se(), n_}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct Interval {
  double lo, hi;
};

inline Interval clopper_pearson(std::size_t k, std::size_t n, double alpha = 0.05) {
  require(n > 0 && k <= n, Errc::InvalidArgument, "Clopper-Pearson needs 0 <= k <= n, n > 0");
  using boost::math::ibeta_inv;
  const double kd = static_cast<double>(k), nd = static_cast<double>(n);
  const double lo = k == 0 ? 0.0 : ibeta_inv(kd, nd - kd + 1.0, alpha / 2.0);
  const double hi = k == n ? 1.0 : ibeta_inv(kd + 1.0, nd - kd, 1.0 - alpha / 2.0);
  return {lo, hi};
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Pearson test; cells with expected count below min_expected are pooled.
inline ChiSquareResult chi_square_test(const std::vector<double>& observed,
                                       const std::vector<double>& probs, double min_expected = 5.0) {
  require(observed.size() == probs.size(), Errc::DimensionMismatch, "cell count mismatch");
  double n = 0.0;
  for (double o : observed) n += o;
  std::vector<double> obs, ex;
  double pool_o = 0.0, pool_e = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double e = n * probs[i];
    if (e < min_expected) {
      pool_o += observed[i];
      pool_e += e;
    } else {
      obs.push_back(observed[i]);
      ex.push_back(e);
    }
  }
  if (pool_e >= min_expected || obs.empty()) {
    obs.push_back(pool_o);
    ex.push_back(pool_e);
  } else if (pool_e > 0.0 || pool_o > 0.0) {
    const auto j = static_cast<std::size_t>(std::min_element(ex.begin(), ex.end()) - ex.begin());
    obs[j] += pool_o;
    ex[j] += pool_e;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i)
    if (ex[i] > 0.0) stat += (obs[i] - ex[i]) * (obs[i] - ex[i]) / ex[i];
  const int cells = static_cast<int>(obs.size());
  ChiSquareResult r;
  r.statistic = stat;
  r.dof = std::max(cells - 1, 1);
  r.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.dof), stat));
  return r;
}

// L1 distance sum |p - q| (no factor 1/2).
inline double variational_distance(const std::vector<double>& p, const std::vector<double>& q) {
  require(p.size() == q.size(), Errc::DimensionMismatch, "distributions differ in size");
  long double acc = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return static_cast<double>(acc);
}

inline double distance_to_uniform(const std::vector<double>& p) {
  const double u = 1.0 / static_cast<double>(p.size());
  long double acc = 0.0L;
  for (double v : p) acc += std::abs(v - u);
  return static_cast<double>(acc);
}

inline double shannon_entropy(const std::vector<double>& p) {
  long double h = 0.0L;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return static_cast<double>(h);
}

// Standard-error scale of an empirical L1 distance built from n draws.
inline double histogram_slack(const std::vector<double>& p, std::size_t n) {
  double s = 0.0;
  for (double v : p) s += std::sqrt(std::max(v * (1.0 - v), 0.0) / static_cast<double>(n));
  return s;
}

// LATSKG_THREADS overrides the hardware thread count.
inline unsigned worker_count() {
  if (const char* env = std::getenv("LATSKG_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(std::min(v, 256L));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// Runs fn(chunk) for chunk in [0, chunks) over a worker pool and returns the
// results in chunk order, so reductions never depend on scheduling.
template <class T>
std::vector<T> run_chunks(std::size_t chunks, const std::function<T(std::size_t)>& fn,
                          unsigned workers = worker_count()) {
  std::vector<T> out(chunks);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(chunks)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) out[c] = fn(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) out[c] = fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline constexpr std::size_t kChunk = 4096;

inline std::size_t chunk_count(std::size_t samples) { return (samples + kChunk - 1) / kChunk; }

inline std::size_t chunk_size(std::size_t samples, std::size_t c) {
  return std::min(kChunk, samples - c * kChunk);
}

}  // namespace latskg

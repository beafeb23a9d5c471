#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <vector>

#include "error.hpp"

namespace latskg {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int panels = 0;
};

// Composite 20-point Gauss-Legendre with panel doubling until two successive
// estimates agree to rel_tol (or abs_tol).
template <class F>
QuadratureResult composite_gauss(F&& f, double a, double b, double rel_tol, double abs_tol = 0.0,
                                 int start_panels = 8, int max_panels = 1 << 15) {
  using boost::math::quadrature::gauss;
  auto eval = [&](int panels) {
    const double h = (b - a) / panels;
    long double acc = 0.0L;
    for (int i = 0; i < panels; ++i) acc += gauss<double, 20>::integrate(f, a + i * h, a + (i + 1) * h);
    return static_cast<double>(acc);
  };
  int panels = start_panels;
  double prev = eval(panels);
  while (panels < max_panels) {
    panels *= 2;
    const double cur = eval(panels);
    const double err = std::abs(cur - prev);
    if (err <= rel_tol * std::abs(cur) || err <= abs_tol) return {cur, err, panels};
    prev = cur;
  }
  fail(Errc::QuadratureFailure, "composite Gauss-Legendre did not reach tolerance");
}

// Adaptive Gauss-Kronrod on [a,b] to an absolute tolerance.
template <class F>
QuadratureResult adaptive_kronrod(F&& f, double a, double b, double abs_tol, int max_depth = 15) {
  using boost::math::quadrature::gauss_kronrod;
  double err = 0.0, l1 = 0.0;
  const double v = gauss_kronrod<double, 31>::integrate(f, a, b, static_cast<unsigned>(max_depth),
                                                        1e-13, &err, &l1);
  if (err > abs_tol && err > 1e-11 * l1)
    fail(Errc::QuadratureFailure, "adaptive Gauss-Kronrod did not reach tolerance");
  return {v, err, 1};
}

// Integral of |g| over [a,b]: sign changes of g are bracketed on a grid and
// refined by bisection so every piece handed to Gauss-Kronrod is smooth.
template <class G>
QuadratureResult integrate_abs(G&& g, double a, double b, double abs_tol, int grid = 4096) {
  std::vector<double> cuts{a};
  double xprev = a, gprev = g(a);
  for (int i = 1; i <= grid; ++i) {
    const double x = a + (b - a) * i / grid;
    const double gx = g(x);
    if ((gprev < 0.0) != (gx < 0.0)) {
      double lo = xprev, hi = x;
      const bool neg_lo = gprev < 0.0;
      for (int it = 0; it < 80 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((g(mid) < 0.0) == neg_lo) lo = mid; else hi = mid;
      }
      cuts.push_back(0.5 * (lo + hi));
    }
    xprev = x;
    gprev = gx;
  }
  cuts.push_back(b);
  QuadratureResult total;
  long double acc = 0.0L;
  const double piece_tol = abs_tol / static_cast<double>(cuts.size());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    const auto q = adaptive_kronrod([&](double x) { return std::abs(g(x)); }, cuts[i], cuts[i + 1],
                                    piece_tol);
    acc += q.value;
    total.error += q.error;
  }
  total.value = static_cast<double>(acc);
  total.panels = static_cast<int>(cuts.size()) - 1;
  return total;
}

}  // namespace latskg

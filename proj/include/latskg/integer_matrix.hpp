#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <cstdlib>
#include <utility>

#include "error.hpp"

namespace latskg {

using IntMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

inline bool is_prime(std::int64_t p) {
  if (p < 2) return false;
  for (std::int64_t d = 2; d * d <= p; ++d)
    if (p % d == 0) return false;
  return true;
}

inline std::int64_t mod_p(std::int64_t a, std::int64_t p) {
  std::int64_t r = a % p;
  return r < 0 ? r + p : r;
}

inline std::int64_t inverse_mod(std::int64_t a, std::int64_t p) {
  std::int64_t t = 0, nt = 1, r = p, nr = mod_p(a, p);
  while (nr != 0) {
    std::int64_t q = r / nr;
    t = std::exchange(nt, t - q * nt);
    r = std::exchange(nr, r - q * nr);
  }
  require(r == 1, Errc::InvalidArgument, "element not invertible mod p");
  return mod_p(t, p);
}

// Rank over F_p by Gaussian elimination on a copy.
inline int rank_mod_p(IntMat m, std::int64_t p) {
  const int rows = static_cast<int>(m.rows()), cols = static_cast<int>(m.cols());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = mod_p(m(i, j), p);
  int rank = 0;
  for (int c = 0; c < cols && rank < rows; ++c) {
    int piv = -1;
    for (int r = rank; r < rows; ++r)
      if (m(r, c) != 0) { piv = r; break; }
    if (piv < 0) continue;
    m.row(piv).swap(m.row(rank));
    const std::int64_t inv = inverse_mod(m(rank, c), p);
    for (int j = 0; j < cols; ++j) m(rank, j) = mod_p(m(rank, j) * inv, p);
    for (int r = 0; r < rows; ++r) {
      if (r == rank || m(r, c) == 0) continue;
      const std::int64_t f = m(r, c);
      for (int j = 0; j < cols; ++j) m(r, j) = mod_p(m(r, j) - f * m(rank, j), p);
    }
    ++rank;
  }
  return rank;
}

// Column-style Hermite normal form: returns lower-triangular H = M U with U
// unimodular and positive diagonal. M must be square and nonsingular.
inline IntMat hermite_lower(IntMat h) {
  const int n = static_cast<int>(h.rows());
  require(h.cols() == n, Errc::DimensionMismatch, "hermite_lower needs a square matrix");
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      while (h(i, j) != 0) {
        const std::int64_t q = h(i, i) / h(i, j);
        h.col(i) -= q * h.col(j);
        h.col(i).swap(h.col(j));
      }
    }
    require(h(i, i) != 0, Errc::SingularBasis, "singular integer matrix");
    if (h(i, i) < 0) h.col(i) = -h.col(i);
    for (int j = 0; j < i; ++j) {
      const std::int64_t q = h(i, j) >= 0 ? h(i, j) / h(i, i)
                                          : -((-h(i, j) + h(i, i) - 1) / h(i, i));
      h.col(j) -= q * h.col(i);
    }
  }
  return h;
}

}  // namespace latskg

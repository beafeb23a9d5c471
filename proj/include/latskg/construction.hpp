#pragma once

#include <array>
#include <cmath>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "gaussian.hpp"
#include "integer_matrix.hpp"
#include "lattice.hpp"
#include "rng.hpp"

namespace latskg {

struct PrimeChoice {
  std::int64_t p;
  double xi;
};

// Smallest prime in (n^{3/2}, 2 n^{3/2}].
inline PrimeChoice choose_prime(int n) {
  require(n >= 1, Errc::InvalidArgument, "n must be positive");
  const double lo = std::pow(static_cast<double>(n), 1.5);
  auto p = static_cast<std::int64_t>(std::floor(lo)) + 1;
  while (!is_prime(p)) ++p;
  require(static_cast<double>(p) <= 2.0 * lo, Errc::ConstructionFailed, "no prime in interval");
  return {p, static_cast<double>(p) / lo};
}

struct CodeDimensions {
  std::array<int, 3> k{};
  bool degenerate = false;  // k1 == k3: neither public message nor key
};

inline CodeDimensions code_dimensions(int n, std::int64_t p, const std::array<double, 3>& targets) {
  require(n >= 1 && p >= 2, Errc::InvalidArgument, "need n >= 1 and p >= 2");
  require(targets[0] > 0.0 && targets[0] < targets[1] && targets[1] < targets[2],
          Errc::InvalidArgument, "targets must satisfy 0 < P1 < P2 < P3");
  const double vb = ball_volume(n);
  const double a = std::log(4.0 / std::pow(vb, 2.0 / n));
  CodeDimensions d;
  for (int i = 0; i < 3; ++i) {
    const double raw = n / (2.0 * std::log(static_cast<double>(p))) * (a + std::log(1.0 / targets[i]));
    d.k[i] = std::clamp(static_cast<int>(std::floor(raw)), 0, n);
  }
  d.degenerate = d.k[0] == d.k[2];
  return d;
}

inline std::int64_t centered_lift(std::int64_t a, std::int64_t p) {
  const std::int64_t r = mod_p(a, p);
  return r > p / 2 ? r - p : r;
}

// Basis of alpha (pZ^n + C) where C is spanned by the columns of g (n x k).
inline Lattice construction_a(const IntMat& g, std::int64_t p, double alpha) {
  const int n = static_cast<int>(g.rows()), k = static_cast<int>(g.cols());
  require(is_prime(p), Errc::InvalidArgument, "p must be prime");
  IntMat rows = g.transpose();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) rows(i, j) = mod_p(rows(i, j), p);
  // Reduced row echelon form over F_p.
  std::vector<int> pivots;
  int r = 0;
  for (int c = 0; c < n && r < k; ++c) {
    int piv = -1;
    for (int i = r; i < k; ++i)
      if (rows(i, c) != 0) { piv = i; break; }
    if (piv < 0) continue;
    rows.row(piv).swap(rows.row(r));
    const std::int64_t inv = inverse_mod(rows(r, c), p);
    for (int j = 0; j < n; ++j) rows(r, j) = mod_p(rows(r, j) * inv, p);
    for (int i = 0; i < k; ++i) {
      if (i == r || rows(i, c) == 0) continue;
      const std::int64_t f = rows(i, c);
      for (int j = 0; j < n; ++j) rows(i, j) = mod_p(rows(i, j) - f * rows(r, j), p);
    }
    pivots.push_back(c);
    ++r;
  }
  if (r < k) fail(Errc::RankDeficientCode, "generator is not full rank over F_p");
  Mat basis = Mat::Zero(n, n);
  int col = 0;
  std::vector<bool> is_pivot(n, false);
  for (int i = 0; i < k; ++i) {
    is_pivot[pivots[i]] = true;
    for (int j = 0; j < n; ++j) basis(j, col) = static_cast<double>(centered_lift(rows(i, j), p));
    ++col;
  }
  for (int j = 0; j < n; ++j)
    if (!is_pivot[j]) basis(j, col++) = static_cast<double>(p);
  return Lattice(alpha * basis);
}

struct NestedChain {
  int n = 0;
  std::int64_t p = 0;
  double xi = 0.0;
  double alpha = 0.0;
  std::array<int, 3> k{};
  IntMat generator;  // n x k1 over F_p; prefixes generate C2, C3
  std::array<double, 3> targets{};
  bool prime_override = false;
  bool degenerate = false;
  Lattice L1, L2, L3;

  double volume(int i) const {
    return std::pow(alpha, n) * std::pow(static_cast<double>(p), n - k[i]);
  }
  const Lattice& lattice(int i) const { return i == 0 ? L1 : (i == 1 ? L2 : L3); }
};

inline void assemble_chain(NestedChain& c) {
  c.L1 = construction_a(c.generator.leftCols(c.k[0]), c.p, c.alpha);
  c.L2 = construction_a(c.generator.leftCols(c.k[1]), c.p, c.alpha);
  c.L3 = construction_a(c.generator.leftCols(c.k[2]), c.p, c.alpha);
  require(is_sublattice(c.L1, c.L2) && is_sublattice(c.L2, c.L3), Errc::ConstructionFailed,
          "chain is not nested");
  for (int i = 0; i < 3; ++i)
    require(std::abs(c.lattice(i).volume() / c.volume(i) - 1.0) < 1e-9, Errc::ConstructionFailed,
            "lattice volume does not match alpha^n p^(n-k)");
}

inline NestedChain build_chain(int n, const std::array<double, 3>& targets, Rng& rng,
                               std::optional<std::int64_t> prime = std::nullopt) {
  require(n >= 1 && n <= kCvpMaxDim, Errc::DimensionTooLarge, "chain dimension outside enumeration limit");
  NestedChain c;
  c.n = n;
  if (prime) {
    require(is_prime(*prime), Errc::InvalidArgument, "prime override is not prime");
    c.p = *prime;
    c.xi = static_cast<double>(c.p) / std::pow(static_cast<double>(n), 1.5);
    c.prime_override = true;
  } else {
    const auto pc = choose_prime(n);
    c.p = pc.p;
    c.xi = pc.xi;
  }
  c.alpha = 2.0 * std::sqrt(static_cast<double>(n)) / static_cast<double>(c.p);
  c.targets = targets;
  const auto dims = code_dimensions(n, c.p, targets);
  c.k = dims.k;
  c.degenerate = dims.degenerate;
  c.generator = IntMat::Zero(n, c.k[0]);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c.k[0]; ++j)
        c.generator(i, j) = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(c.p));
    ok = rank_mod_p(c.generator, c.p) == c.k[0];
  }
  if (!ok) fail(Errc::ConstructionFailed, "no full-rank generator within 100 draws");
  assemble_chain(c);
  return c;
}

struct ChainRates {
  double r_p;
  double r_k;
};

inline ChainRates chain_rates(const NestedChain& c) {
  const double lp = std::log(static_cast<double>(c.p));
  return {(c.k[0] - c.k[1]) * lp / c.n, (c.k[1] - c.k[2]) * lp / c.n};
}

inline nlohmann::json chain_to_json(const NestedChain& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["p"] = c.p;
  j["xi"] = c.xi;
  j["alpha"] = c.alpha;
  j["k1"] = c.k[0];
  j["k2"] = c.k[1];
  j["k3"] = c.k[2];
  std::vector<std::int64_t> digits;
  for (int i = 0; i < c.generator.rows(); ++i)
    for (int jj = 0; jj < c.generator.cols(); ++jj) digits.push_back(c.generator(i, jj));
  j["generator"] = digits;
  j["targets"] = c.targets;
  j["prime_override"] = c.prime_override;
  return j;
}

inline NestedChain chain_from_json(const nlohmann::json& j) {
  try {
    NestedChain c;
    c.n = j.at("n").get<int>();
    c.p = j.at("p").get<std::int64_t>();
    c.xi = j.at("xi").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.k = {j.at("k1").get<int>(), j.at("k2").get<int>(), j.at("k3").get<int>()};
    c.targets = j.at("targets").get<std::array<double, 3>>();
    c.prime_override = j.value("prime_override", false);
    require(c.n >= 1 && c.n <= kCvpMaxDim, Errc::ConfigError, "chain n out of range");
    require(c.k[0] >= c.k[1] && c.k[1] >= c.k[2] && c.k[2] >= 0 && c.k[0] <= c.n, Errc::ConfigError,
            "chain code dimensions must satisfy n >= k1 >= k2 >= k3 >= 0");
    const auto digits = j.at("generator").get<std::vector<std::int64_t>>();
    require(digits.size() == static_cast<std::size_t>(c.n * c.k[0]), Errc::ConfigError,
            "generator has wrong number of digits");
    c.generator = IntMat(c.n, c.k[0]);
    for (int i = 0; i < c.n; ++i)
      for (int jj = 0; jj < c.k[0]; ++jj) c.generator(i, jj) = digits[i * c.k[0] + jj];
    require(rank_mod_p(c.generator, c.p) == c.k[0], Errc::ConfigError, "generator not full rank");
    c.degenerate = c.k[0] == c.k[2];
    assemble_chain(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, std::string("malformed chain document: ") + e.what());
  }
}

}  // namespace latskg

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "latskg/lattice.hpp"
#include "latskg/rng.hpp"

using namespace latskg;

namespace {

Mat cols(std::initializer_list<std::initializer_list<double>> columns) {
  const int n = static_cast<int>(columns.size());
  Mat m(n, n);
  int j = 0;
  for (const auto& c : columns) {
    int i = 0;
    for (double v : c) m(i++, j) = v;
    ++j;
  }
  return m;
}

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<int>(v.size()));
  int i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

// Brute force over a coefficient box, independent of the enumeration code.
Vec brute_closest(const Lattice& L, const Vec& x, int box) {
  Vec best;
  double bd = INFINITY;
  IntVec bz;
  const int n = L.dim();
  IntVec z(n, -box);
  while (true) {
    const Vec p = L.point(z);
    const double d = (p - x).squaredNorm();
    if (d < bd - 1e-12 || (std::abs(d - bd) <= 1e-12 && z < bz)) {
      bd = d;
      best = p;
      bz = z;
    }
    int i = n - 1;
    while (i >= 0 && ++z[i] > box) z[i--] = -box;
    if (i < 0) break;
  }
  return best;
}

}  // namespace

TEST(BuildLattice, Volumes) {
  EXPECT_DOUBLE_EQ(build_lattice(Mat::Identity(2, 2)).volume(), 1.0);
  EXPECT_NEAR(build_lattice(cols({{2, 1}, {0, 3}})).volume(), 6.0, 1e-12);
  try {
    build_lattice(cols({{1, 2}, {2, 4}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularBasis);
  }
}

TEST(BuildLattice, RejectsNonSquare) {
  EXPECT_THROW(build_lattice(Mat::Ones(2, 3)), Error);
}

TEST(DualLattice, Basics) {
  const auto z3 = Lattice::integer(3);
  EXPECT_TRUE(dual_lattice(z3).basis().isApprox(Mat::Identity(3, 3)));
  EXPECT_NEAR(dual_lattice(Lattice::integer(1, 2.0)).basis()(0, 0), 0.5, 1e-15);

  const Lattice L(cols({{2, 1}, {0, 3}}));
  const Lattice dd = dual_lattice(dual_lattice(L));
  EXPECT_NEAR(dual_lattice(L).volume(), 1.0 / 6.0, 1e-14);
  for (int j = 0; j < 2; ++j) {
    EXPECT_TRUE(L.contains(dd.basis().col(j)));
    EXPECT_TRUE(dd.contains(L.basis().col(j)));
  }
}

TEST(ReduceMod, ParallelepipedExamples) {
  const FundamentalRegion P(Lattice::integer(2));
  const auto r = reduce_mod(P, vec({1.25, -0.5}));
  EXPECT_NEAR(r.residue[0], 0.25, 1e-15);
  EXPECT_NEAR(r.residue[1], 0.5, 1e-15);
  EXPECT_NEAR(reduce_mod(P, vec({3, -2})).residue.norm(), 0.0, 1e-15);
  EXPECT_THROW(reduce_mod(P, vec({1, 2, 3})), Error);
}

TEST(ReduceMod, VoronoiExample) {
  const FundamentalRegion V(Lattice::integer(2), RegionKind::Voronoi);
  const auto r = reduce_mod(V, vec({0.6, 0}));
  EXPECT_NEAR(r.residue[0], -0.4, 1e-15);
  EXPECT_NEAR(r.residue[1], 0.0, 1e-15);
}

TEST(ReduceMod, IdempotentAndLatticeDifference) {
  const Lattice L(cols({{1.3, 0.2, -0.1}, {0.4, 0.9, 0.3}, {-0.2, 0.5, 1.7}}));
  Rng rng(11);
  for (auto kind : {RegionKind::Parallelepiped, RegionKind::Voronoi}) {
    const FundamentalRegion R(L, kind);
    for (int t = 0; t < 2000; ++t) {
      Vec x(3);
      for (int i = 0; i < 3; ++i) x[i] = 10.0 * (rng.uniform() - 0.5);
      const auto r = R.reduce(x);
      EXPECT_TRUE(L.contains(x - r.residue));
      EXPECT_TRUE(R.contains(r.residue));
      const auto r2 = R.reduce(r.residue);
      EXPECT_LT((r2.residue - r.residue).norm(), 1e-12);
    }
  }
}

TEST(ReduceMod, DistributiveLaw) {
  const Lattice L(cols({{1.0, 0.0}, {0.5, 0.866}}));
  Rng rng(3);
  for (auto kind : {RegionKind::Parallelepiped, RegionKind::Voronoi}) {
    const FundamentalRegion R(L, kind);
    for (int t = 0; t < 10000; ++t) {
      Vec x(2);
      x << 6.0 * (rng.uniform() - 0.5), 6.0 * (rng.uniform() - 0.5);
      IntVec z = {static_cast<std::int64_t>(rng() % 21) - 10, static_cast<std::int64_t>(rng() % 21) - 10};
      const Vec a = R.residue(x + L.point(z));
      const Vec b = R.residue(x);
      ASSERT_LT((a - b).norm(), 1e-9);
    }
  }
}

TEST(Cvp, Examples) {
  const auto z2 = Lattice::integer(2);
  const Vec p = nearest_lattice_point(z2, vec({0.6, -1.2}));
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -1.0);
  EXPECT_EQ(nearest_lattice_point(Lattice::integer(1), vec({0.5}))[0], 0.0);
  EXPECT_EQ(nearest_lattice_point(Lattice::integer(1), vec({-0.5}))[0], -1.0);
}

TEST(Cvp, HexagonalMatchesBruteForce) {
  const Lattice L(cols({{1.0, 0.0}, {0.5, 0.866}}));
  const Vec x = vec({0.9, 0.4});
  EXPECT_LT((nearest_lattice_point(L, x) - brute_closest(L, x, 6)).norm(), 1e-12);
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    Vec y(2);
    y << 4.0 * (rng.uniform() - 0.5), 4.0 * (rng.uniform() - 0.5);
    ASSERT_LT((nearest_lattice_point(L, y) - brute_closest(L, y, 8)).norm(), 1e-12);
  }
}

TEST(Cvp, SkewedBasis4DMatchesBruteForce) {
  const Lattice L(cols({{1, 0, 0, 0}, {0.6, 1, 0, 0}, {-0.4, 0.7, 1.1, 0}, {0.3, -0.5, 0.8, 0.9}}));
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    Vec y(4);
    for (int i = 0; i < 4; ++i) y[i] = 3.0 * (rng.uniform() - 0.5);
    const Vec a = nearest_lattice_point(L, y), b = brute_closest(L, y, 9);
    ASSERT_LE((a - y).norm(), (b - y).norm() + 1e-12);
    ASSERT_LT((a - b).norm(), 1e-10) << (a - y).norm() << " " << (b - y).norm();
  }
}

TEST(Cvp, DimensionLimit) {
  try {
    nearest_lattice_point(Lattice::integer(13), Vec::Zero(13));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionTooLarge);
  }
}

TEST(Voronoi, ReduceAgreesWithNearestPoint) {
  const Lattice L(cols({{2.0, 0.3, 0.1}, {-0.7, 1.5, 0.2}, {0.1, 0.9, 1.2}}));
  const FundamentalRegion V(L, RegionKind::Voronoi);
  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = 8.0 * (rng.uniform() - 0.5);
    const Vec r = V.residue(x);
    EXPECT_LT((r - (x - nearest_lattice_point(L, x))).norm(), 1e-12);
    EXPECT_TRUE(in_voronoi_cell(L, r));
  }
}

TEST(Cosets, SmallExamples) {
  const auto reps = coset_representatives(Lattice::integer(1), Lattice::integer(1, 2.0));
  ASSERT_EQ(reps.size(), 2u);
  std::set<double> v = {reps[0][0], reps[1][0]};
  EXPECT_EQ(v, (std::set<double>{0.0, 1.0}));
  EXPECT_EQ(coset_representatives(Lattice::integer(2), Lattice::integer(2, 3.0)).size(), 9u);
}

TEST(Cosets, ConstructionAPairExhaustive) {
  // fine = Z^2, coarse = 3Z^2 + C with C = span{(1,2)} over F_3.
  const Mat coarse_basis = cols({{1, 2}, {0, 3}});
  const Lattice fine = Lattice::integer(2), coarse(coarse_basis);
  const CosetTable table(fine, coarse);
  ASSERT_EQ(table.size(), 3u);
  const FundamentalRegion P(coarse);
  // Exhaustive: every integer point in a big box falls in exactly one coset.
  std::set<std::size_t> seen;
  for (int a = -6; a <= 6; ++a)
    for (int b = -6; b <= 6; ++b) {
      const Vec x = vec({double(a), double(b)});
      const std::size_t i = table.index(x);
      EXPECT_TRUE(coarse.contains(x - table.representative(i)));
      seen.insert(i);
    }
  EXPECT_EQ(seen.size(), 3u);
  for (const auto& r : table.representatives()) EXPECT_TRUE(P.contains(r));
}

TEST(Cosets, Errors) {
  try {
    coset_representatives(Lattice::integer(1, 2.0), Lattice::integer(1, 3.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotNested);
  }
  try {
    coset_representatives(Lattice::integer(2), Lattice::integer(2, 2000.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IndexTooLarge);
  }
}

TEST(Cosets, PartitionByMonteCarlo) {
  // Translates of the fine cell by the reps tile the coarse cell: a uniform
  // point of the coarse cell lands in each translate with probability 1/index.
  const Lattice fine(cols({{1.0, 0.0}, {0.5, 0.866}}));
  const Lattice coarse(fine.basis() * (IntMat(2, 2) << 2, 1, 0, 3).finished().cast<double>());
  const CosetTable table(fine, coarse);
  ASSERT_EQ(table.size(), 6u);
  const FundamentalRegion Pf(fine), Pc(coarse);
  Rng rng(21);
  const int N = 60000;
  std::vector<int> counts(table.size(), 0);
  int hits = 0;
  for (int t = 0; t < N; ++t) {
    Vec u(2);
    u << rng.uniform(), rng.uniform();
    const Vec x = coarse.basis() * u;
    int inside = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const Vec d = x - table.representative(i);
      // Fine cell translate membership, read modulo the coarse lattice.
      for (int a = -3; a <= 3; ++a)
        for (int b = -3; b <= 3; ++b) {
          const Vec shift = coarse.point({a, b});
          if (Pf.contains(d + shift)) {
            ++counts[i];
            ++inside;
          }
        }
    }
    hits += inside == 1;
  }
  EXPECT_EQ(hits, N);
  const double p = 1.0 / 6.0;
  for (int c : counts) EXPECT_LT(std::abs(c - N * p), 3.0 * std::sqrt(N * p * (1 - p)));
}

TEST(QuantizerCommutation, NestedPair) {
  const Lattice L1(cols({{1.0, 0.0}, {0.5, 0.866}}));
  const Lattice L(L1.basis() * 3.0);
  const FundamentalRegion R(L);
  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    Vec x(2);
    x << 20.0 * (rng.uniform() - 0.5), 20.0 * (rng.uniform() - 0.5);
    const Vec a = R.residue(nearest_lattice_point(L1, x));
    const Vec b = R.residue(nearest_lattice_point(L1, R.residue(x)));
    ASSERT_LT((a - b).norm(), 1e-9);
  }
}

TEST(Vnr, Examples) {
  EXPECT_DOUBLE_EQ(vnr(Lattice::integer(1), 1.0), 1.0);
  EXPECT_NEAR(vnr(Lattice::integer(2), 1.0 / std::sqrt(2 * M_PI)), 2 * M_PI, 1e-12);
  EXPECT_NEAR(vnr(Lattice::integer(2, 3.0), 0.7) / vnr(Lattice::integer(2), 0.7), 9.0, 1e-12);
  EXPECT_THROW(vnr(Lattice::integer(2), 0.0), Error);
}

TEST(Hermite, IndexAndShape) {
  IntMat m(3, 3);
  m << 2, 1, 0, 0, 3, 1, 1, 0, 4;
  const IntMat h = hermite_lower(m);
  EXPECT_EQ(h(0, 1), 0);
  EXPECT_EQ(h(0, 2), 0);
  EXPECT_EQ(h(1, 2), 0);
  EXPECT_EQ(h(0, 0) * h(1, 1) * h(2, 2), 25);
}

#include <gtest/gtest.h>

#include <cmath>

#include "latskg/construction.hpp"
#include "latskg/flatness.hpp"

using namespace latskg;

namespace {

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  while (e-- > 0) r *= b;
  return r;
}

}  // namespace

TEST(ChoosePrime, Examples) {
  const auto a = choose_prime(4);
  EXPECT_EQ(a.p, 11);
  EXPECT_NEAR(a.xi, 1.375, 1e-12);
  const auto b = choose_prime(9);
  EXPECT_EQ(b.p, 29);
  EXPECT_NEAR(b.xi, 29.0 / 27.0, 1e-12);
  for (int n = 1; n <= 40; ++n) {
    const auto c = choose_prime(n);
    EXPECT_TRUE(is_prime(c.p));
    EXPECT_GT(c.xi, 1.0);
    EXPECT_LE(c.xi, 2.0);
  }
  EXPECT_THROW(choose_prime(0), Error);
}

TEST(CodeDimensions, Examples) {
  const auto d = code_dimensions(4, 11, {0.05, 0.2, 0.8});
  EXPECT_EQ(d.k, (std::array<int, 3>{2, 1, 0}));
  EXPECT_FALSE(d.degenerate);
  // Direct evaluation with V_B = pi^2 / 2.
  const double a = std::log(4.0 / std::sqrt(M_PI * M_PI / 2));
  EXPECT_EQ(static_cast<int>(std::floor(4 / (2 * std::log(11.0)) * (a + std::log(20.0)))), 2);

  for (int n : {2, 4, 8, 12}) {
    const auto p = choose_prime(n).p;
    int prev = n + 1;
    for (double P : {1e-6, 1e-3, 0.05, 0.2, 0.8, 5.0, 1e3}) {
      const auto k = code_dimensions(n, p, {P, 2 * P, 4 * P}).k;
      for (int v : k) {
        EXPECT_GE(v, 0);
        EXPECT_LE(v, n);
      }
      EXPECT_GE(k[0], k[1]);
      EXPECT_GE(k[1], k[2]);
      EXPECT_LE(k[0], prev);
      prev = k[0];
    }
  }
  EXPECT_TRUE(code_dimensions(4, 11, {10, 20, 30}).degenerate);
  EXPECT_THROW(code_dimensions(4, 11, {0.2, 0.1, 0.8}), Error);
}

TEST(ConstructionA, MembershipAndVolume) {
  IntMat g(3, 1);
  g << 1, 2, 4;
  const Lattice L = construction_a(g, 5, 0.5);
  EXPECT_NEAR(L.volume(), std::pow(0.5, 3) * 25, 1e-12);
  Vec c(3);
  c << 0.5, 1.0, 2.0;
  EXPECT_TRUE(L.contains(c));
  c << 0.5 * 2, 0.5 * 4, 0.5 * 8;  // 2 * codeword
  EXPECT_TRUE(L.contains(c));
  c << 0.5, 0.0, 0.0;
  EXPECT_FALSE(L.contains(c));
  c << 2.5, 0.0, 0.0;
  EXPECT_TRUE(L.contains(c));
  IntMat bad(2, 2);
  bad << 1, 2, 2, 4;
  EXPECT_THROW(construction_a(bad, 5, 1.0), Error);
}

TEST(BuildChain, NestingAndVolumes) {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = build_chain(4, {0.05, 0.2, 0.8}, rng);
    EXPECT_EQ(c.p, 11);
    EXPECT_NEAR(c.alpha, 4.0 / 11.0, 1e-15);
    EXPECT_EQ(c.k, (std::array<int, 3>{2, 1, 0}));
    EXPECT_TRUE(is_sublattice(c.L1, c.L2));
    EXPECT_TRUE(is_sublattice(c.L2, c.L3));
    for (int i = 0; i < 3; ++i) {
      const double v = std::pow(c.alpha, 4) * std::pow(11.0, 4 - c.k[i]);
      EXPECT_NEAR(c.lattice(i).volume() / v, 1.0, 1e-9);
    }
    // Each basis vector of a coarser lattice lies in the finer one.
    for (int j = 0; j < 4; ++j) {
      EXPECT_TRUE(c.L1.contains(c.L2.basis().col(j)));
      EXPECT_TRUE(c.L2.contains(c.L3.basis().col(j)));
    }
  }
  EXPECT_NEAR(std::pow(4.0 / 11.0, 4) * std::pow(11.0, 2), 2.1157, 1e-4);
  EXPECT_THROW(build_chain(13, {0.05, 0.2, 0.8}, rng), Error);
}

TEST(BuildChain, QuotientCounts) {
  Rng rng(5);
  for (int n : {2, 3, 4}) {
    const auto c = build_chain(n, {0.02, 0.3, 2.0}, rng, 7);
    EXPECT_TRUE(c.prime_override);
    const CosetTable t12(c.L1, c.L2), t23(c.L2, c.L3), t13(c.L1, c.L3);
    EXPECT_EQ(static_cast<std::int64_t>(t12.size()), ipow(7, c.k[0] - c.k[1]));
    EXPECT_EQ(static_cast<std::int64_t>(t23.size()), ipow(7, c.k[1] - c.k[2]));
    EXPECT_EQ(t13.size(), t12.size() * t23.size());
  }
}

TEST(ChainRates, Examples) {
  Rng rng(2);
  const auto c = build_chain(4, {0.05, 0.2, 0.8}, rng);
  const auto r = chain_rates(c);
  EXPECT_NEAR(r.r_p, 0.25 * std::log(11.0), 1e-15);
  EXPECT_NEAR(r.r_p, 0.5995, 1e-4);
  EXPECT_NEAR(r.r_k, 0.5995, 1e-4);
  EXPECT_NEAR(r.r_p, std::log(c.L2.volume() / c.L1.volume()) / 4, 1e-12);
  auto flat = c;
  flat.k = {1, 1, 0};
  EXPECT_EQ(chain_rates(flat).r_p, 0.0);
}

TEST(ChainJson, RoundTrip) {
  Rng rng(9);
  const auto c = build_chain(5, {0.01, 0.1, 1.0}, rng);
  const auto j = chain_to_json(c);
  const auto d = chain_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(d.n, c.n);
  EXPECT_EQ(d.p, c.p);
  EXPECT_EQ(d.xi, c.xi);
  EXPECT_EQ(d.alpha, c.alpha);
  EXPECT_EQ(d.k, c.k);
  EXPECT_EQ(d.targets, c.targets);
  EXPECT_TRUE(d.generator == c.generator);
  EXPECT_TRUE(d.L1.basis() == c.L1.basis());
  EXPECT_EQ(chain_to_json(d).dump(), j.dump());

  auto broken = j;
  broken["generator"] = std::vector<int>{1, 2};
  EXPECT_THROW(chain_from_json(broken), Error);
  EXPECT_THROW(chain_from_json(nlohmann::json::object()), Error);
}

TEST(BuildChain, VolumeTargetsLogged) {
  Rng rng(4);
  for (int n : {4, 6, 8}) {
    const auto c = build_chain(n, {0.05, 0.2, 0.8}, rng);
    for (int i = 0; i < 3; ++i) {
      const double ratio = std::pow(c.volume(i), 2.0 / n) / (2 * M_PI * M_E * c.targets[i]);
      RecordProperty("n" + std::to_string(n) + "_lambda" + std::to_string(i + 1), std::to_string(ratio));
      EXPECT_GT(ratio, 0.0);
    }
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "latskg/flatness.hpp"
#include "latskg/protocol.hpp"

using namespace latskg;

namespace {

const std::array<double, 3> kTargets{0.05, 0.2, 0.8};

// sigma_1^2 = 0.05, sigma_2^2 = 4 with sigma_x^2 = 4.84.
GaussianSourceModel leaky_source() {
  const double sx = 2.2;
  return make_source(sx, 1.0, 1.0, std::sqrt(1 - 0.05 / (sx * sx)), std::sqrt(1 - 4.0 / (sx * sx)));
}

double min_norm(const Lattice& L) {
  double best = INFINITY;
  for_each_point_in_ball(L, Vec::Zero(L.dim()), 3 * std::pow(L.volume(), 1.0 / L.dim()),
                         [&](const IntVec& z, double d2) {
                           if (std::any_of(z.begin(), z.end(), [](auto v) { return v != 0; }))
                             best = std::min(best, d2);
                         });
  return std::sqrt(best);
}

}  // namespace

TEST(Source, Examples) {
  const auto m = make_source(1, 1, 1, 0.9, 0.5);
  EXPECT_NEAR(m.sigma_1() * m.sigma_1(), 0.19, 1e-14);
  EXPECT_NEAR(m.sigma_2() * m.sigma_2(), 0.75, 1e-14);
  EXPECT_NEAR(m.rho_yz, 0.5556, 1e-4);
  EXPECT_TRUE(m.rho_yz_defaulted);
  EXPECT_THROW(make_source(1, 1, 1, 0.6, 0.6), Error);
  try {
    make_source(1, 1, 1, 0.6, 0.6);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotDegradable);
  }
  const auto a = make_source(1, 1, 1, 0.5, 0.1, 0.2);
  EXPECT_GT(a.correlation().determinant(), 0.0);
  // 1 - 0.25 - 0.01 - 0.04 + 2 * 0.5 * 0.1 * 0.2
  EXPECT_NEAR(a.correlation().determinant(), 0.72, 1e-14);
  try {
    make_source(1, 1, 1, 0.9, 0.5, -0.9);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPSD);
  }
  EXPECT_THROW(make_source(0, 1, 1, 0.5, 0.1), Error);
}

TEST(Source, DegradedSurrogate) {
  const auto m = make_source(1.5, 0.7, 2.0, 0.9, 0.5, 0.3);
  const auto d = degraded_surrogate(m);
  EXPECT_NEAR(d.rho_yz, 0.5 / 0.9, 1e-15);
  EXPECT_EQ(d.sigma_1(), m.sigma_1());
  EXPECT_EQ(d.sigma_2(), m.sigma_2());
  const auto dd = degraded_surrogate(d);
  EXPECT_EQ(dd.rho_yz, d.rho_yz);
  EXPECT_EQ(secret_key_capacity(d.sigma_1(), d.sigma_2()), secret_key_capacity(m.sigma_1(), m.sigma_2()));
}

TEST(Source, SampleMoments) {
  const auto m = make_source(1.3, 0.8, 1.1, 0.85, 0.4, 0.2);
  Rng rng(21);
  const int N = 100000;
  const auto s = sample_source(m, N, rng);
  const Eigen::Matrix3d target = m.covariance();
  Eigen::Matrix<double, Eigen::Dynamic, 3> data(N, 3);
  data.col(0) = s.x;
  data.col(1) = s.y;
  data.col(2) = s.z;
  const Eigen::Matrix3d cov = data.transpose() * data / N;
  for (int i = 0; i < 3; ++i) {
    EXPECT_LE(std::abs(data.col(i).mean()), 4 * std::sqrt(target(i, i) / N));
    for (int j = 0; j < 3; ++j)
      EXPECT_LE(std::abs(cov(i, j) - target(i, j)), 4.0 / std::sqrt(N) * std::sqrt(target(i, i) * target(j, j)) * 1.5);
  }
  // W1 = X - Y_hat is uncorrelated with Y.
  const Vec w1 = s.x - m.y_scale() * s.y;
  const double corr = w1.dot(s.y) / std::sqrt(w1.squaredNorm() * s.y.squaredNorm());
  EXPECT_LE(std::abs(corr), 4.0 / std::sqrt(N));
  EXPECT_NEAR(w1.squaredNorm() / N / (m.sigma_1() * m.sigma_1()), 1.0, 0.02);
}

TEST(Protocol, BijectionAndRanges) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  const auto m = leaky_source();
  Rng rng(4);
  for (int i = 0; i < 20000; ++i) {
    const auto t = run_round(ctx, m, rng);
    ASSERT_TRUE(check_bijection(ctx, t));
    ASSERT_TRUE(ctx.chain().L1.contains(t.x_q));
    ASSERT_TRUE(ctx.chain().L1.contains(t.s));
    ASSERT_TRUE(in_voronoi_cell(ctx.chain().L2, t.s));
    ASSERT_TRUE(ctx.chain().L2.contains(t.k));
    ASSERT_TRUE(ctx.key_region().contains(t.k));
    ASSERT_TRUE(ctx.dither_region().contains(t.u));
  }
}

TEST(Protocol, ConditionalLawOfQuantizer) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.3});
  const auto& L1 = ctx.chain().L1;
  Vec x(4), u(4);
  x << 0.3, -0.7, 1.1, 0.05;
  u = L1.basis() * Vec::Constant(4, 0.37);
  Rng rng(5);
  std::map<IntVec, double> counts;
  const int N = 50000;
  for (int i = 0; i < N; ++i) counts[*L1.integer_coords(alice_encode(ctx, x, u, rng).x_q)] += 1;
  std::vector<double> obs, probs;
  for (const auto& [z, c] : counts) {
    obs.push_back(c);
    probs.push_back(discrete_gaussian_pmf(L1, 0.3, x + u, L1.point(z)));
  }
  double rest = 1.0;
  for (double p : probs) rest -= p;
  obs.push_back(0.0);
  probs.push_back(std::max(rest, 0.0));
  EXPECT_GT(chi_square_test(obs, probs).p_value, 1e-3);
}

TEST(Protocol, ReliabilityEquivalence) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  // A noisier source so that failures occur.
  const auto m = make_source(2.2, 1.0, 1.0, 0.95, 0.3);
  Rng rng(6);
  int failures = 0;
  for (int i = 0; i < 20000; ++i) {
    const auto t = run_round(ctx, m, rng);
    const auto c = check_reliability(ctx, m, t);
    ASSERT_TRUE(c.consistent());
    if (!t.reconstructed) ++failures;
    if (t.reconstructed) {
      ASSERT_TRUE(t.success);
    }
  }
  EXPECT_GT(failures, 0);
  EXPECT_LT(failures, 20000);
}

TEST(Protocol, StronglyReliable) {
  // Lambda1 = alpha Z^4 here, so the quantisation error stays well inside V(Lambda2).
  Rng crng(8);
  auto chain = build_chain(4, {0.01, 0.3, 2.0}, crng);
  ASSERT_EQ(chain.k, (std::array<int, 3>{4, 1, 0}));
  const double packing = min_norm(chain.L2) / 2;
  const auto m = make_source(1.0, 1.0, 1.0, std::sqrt(1 - 0.0025), 0.5);  // sigma_1 = 0.05
  ProtocolContext ctx(chain, QuantizerConfig{0.05});
  ASSERT_GT(packing, 6 * std::hypot(m.sigma_1(), 0.05));
  Rng rng(9);
  int errors = 0;
  for (int i = 0; i < 20000; ++i) errors += run_round(ctx, m, rng).success ? 0 : 1;
  EXPECT_LE(errors / 20000.0, 1e-3);
}

TEST(Protocol, InvalidPublicMessage) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  const auto m = leaky_source();
  Vec y = Vec::Zero(4), u = Vec::Zero(4);
  Vec s = Vec::Constant(4, 0.123);
  try {
    bob_decode(ctx, m, y, u, s);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidPublicMessage);
  }
  // A Lambda2 point other than zero is a lattice point but outside V(Lambda2).
  EXPECT_THROW(bob_decode(ctx, m, y, u, ctx.chain().L2.basis().col(0)), Error);
  EXPECT_NO_THROW(bob_decode(ctx, m, y, u, Vec::Zero(4)));
}

TEST(Transcript, JsonLinesRoundTrip) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  Rng rng(10);
  const auto t = run_round(ctx, leaky_source(), rng);
  const auto line = transcript_to_json_line(t);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto back = transcript_from_json_line(line);
  EXPECT_TRUE(back.x_q == t.x_q);
  EXPECT_TRUE(back.z == t.z);
  EXPECT_TRUE(back.k_hat == t.k_hat);
  EXPECT_EQ(back.success, t.success);
  EXPECT_EQ(transcript_to_json_line(back), line);
  EXPECT_THROW(transcript_from_json_line("{\"u\": 1}"), Error);
}

TEST(Eve, PosteriorNormalisationAndEdge) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  ctx.build_tables();
  EXPECT_EQ(ctx.t13().size(), 121u);
  const auto m = leaky_source();
  EvePosterior eve(ctx, m.sigma_2());
  Rng rng(11);
  for (int i = 0; i < 3; ++i) {
    Vec c = sample_normal_vector(4, 1.0, rng);
    double mass = 0;
    const auto pmf = eve.pmf_at(c, &mass);
    EXPECT_NEAR(mass, 1.0, 1e-8);
    double total = 0;
    for (double v : pmf) total += v;
    EXPECT_NEAR(total, 1.0, 1e-9);
    double pmass = 0;
    const auto primal = eve.pmf_at_primal(c, &pmass);
    EXPECT_NEAR(pmass, 1.0, 1e-8);
    for (std::size_t j = 0; j < pmf.size(); ++j) EXPECT_NEAR(pmf[j], primal[j], 1e-10);
  }

  NestedChain flat = build_chain(4, kTargets, crng);
  flat.k = {1, 1, 1};
  assemble_chain(flat);
  ProtocolContext one(flat, QuantizerConfig{1.5});
  one.build_tables();
  EvePosterior e1(one, 1.0);
  const auto atom = e1.pmf_at(Vec::Constant(4, 0.3));
  ASSERT_EQ(atom.size(), 1u);
  EXPECT_NEAR(atom[0], 1.0, 1e-15);
}

TEST(Eve, DitherShiftPermutesPosterior) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  ctx.build_tables();
  const auto m = leaky_source();
  EvePosterior eve(ctx, m.sigma_2());
  Vec c(4);
  c << 0.4, -1.2, 0.9, 2.1;
  const Vec lam = ctx.chain().L1.basis() * Vec::Constant(4, 1.0);
  const auto a = eve.pmf_at(c);
  const auto b = eve.pmf_at(c + lam);
  const auto& reps = ctx.t13().representatives();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[ctx.t13().index(reps[i] + lam)], a[i], 1e-9);
  const std::vector<double> w(ctx.t23().size(), 1.0 / ctx.t23().size());
  EXPECT_NEAR(leakage_terms(ctx, a, w).xbar_distance, leakage_terms(ctx, b, w).xbar_distance, 1e-9);
}

TEST(Eve, MatchesSimulation) {
  Rng crng(3);
  ProtocolContext ctx(build_chain(4, kTargets, crng), QuantizerConfig{0.4});
  ctx.build_tables();
  const double s2 = 0.8;  // narrower than the protocol setting so the pmf is far from uniform
  EvePosterior eve(ctx, s2);
  Vec c(4);
  c << 0.2, 0.5, -0.3, 1.0;
  const auto pmf = eve.pmf_at(c);
  Rng rng(12);
  std::vector<double> obs(pmf.size(), 0.0);
  const int N = 60000;
  for (int i = 0; i < N; ++i) {
    const Vec w = sample_normal_vector(4, s2, rng);
    obs[ctx.t13().index(randomized_round(ctx.chain().L1, 0.4, w + c, rng))] += 1;
  }
  EXPECT_GT(chi_square_test(obs, pmf).p_value, 1e-3);
  EXPECT_GT(distance_to_uniform(pmf), 0.1);
}

TEST(Rates, Examples) {
  EXPECT_EQ(tradeoff_bound(1.0, 2.0, 0.0), 0.0);
  EXPECT_NEAR(tradeoff_bound(1.0, 2.0, 0.5 * std::log(2.0)), 0.5 * std::log(2.5), 1e-15);
  EXPECT_NEAR(tradeoff_bound(1.0, 2.0, 0.5 * std::log(2.0)), 0.45815, 1e-5);
  EXPECT_NEAR(tradeoff_bound(1.0, 2.0, 40.0), std::log(2.0), 1e-15);
  EXPECT_EQ(tradeoff_bound(1.0, 2.0, INFINITY), std::log(2.0));
  EXPECT_NEAR(secret_key_capacity(1.0, 2.0), 0.69315, 1e-5);
  EXPECT_EQ(secret_key_capacity(0.7, 0.7), 0.0);
  EXPECT_NEAR(secret_key_capacity(3.0, 6.0), secret_key_capacity(1.0, 2.0), 1e-15);
  EXPECT_NEAR(achievable_bound(1.0, 2.0, 1e-9), std::log(2.0), 1e-12);
  EXPECT_LT(achievable_bound(1.0, 2.0, 1e9), 1e-12);
  for (int i = 0; i < 20; ++i) {
    const double sq = 0.05 * std::pow(1.4, i);
    const double rp = matched_public_rate(0.6, sq);
    EXPECT_NEAR(achievable_bound(0.6, 1.5, sq), tradeoff_bound(0.6, 1.5, rp), 1e-12);
  }
  double prev = -1;
  for (double rp = 0.0; rp < 5; rp += 0.1) {
    const double v = tradeoff_bound(0.6, 1.5, rp);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_THROW(tradeoff_bound(1.0, 2.0, -0.1), Error);
}

TEST(Rates, Report) {
  Rng crng(3);
  const auto chain = build_chain(4, kTargets, crng);
  const auto m = leaky_source();
  const QuantizerConfig q{0.4};
  const auto r = rate_report(chain, m, q);
  EXPECT_NEAR(r.r_p, 0.25 * std::log(11.0), 1e-15);
  EXPECT_LE(r.r_bar_k, r.c_s);
  EXPECT_GE(r.r_bar_k, 0.0);
  EXPECT_LE(r.achievable, r.c_s);
  const auto v = volume_conditions(chain, m, q);
  EXPECT_TRUE(v.ok1);
  EXPECT_TRUE(v.ok2);
  EXPECT_TRUE(v.ok3);
}

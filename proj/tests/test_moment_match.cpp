#include "ldta/moment_match.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ldta;

namespace {

Vector node_stats(const Vector& alpha) {
  return make_dirichlet_prior(alpha).expected_sufficient_stats();
}

Vector random_alpha(Rng& rng, std::size_t c) {
  Vector a(ix(c));
  for (std::size_t i = 0; i < c; ++i) a(ix(i)) = std::exp(oracle::uniform(rng, std::log(0.1), std::log(50.0)));
  return a;
}

double max_rel(const Vector& a, const Vector& b) {
  return ((a - b).array() / b.array()).abs().maxCoeff();
}

}  // namespace

TEST(FixedPoint, RecoversFlatBeta) {
  const Vector target = node_stats(Vector{{2.0, 3.0}});
  const NodeSolve s = match_node_fixed_point(target, Vector::Ones(2));
  ASSERT_TRUE(s.converged);
  EXPECT_NEAR(s.alpha(0), 2.0, 1e-6);
  EXPECT_NEAR(s.alpha(1), 3.0, 1e-6);
}

TEST(FixedPoint, SymmetricTargetsGiveSymmetricOutput) {
  const NodeSolve s = match_node_fixed_point(Vector::Constant(4, -2.0), Vector::Ones(4));
  ASSERT_TRUE(s.converged);
  EXPECT_LT((s.alpha.array() - s.alpha(0)).abs().maxCoeff(), 1e-12);
}

TEST(Newton, RoundTripRandomNodes) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t c = oracle::uniform_int(rng, 2, 8);
    const Vector alpha = random_alpha(rng, c);
    const NodeSolve s = match_node_newton(node_stats(alpha), Vector::Ones(ix(c)));
    ASSERT_TRUE(s.converged) << alpha.transpose();
    EXPECT_LT(max_rel(s.alpha, alpha), 1e-8) << alpha.transpose();
  }
}

TEST(Newton, AgreesWithFixedPoint) {
  Rng rng(2);
  int newton_iters = 0, fixed_iters = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = oracle::uniform_int(rng, 2, 6);
    const Vector target = node_stats(random_alpha(rng, c));
    const NodeSolve n = match_node_newton(target, Vector::Ones(ix(c)));
    const NodeSolve f = match_node_fixed_point(target, Vector::Ones(ix(c)));
    ASSERT_TRUE(n.converged && f.converged);
    EXPECT_LT(max_rel(n.alpha, f.alpha), 1e-6);
    newton_iters += n.iterations;
    fixed_iters += f.iterations;
  }
  // Soft performance property: Newton needs far fewer iterations.
  EXPECT_LE(newton_iters * 4, fixed_iters);
}

TEST(Newton, MixtureTargetsStillSolvable) {
  // Targets averaged over two Dirichlets need not come from a single one's
  // proportions, but the inverse still exists.
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = oracle::uniform_int(rng, 2, 5);
    const Vector t = 0.5 * (node_stats(random_alpha(rng, c)) + node_stats(random_alpha(rng, c)));
    const NodeSolve s = match_node_newton(t, Vector::Ones(ix(c)));
    ASSERT_TRUE(s.converged);
    EXPECT_LT((node_stats(s.alpha) - t).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Newton, ShermanMorrisonMatchesDenseInverse) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector alpha = random_alpha(rng, 5);
    const Matrix dense = node_jacobian(alpha).inverse();
    const Matrix sm = inverse_jacobian(alpha);
    EXPECT_LT((sm - dense).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, dense.cwiseAbs().maxCoeff()));
    const Vector v = oracle::random_vector(rng, 5, -1, 1);
    EXPECT_LT((newton_direction(alpha, v) - dense * v).cwiseAbs().maxCoeff(),
              1e-9 * std::max(1.0, (dense * v).cwiseAbs().maxCoeff()));
  }
}

TEST(Newton, RejectsBadInput) {
  EXPECT_THROW(match_node_newton(Vector{{-1.0, 0.5}}, Vector::Ones(2)), ParameterError);
  EXPECT_THROW(match_node_newton(Vector{{-1.0, -1.0}}, Vector{{1.0, 0.0}}), ParameterError);
  EXPECT_THROW(match_node_newton(Vector{{-1.0, std::nan("")}}, Vector::Ones(2)), ParameterError);
}

TEST(MatchTree, RoundTripOnRandomTrees) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = oracle::random_dtree_log(rng, oracle::uniform_int(rng, 2, 8), 0.1, 50.0);
    const TreeMatch m = match_tree(p.topology_ptr(), p.expected_sufficient_stats());
    EXPECT_LT(max_rel(m.params.xi(), p.xi()), 1e-7);
    EXPECT_LT((m.params.expected_sufficient_stats() - p.expected_sufficient_stats()).cwiseAbs().maxCoeff(),
              1e-8);
  }
}

TEST(MatchTree, FlatTreeIsSingleNode) {
  const Vector alpha{{0.5, 2.0, 7.0}};
  const auto p = make_dirichlet_prior(alpha);
  const TreeMatch m = match_tree(p.topology_ptr(), p.expected_sufficient_stats());
  const NodeSolve s = match_node_newton(p.expected_sufficient_stats(), Vector::Ones(3));
  EXPECT_EQ(m.params.xi(), s.alpha);
}

TEST(MatchTree, BlocksAreIndependent) {
  const auto p = make_beta_liouville_prior(2.0, 1.5, Vector{{0.7, 1.1, 3.0}});
  Vector target = p.expected_sufficient_stats();
  const Vector base = match_tree(p.topology_ptr(), target).params.xi();
  // Perturb only the inner Dirichlet block (branches 1..3).
  target.segment(1, 3) = make_dirichlet_prior(Vector{{2.0, 0.4, 1.0}}).expected_sufficient_stats();
  const Vector moved = match_tree(p.topology_ptr(), target).params.xi();
  EXPECT_EQ(moved(0), base(0));
  EXPECT_EQ(moved(4), base(4));
  EXPECT_GT((moved.segment(1, 3) - base.segment(1, 3)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(MatchTree, WarmStartGivesSameAnswer) {
  Rng rng(6);
  const auto p = oracle::random_dtree(rng, 6, 0.3, 9.0);
  const Vector t = p.expected_sufficient_stats();
  const Vector warm = p.xi() * 1.3;
  const TreeMatch a = match_tree(p.topology_ptr(), t);
  const TreeMatch b = match_tree(p.topology_ptr(), t, warm);
  EXPECT_LT(max_rel(a.params.xi(), b.params.xi()), 1e-9);
  EXPECT_LE(b.newton_iterations, a.newton_iterations);
}

TEST(MatchTree, ErrorNamesTheNode) {
  const auto topo = flat_topology(3);
  try {
    match_tree(topo, Vector{{-1.0, 0.2, -1.0}});
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("root"), std::string::npos);
  }
}

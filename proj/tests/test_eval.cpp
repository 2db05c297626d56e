#include "ldta/eval.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace ldta;
using oracle::make_document;

namespace {

Corpus corpus_of(std::size_t V, std::vector<Document> docs) {
  Corpus c;
  c.V = V;
  c.docs = std::move(docs);
  return c;
}

}  // namespace

TEST(Perplexity, UniformPredictiveGivesVocabularySize) {
  Rng rng(1);
  const std::size_t V = 7, K = 3;
  const Matrix phi = Matrix::Constant(V, K, 1.0 / V);
  std::vector<Document> docs;
  std::vector<DirichletTree> post;
  for (int m = 0; m < 4; ++m) {
    docs.push_back(oracle::random_document(rng, V, 12));
    post.push_back(oracle::random_dtree(rng, K, 0.5, 3.0));
  }
  EXPECT_NEAR(perplexity(phi, post, corpus_of(V, docs)), double(V), 1e-12);
}

TEST(Perplexity, TwoWordHalfHalf) {
  const Matrix phi = Matrix::Identity(2, 2);
  const std::vector<DirichletTree> post{make_dirichlet_prior(Vector{{3.0, 3.0}})};
  EXPECT_NEAR(perplexity(phi, post, corpus_of(2, {make_document({0, 1}, {1, 1})})), 2.0, 1e-14);
}

TEST(Perplexity, MatchesScalarLoop) {
  Rng rng(2);
  const std::size_t V = 9, K = 4;
  const Matrix phi = oracle::random_word_topic(rng, V, K);
  std::vector<Document> docs;
  std::vector<DirichletTree> post;
  double log_lik = 0, tokens = 0;
  for (int m = 0; m < 5; ++m) {
    const Document d = oracle::random_document(rng, V, 20);
    const Vector alpha = oracle::random_vector(rng, K, 0.3, 4.0);
    for (std::size_t j = 0; j < d.size(); ++j) {
      double p = 0;
      for (std::size_t k = 0; k < K; ++k) p += phi(ix(d.words[j]), ix(k)) * alpha(ix(k)) / alpha.sum();
      log_lik += d.counts(ix(j)) * std::log(p);
      tokens += d.counts(ix(j));
    }
    docs.push_back(d);
    post.push_back(make_dirichlet_prior(alpha));
  }
  EXPECT_NEAR(perplexity(phi, post, corpus_of(V, docs)), std::exp(-log_lik / tokens), 1e-10);
}

TEST(Perplexity, OrderAndSplitInvariant) {
  Rng rng(3);
  const std::size_t V = 6, K = 3;
  const Matrix phi = oracle::random_word_topic(rng, V, K);
  const auto q0 = oracle::random_dtree(rng, K, 0.5, 3.0);
  const auto q1 = oracle::random_dtree(rng, K, 0.5, 3.0);
  const Document a = make_document({0, 2, 5}, {2, 1, 4});
  const Document b = make_document({1, 3}, {3, 1});
  const double base = perplexity(phi, {q0, q1}, corpus_of(V, {a, b}));
  EXPECT_NEAR(perplexity(phi, {q1, q0}, corpus_of(V, {b, a})), base, 1e-13);
  // a split into two pieces sharing its posterior.
  const Document a1 = make_document({0, 2}, {2, 1});
  const Document a2 = make_document({5}, {4});
  EXPECT_NEAR(perplexity(phi, {q0, q0, q1}, corpus_of(V, {a1, a2, b})), base, 1e-12);
}

TEST(Perplexity, Errors) {
  const Matrix phi = Matrix::Identity(2, 2);
  const auto q = make_dirichlet_prior(Vector{{1.0, 1.0}});
  const Corpus c = corpus_of(2, {make_document({0}, {1})});
  EXPECT_THROW(perplexity(phi, {}, c), ParameterError);
  Matrix dead = phi;
  dead.row(0).setZero();
  EXPECT_THROW(perplexity(dead, {q}, c), NumericalError);
}

TEST(Diversity, IdenticalAndDisjointTopics) {
  Rng rng(4);
  const std::size_t V = 30, K = 3, N = 10;
  const Vector col = oracle::random_vector(rng, V, 0.1, 1.0);
  Matrix same(V, K);
  for (std::size_t k = 0; k < K; ++k) same.col(ix(k)) = col / col.sum();
  EXPECT_NEAR(diversity(same, N), 1.0 / K, 1e-15);
  Matrix disjoint = Matrix::Constant(V, K, 1e-3);
  for (std::size_t k = 0; k < K; ++k) disjoint.block(ix(k * N), ix(k), ix(N), 1).setConstant(0.09);
  EXPECT_NEAR(diversity(disjoint, N), 1.0, 1e-15);
}

TEST(Diversity, MatchesSetUnion) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t V = oracle::uniform_int(rng, 5, 25), K = oracle::uniform_int(rng, 2, 6);
    const std::size_t N = oracle::uniform_int(rng, 1, V);
    Matrix phi = oracle::random_word_topic(rng, V, K);
    // Quantise so ties occur and exercise the lower-index rule.
    phi = (phi * 10).array().round() / 10;
    std::set<std::size_t> seen;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<std::pair<double, std::size_t>> order;
      for (std::size_t v = 0; v < V; ++v) order.push_back({-phi(ix(v), ix(k)), v});
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < N; ++i) seen.insert(order[i].second);
    }
    EXPECT_DOUBLE_EQ(diversity(phi, N), double(seen.size()) / double(K * N));
  }
}

TEST(Diversity, TiesGoToLowerIndexAndBounds) {
  const Matrix phi = Matrix::Constant(5, 1, 0.2);
  EXPECT_EQ(top_words(phi, 0, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(diversity(phi, 6), ParameterError);
  EXPECT_THROW(diversity(phi, 0), ParameterError);
}

TEST(Diversity, DisjointReplacementNeverDecreases) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t V = 40, K = 4, N = 5;
    Matrix phi = oracle::random_word_topic(rng, V, K);
    const double before = diversity(phi, N);
    // Give topic 0 a top list from words nobody else ranks in its top N.
    std::set<std::size_t> used;
    for (std::size_t k = 1; k < K; ++k) {
      for (std::size_t w : top_words(phi, k, N)) used.insert(w);
    }
    phi.col(0).setConstant(1e-4);
    std::size_t placed = 0;
    for (std::size_t v = 0; v < V && placed < N; ++v) {
      if (!used.count(v)) {
        phi(ix(v), 0) = 1.0;
        ++placed;
      }
    }
    phi.col(0) /= phi.col(0).sum();
    EXPECT_GE(diversity(phi, N), before);
  }
}

TEST(Coherence, HandCorpus) {
  // D(0)=3, D(1)=3, D(2)=2, D(0,1)=2, D(0,2)=1, D(1,2)=1.
  const Corpus c = corpus_of(4, {make_document({0, 1}, {1, 2}), make_document({0, 2}, {3, 1}),
                                 make_document({1, 2, 3}, {1, 1, 1}), make_document({0, 1}, {1, 1})});
  const Matrix phi = (Matrix(4, 1) << 0.4, 0.3, 0.2, 0.1).finished();
  const Coherence h = coherence_umass(phi, c, 3);
  const double expected = (std::log(3.0 / 3.0) + std::log(2.0 / 3.0) + std::log(2.0 / 3.0)) / 3.0;
  EXPECT_NEAR(h.mean, expected, 1e-15);
  ASSERT_EQ(h.per_topic.size(), 1u);
  EXPECT_EQ(h.skipped_pairs, 0u);
}

TEST(Coherence, CoOccurringAndDisjointPairs) {
  // Words 0 and 1 always together in 4 docs; words 2 and 3 never together.
  std::vector<Document> docs;
  for (int i = 0; i < 4; ++i) docs.push_back(make_document({0, 1}, {1, 1}));
  docs.push_back(make_document({2}, {1}));
  docs.push_back(make_document({3}, {2}));
  docs.push_back(make_document({3}, {1}));
  const Corpus c = corpus_of(4, docs);
  const Matrix phi = (Matrix(4, 2) << .6, .01, .39, .01, .005, .49, .005, .49).finished();
  const Coherence h = coherence_umass(phi, c, 2);
  EXPECT_NEAR(h.per_topic[0], std::log(5.0 / 4.0), 1e-15);
  EXPECT_GT(h.per_topic[0], 0.0);
  // Ranked [2, 3] by lower index on the tie: pair log(1 / D(2)).
  EXPECT_NEAR(h.per_topic[1], std::log(1.0 / 1.0), 1e-15);
  const Matrix flipped = (Matrix(4, 1) << .005, .005, .4, .59).finished();
  EXPECT_NEAR(coherence_umass(flipped, c, 2).mean, std::log(1.0 / 2.0), 1e-15);
  EXPECT_LT(coherence_umass(flipped, c, 2).mean, 0.0);
}

TEST(Coherence, UnseenTopWordsAreSkipped) {
  const Corpus c = corpus_of(3, {make_document({0, 1}, {1, 1}), make_document({1}, {1})});
  const Matrix phi = (Matrix(3, 1) << .2, .3, .5).finished();  // ranks 2, 1, 0
  const Coherence h = coherence_umass(phi, c, 3);
  // Pairs with w_j = 2 are skipped; the remaining pair is (0 | 1).
  EXPECT_EQ(h.skipped_pairs, 2u);
  EXPECT_NEAR(h.mean, std::log(2.0 / 2.0), 1e-15);
  EXPECT_TRUE(std::isfinite(h.mean));
}

TEST(Coherence, Deterministic) {
  Rng rng(7);
  std::vector<Document> docs;
  for (int m = 0; m < 30; ++m) docs.push_back(oracle::random_document(rng, 20, 15));
  const Corpus c = corpus_of(20, docs);
  const Matrix phi = oracle::random_word_topic(rng, 20, 4);
  const Coherence a = coherence_umass(phi, c), b = coherence_umass(phi, c);
  EXPECT_EQ(a.per_topic, b.per_topic);
  EXPECT_TRUE(std::isfinite(a.mean));
}

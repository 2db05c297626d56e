#pragma once

// Pieces shared by the variational and EP fitters: the fit report, the
// word-topic M-step and the prior M-step.

#include "common.hpp"
#include "dtree.hpp"
#include "model.hpp"
#include "moment_match.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

namespace ldta {

struct FitReport {
  std::vector<double> trace;    // objective after each outer iteration
  std::vector<double> seconds;  // elapsed wall time at each trace entry
  int iterations = 0;
  bool converged = false;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
};

/// |current - previous| / |previous|.
inline double relative_change(double previous, double current) {
  if (previous == current) return 0.0;
  return std::abs(current - previous) / std::max(std::abs(previous), 1e-300);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// phi_vk proportional to sum_m weight_{k,j,m} n_{j,m} over present words. weights(m)
/// must return the K x nnz matrix for document m. Negative weights are
/// clipped to zero; a column with no mass becomes uniform and is reported in
/// empty_columns.
template <typename Weights>
Matrix m_step_word_topic(const Corpus& corpus, std::size_t K, Weights&& weights,
                         std::vector<std::size_t>* empty_columns = nullptr) {
  Matrix acc = Matrix::Zero(ix(corpus.V), ix(K));
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    const Document& doc = corpus.docs[m];
    const Matrix& w = weights(m);
    for (std::size_t j = 0; j < doc.size(); ++j) {
      for (std::size_t k = 0; k < K; ++k) {
        acc(ix(doc.words[j]), ix(k)) += std::max(0.0, w(ix(k), ix(j))) * doc.counts(ix(j));
      }
    }
  }
  if (empty_columns) empty_columns->clear();
  for (std::size_t k = 0; k < K; ++k) {
    const double total = acc.col(ix(k)).sum();
    if (total > 0.0) {
      acc.col(ix(k)) /= total;
    } else {
      acc.col(ix(k)).setConstant(1.0 / double(corpus.V));
      if (empty_columns) empty_columns->push_back(k);
    }
  }
  return acc;
}

struct PriorUpdate {
  DirichletTree prior;
  bool ok = true;
  std::string message;
};

/// Moment-matches the prior to the average expected sufficient statistics of
/// the per-document posteriors, warm-started at the current prior. On solver
/// failure the current prior is kept.
template <typename Posterior>
PriorUpdate m_step_prior(const DirichletTree& current, std::size_t M, Posterior&& posterior) {
  if (M == 0) throw ParameterError("m_step_prior: no documents");
  Vector mean = Vector::Zero(ix(current.branch_count()));
  for (std::size_t m = 0; m < M; ++m) mean += posterior(m).expected_sufficient_stats();
  mean /= double(M);
  try {
    return {match_tree(current.topology_ptr(), mean, current.xi()).params, true, {}};
  } catch (const std::exception& e) {
    return {current, false, e.what()};
  }
}

inline PriorUpdate m_step_prior(const DirichletTree& current,
                                const std::vector<DirichletTree>& posteriors) {
  return m_step_prior(current, posteriors.size(),
                      [&](std::size_t m) -> const DirichletTree& { return posteriors[m]; });
}

/// Word-topic matrix with each column drawn from a symmetric Dirichlet.
inline Matrix random_word_topic(std::size_t V, std::size_t K, double concentration, Rng& rng) {
  Matrix phi(ix(V), ix(K));
  const Vector alpha = Vector::Constant(ix(V), concentration);
  for (std::size_t k = 0; k < K; ++k) phi.col(ix(k)) = sample_dirichlet(alpha, rng);
  return phi;
}

}  // namespace ldta

#pragma once

// The LDTA generative model: corpus types, synthetic generation, joint
// density, exact and Monte Carlo evidence, and two matrix utilities.

#include "common.hpp"
#include "dtree.hpp"
#include "random.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldta {

/// Sparse bag of words. Word ids are 0-based here; files use 1-based ids.
struct Document {
  std::vector<std::size_t> words;
  Vector counts;

  std::size_t size() const { return words.size(); }
  double total() const { return counts.sum(); }
};

struct Corpus {
  std::size_t V = 0;
  std::vector<Document> docs;
  std::vector<std::string> vocab;

  std::size_t size() const { return docs.size(); }
  void validate() const;
};

struct ModelParams {
  DirichletTree prior;
  Matrix word_topic;  // V x K, columns sum to one

  std::size_t K() const { return prior.leaf_count(); }
  std::size_t V() const { return sz(word_topic.rows()); }
  void validate() const;
};

struct GenerationConfig {
  std::size_t doc_count = 1;
  double mean_length = 100.0;
  std::uint64_t seed = 1;
};

struct GeneratedCorpus {
  Corpus corpus;
  Matrix theta;         // M x K
  Matrix topic_counts;  // M x K, words drawn from each topic
};

GeneratedCorpus generate_corpus(const ModelParams& params, const GenerationConfig& cfg);

/// t(theta) = phi theta.
Vector mixture_word_probs(const ModelParams& params, const Vector& theta);

/// log DT(theta) + sum_vk n_vk (log phi_vk + log theta_k); -inf when a
/// positive count meets a zero probability.
double log_joint(const ModelParams& params, const Vector& theta, const Matrix& topic_counts);

struct EvidenceBudget {
  double max_words = 8;
  std::size_t max_topics = 4;
};

/// Exact log p(doc) by enumerating every split of each word's count over the
/// topics.
double log_exact_evidence(const ModelParams& params, const Document& doc,
                          const EvidenceBudget& budget = {});
inline double exact_evidence(const ModelParams& params, const Document& doc,
                             const EvidenceBudget& budget = {}) {
  return std::exp(log_exact_evidence(params, doc, budget));
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Average of prod_v t_v(theta)^{n_v} over prior draws.
MonteCarloEstimate mc_evidence(const ModelParams& params, const Document& doc, std::size_t samples,
                               std::uint64_t seed);

/// Bayes' rule in matrix form. cond is A x B with column b = p(a | b); returns
/// the B x A matrix with column a = p(b | a).
Matrix bayes_matrix_flip(const Matrix& cond, const Vector& marg_b, const Vector& marg_a);

/// c_mn = prod_l a_ml^{b_ln}, computed as exp(log(A) B).
Matrix matrix_inner_power(const Matrix& base, const Matrix& exponent);

// ---------------------------------------------------------------------------

inline void Corpus::validate() const {
  if (V == 0) throw ParameterError("corpus: empty vocabulary");
  if (!vocab.empty() && vocab.size() != V) {
    throw ParameterError("corpus: vocabulary has " + std::to_string(vocab.size()) +
                         " tokens but V = " + std::to_string(V));
  }
  for (std::size_t m = 0; m < docs.size(); ++m) {
    const Document& d = docs[m];
    if (sz(d.counts.size()) != d.words.size()) {
      throw ParameterError("corpus: document " + std::to_string(m) + " has mismatched arrays");
    }
    if (d.words.empty()) throw ParameterError("corpus: document " + std::to_string(m) + " is empty");
    for (std::size_t j = 0; j < d.words.size(); ++j) {
      if (d.words[j] >= V) throw ParameterError("corpus: word id out of range");
      if (!(d.counts(ix(j)) >= 1.0)) throw ParameterError("corpus: counts must be >= 1");
    }
  }
}

inline void ModelParams::validate() const {
  if (sz(word_topic.cols()) != K()) {
    throw ParameterError("model: word_topic has " + std::to_string(word_topic.cols()) +
                         " columns but the prior has " + std::to_string(K()) + " topics");
  }
  if ((word_topic.array() < 0.0).any() || !word_topic.allFinite()) {
    throw ParameterError("model: word_topic entries must be finite and non-negative");
  }
  for (Eigen::Index k = 0; k < word_topic.cols(); ++k) {
    if (std::abs(word_topic.col(k).sum() - 1.0) > 1e-10) {
      throw ParameterError("model: word_topic column " + std::to_string(k) + " does not sum to one");
    }
  }
}

inline GeneratedCorpus generate_corpus(const ModelParams& params, const GenerationConfig& cfg) {
  params.validate();
  if (cfg.doc_count == 0) throw ParameterError("generate: doc_count must be positive");
  if (!(cfg.mean_length > 0.0)) throw ParameterError("generate: mean_length must be positive");
  Rng rng(cfg.seed);
  const std::size_t K = params.K();
  const std::size_t V = params.V();
  GeneratedCorpus out;
  out.corpus.V = V;
  out.theta.resize(ix(cfg.doc_count), ix(K));
  out.topic_counts = Matrix::Zero(ix(cfg.doc_count), ix(K));
  for (std::size_t m = 0; m < cfg.doc_count; ++m) {
    std::uint64_t n = 0;
    while (n == 0) n = sample_poisson(cfg.mean_length, rng);
    const Vector theta = params.prior.sample(rng);
    out.theta.row(ix(m)) = theta.transpose();
    std::map<std::size_t, double> counts;
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::size_t z = sample_categorical(theta, rng);
      const std::size_t w = sample_categorical(params.word_topic.col(ix(z)), rng);
      out.topic_counts(ix(m), ix(z)) += 1.0;
      counts[w] += 1.0;
    }
    Document doc;
    doc.counts.resize(ix(counts.size()));
    for (const auto& [w, c] : counts) {
      doc.counts(ix(doc.words.size())) = c;
      doc.words.push_back(w);
    }
    out.corpus.docs.push_back(std::move(doc));
  }
  return out;
}

inline Vector mixture_word_probs(const ModelParams& params, const Vector& theta) {
  if (sz(theta.size()) != params.K()) throw ParameterError("mixture_word_probs: dimension mismatch");
  return params.word_topic * theta;
}

inline double log_joint(const ModelParams& params, const Vector& theta, const Matrix& topic_counts) {
  if (sz(topic_counts.rows()) != params.V() || sz(topic_counts.cols()) != params.K()) {
    throw ParameterError("log_joint: topic_counts must be V x K");
  }
  if ((topic_counts.array() < 0.0).any()) throw ParameterError("log_joint: negative counts");
  double out = params.prior.log_density(theta);
  for (Eigen::Index k = 0; k < topic_counts.cols(); ++k) {
    for (Eigen::Index v = 0; v < topic_counts.rows(); ++v) {
      const double n = topic_counts(v, k);
      if (n == 0.0) continue;
      const double phi = params.word_topic(v, k);
      if (phi == 0.0) return kNegInf;
      out += n * (std::log(phi) + std::log(theta(k)));
    }
  }
  return out;
}

namespace detail {

class SplitEnumerator {
 public:
  SplitEnumerator(const ModelParams& params, const Document& doc)
      : params_(params), doc_(doc), K_(params.K()), totals_(Vector::Zero(ix(K_))) {
    const auto N = static_cast<std::size_t>(doc.total());
    log_factorial_.resize(N + 1);
    log_factorial_[0] = 0.0;
    for (std::size_t i = 1; i <= N; ++i) log_factorial_[i] = log_factorial_[i - 1] + std::log(double(i));
  }

  double run() {
    word(0, 0.0);
    return acc_.value();
  }

 private:
  // Recurse over the document's words; at each word, over compositions of its count.
  void word(std::size_t j, double log_weight) {
    if (j == doc_.size()) {
      // Monomial expectations repeat across splits with equal topic totals.
      std::vector<long> key(K_);
      for (std::size_t k = 0; k < K_; ++k) key[k] = std::lround(totals_(ix(k)));
      auto it = memo_.find(key);
      if (it == memo_.end()) {
        it = memo_.emplace(key, params_.prior.log_expected_monomial(totals_)).first;
      }
      acc_.add(log_weight + it->second);
      return;
    }
    const auto n = static_cast<std::size_t>(std::lround(doc_.counts(ix(j))));
    compose(j, 0, n, log_weight + log_factorial_[n]);
  }

  void compose(std::size_t j, std::size_t k, std::size_t remaining, double log_weight) {
    const std::size_t v = doc_.words[j];
    if (k + 1 == K_) {
      if (!place(v, k, remaining)) return;
      word(j + 1, log_weight + term(v, k, remaining));
      totals_(ix(k)) -= double(remaining);
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      if (!place(v, k, c)) continue;
      compose(j, k + 1, remaining - c, log_weight + term(v, k, c));
      totals_(ix(k)) -= double(c);
    }
  }

  bool place(std::size_t v, std::size_t k, std::size_t c) {
    if (c > 0 && params_.word_topic(ix(v), ix(k)) == 0.0) return false;
    totals_(ix(k)) += double(c);
    return true;
  }

  double term(std::size_t v, std::size_t k, std::size_t c) const {
    if (c == 0) return 0.0;
    return double(c) * std::log(params_.word_topic(ix(v), ix(k))) - log_factorial_[c];
  }

  const ModelParams& params_;
  const Document& doc_;
  std::size_t K_;
  Vector totals_;
  std::vector<double> log_factorial_;
  std::map<std::vector<long>, double> memo_;
  LogSumExp acc_;
};

}  // namespace detail

inline double log_exact_evidence(const ModelParams& params, const Document& doc,
                                 const EvidenceBudget& budget) {
  params.validate();
  const double N = doc.total();
  if (N > budget.max_words || params.K() > budget.max_topics) {
    throw ParameterError("exact_evidence: instance (N=" + std::to_string(N) +
                         ", K=" + std::to_string(params.K()) + ") exceeds the enumeration budget");
  }
  for (Eigen::Index j = 0; j < doc.counts.size(); ++j) {
    if (doc.counts(j) != std::round(doc.counts(j)) || doc.counts(j) < 0) {
      throw ParameterError("exact_evidence: counts must be non-negative integers");
    }
    if (doc.words[sz(j)] >= params.V()) throw ParameterError("exact_evidence: word id out of range");
  }
  return detail::SplitEnumerator(params, doc).run();
}

inline MonteCarloEstimate mc_evidence(const ModelParams& params, const Document& doc,
                                      std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw ParameterError("mc_evidence: need at least two samples");
  Rng rng(seed);
  Vector logs(ix(samples));
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector t = mixture_word_probs(params, params.prior.sample(rng));
    double l = 0.0;
    for (std::size_t j = 0; j < doc.size(); ++j) l += doc.counts(ix(j)) * std::log(t(ix(doc.words[j])));
    logs(ix(s)) = l;
  }
  const double shift = logs.maxCoeff();
  const Vector w = (logs.array() - shift).exp();
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / double(samples - 1);
  const double scale = std::exp(shift);
  return {scale * mean, scale * std::sqrt(var / double(samples))};
}

inline Matrix bayes_matrix_flip(const Matrix& cond, const Vector& marg_b, const Vector& marg_a) {
  if (cond.rows() != marg_a.size() || cond.cols() != marg_b.size()) {
    throw ParameterError("bayes_matrix_flip: dimension mismatch");
  }
  if ((marg_a.array() <= 0.0).any() || (marg_b.array() <= 0.0).any()) {
    throw ParameterError("bayes_matrix_flip: marginals must be strictly positive");
  }
  for (Eigen::Index b = 0; b < cond.cols(); ++b) {
    if (std::abs(cond.col(b).sum() - 1.0) > 1e-8) {
      throw ParameterError("bayes_matrix_flip: conditional columns must sum to one");
    }
  }
  if (((cond * marg_b) - marg_a).cwiseAbs().maxCoeff() > 1e-8) {
    throw ParameterError("bayes_matrix_flip: marginals are inconsistent with the conditional");
  }
  // diag(marg_b) cond^T diag(marg_a)^-1
  return marg_b.asDiagonal() * cond.transpose() * marg_a.cwiseInverse().asDiagonal();
}

inline Matrix matrix_inner_power(const Matrix& base, const Matrix& exponent) {
  if (base.cols() != exponent.rows()) throw ParameterError("matrix_inner_power: dimension mismatch");
  if ((base.array() <= 0.0).any()) {
    throw ParameterError("matrix_inner_power: base entries must be positive");
  }
  return (base.array().log().matrix() * exponent).array().exp().matrix();
}

}  // namespace ldta

#pragma once

// Held-out perplexity, top-word diversity and UMass coherence.

#include "common.hpp"
#include "dtree.hpp"
#include "mfvi.hpp"
#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace ldta {

/// exp(-sum n log sum_k phi_vk E_q[theta_k] / sum n) with q the per-document
/// posterior.
inline double perplexity(const Matrix& word_topic, const std::vector<DirichletTree>& posteriors,
                         const Corpus& corpus) {
  if (posteriors.size() != corpus.size()) {
    throw ParameterError("perplexity: one posterior per document required");
  }
  double log_lik = 0.0;
  double tokens = 0.0;
  for (std::size_t m = 0; m < corpus.size(); ++m) {
    const Document& doc = corpus.docs[m];
    const Vector mean = posteriors[m].expected_theta();
    for (std::size_t j = 0; j < doc.size(); ++j) {
      const double p = word_topic.row(ix(doc.words[j])).dot(mean);
      if (!(p > 0.0)) {
        throw NumericalError("perplexity: zero predictive probability for word " +
                             std::to_string(doc.words[j]) + " in document " + std::to_string(m));
      }
      log_lik += doc.counts(ix(j)) * std::log(p);
      tokens += doc.counts(ix(j));
    }
  }
  if (tokens == 0.0) throw ParameterError("perplexity: no tokens");
  return std::exp(-log_lik / tokens);
}

/// Indices of the n largest entries of a column, ties to the lower index.
inline std::vector<std::size_t> top_words(const Matrix& word_topic, std::size_t k, std::size_t n) {
  const std::size_t V = sz(word_topic.rows());
  if (n > V) throw ParameterError("top_words: n exceeds the vocabulary size");
  std::vector<std::size_t> order(V);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return word_topic(ix(a), ix(k)) > word_topic(ix(b), ix(k));
  });
  order.resize(n);
  return order;
}

/// Unique top-n words over all topics divided by K n.
inline double diversity(const Matrix& word_topic, std::size_t n_top = 10) {
  if (n_top == 0) throw ParameterError("diversity: n_top must be positive");
  std::set<std::size_t> unique;
  for (Eigen::Index k = 0; k < word_topic.cols(); ++k) {
    for (std::size_t w : top_words(word_topic, sz(k), n_top)) unique.insert(w);
  }
  return double(unique.size()) / double(word_topic.cols() * ix(n_top));
}

struct Coherence {
  double mean = 0.0;
  std::vector<double> per_topic;
  std::size_t skipped_pairs = 0;
};

/// UMass coherence: per topic, the mean over top-word pairs (w_i, w_j), j < i
/// in rank order, of log((D(w_i, w_j) + 1) / D(w_j)), where D counts
/// documents. Pairs with D(w_j) = 0 are skipped.
inline Coherence coherence_umass(const Matrix& word_topic, const Corpus& corpus,
                                 std::size_t n_top = 10) {
  const std::size_t K = sz(word_topic.cols());
  std::vector<std::vector<std::size_t>> tops(K);
  std::vector<std::size_t> vocab_index(corpus.V, TreeTopology::npos);
  std::vector<std::size_t> wanted;
  for (std::size_t k = 0; k < K; ++k) {
    tops[k] = top_words(word_topic, k, n_top);
    for (std::size_t w : tops[k]) {
      if (vocab_index[w] == TreeTopology::npos) {
        vocab_index[w] = wanted.size();
        wanted.push_back(w);
      }
    }
  }
  const std::size_t W = wanted.size();
  Eigen::MatrixXd co = Eigen::MatrixXd::Zero(ix(W), ix(W));
  std::vector<std::size_t> present;
  for (const Document& doc : corpus.docs) {
    present.clear();
    for (std::size_t w : doc.words) {
      if (w < corpus.V && vocab_index[w] != TreeTopology::npos) present.push_back(vocab_index[w]);
    }
    for (std::size_t a : present) {
      for (std::size_t b : present) co(ix(a), ix(b)) += 1.0;
    }
  }
  Coherence out;
  out.per_topic.resize(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 1; i < tops[k].size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        const auto wi = ix(vocab_index[tops[k][i]]);
        const auto wj = ix(vocab_index[tops[k][j]]);
        const double dj = co(wj, wj);
        if (dj == 0.0) {
          ++out.skipped_pairs;
          continue;
        }
        sum += std::log((co(wi, wj) + 1.0) / dj);
        ++pairs;
      }
    }
    out.per_topic[k] = pairs ? sum / double(pairs) : 0.0;
  }
  out.mean = K ? std::accumulate(out.per_topic.begin(), out.per_topic.end(), 0.0) / double(K) : 0.0;
  return out;
}

}  // namespace ldta

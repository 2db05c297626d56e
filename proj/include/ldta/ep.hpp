#pragma once

// Expectation propagation for LDTA. Each word's mixture likelihood
// sum_k phi_vk theta_k is approximated by a Dirichlet-Tree term carried as a
// column of fractional topic counts (the transition matrix).

#include "common.hpp"
#include "dtree.hpp"
#include "estimate.hpp"
#include "mfvi.hpp"
#include "model.hpp"
#include "moment_match.hpp"
#include "parallel.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace ldta {

struct EPEssential {
  DirichletTree zeta;
  std::vector<std::optional<DirichletTree>> cavities;  // empty when invalid
  Vector z;     // phi_v . E_cavity[theta]
  Vector sync;  // s_v
  Matrix resp;  // K x nnz topic posteriors of each word under its tilted distribution
  double log_evidence = kNegInf;
  bool all_valid = true;
};

struct EPDocState {
  Matrix trans;  // K x nnz
  DirichletTree zeta;
  Vector z;
  Vector sync;
  Matrix resp;
  double log_evidence = kNegInf;
  bool converged = false;
  int sweeps = 0;
  int skipped_updates = 0;  // invalid cavities or rejected moment matches
  Vector raw_sums;          // pre-normalisation column sums of the last sweep
  Vector discrepancy;       // internal-branch mismatch of the last sweep
};

struct EPOptions {
  double tolerance = 1e-4;  // max-abs change of trans across a sweep
  int max_sweeps = 100;
  double damping = 1.0;
  // Rescale every new column to sum 1. Off by default: the rescaled update is
  // no longer a moment-matching fixed point and the evidence estimate degrades.
  bool normalize_columns = false;
};

/// zeta = xi + D trans n, one cavity per word, and the evidence estimate
/// sum_v n_v log s_v + log g(zeta) - log g(xi).
inline EPEssential ep_essential(const ModelParams& params, const Document& doc,
                                const Matrix& trans) {
  const std::size_t nnz = doc.size();
  EPEssential out{params.prior.bayesian_add(trans * doc.counts), {}, {}, {}, {}};
  out.cavities.resize(nnz);
  out.z = Vector::Constant(ix(nnz), std::nan(""));
  out.sync = Vector::Constant(ix(nnz), std::nan(""));
  out.resp = Matrix::Constant(ix(params.K()), ix(nnz), std::nan(""));
  const double log_g_zeta = out.zeta.log_normalizer();
  double log_ev = log_g_zeta - params.prior.log_normalizer();
  for (std::size_t j = 0; j < nnz; ++j) {
    const Vector minus = -trans.col(ix(j));
    if (!out.zeta.can_add(minus)) {
      out.all_valid = false;
      // No cavity; fall back to the full approximation for the topic weights.
      const Vector w = params.word_topic.row(ix(doc.words[j])).transpose().cwiseProduct(
          out.zeta.expected_theta());
      out.resp.col(ix(j)) = w / w.sum();
      continue;
    }
    out.cavities[j] = out.zeta.bayesian_add(minus);
    const DirichletTree& cav = *out.cavities[j];
    const Vector w = params.word_topic.row(ix(doc.words[j])).transpose().cwiseProduct(cav.expected_theta());
    const double z = w.sum();
    out.z(ix(j)) = z;
    out.resp.col(ix(j)) = w / z;
    const double log_s = std::log(z) + cav.log_normalizer() - log_g_zeta;
    out.sync(ix(j)) = std::exp(log_s);
    log_ev += doc.counts(ix(j)) * log_s;
  }
  out.log_evidence = out.all_valid ? log_ev : std::nan("");
  return out;
}

/// Expected branch statistics under the tilted distribution
/// (sum_k phi_vk theta_k) q_cavity(theta), as a mixture of base posteriors.
inline Vector tilted_expected_stats(const ModelParams& params, const DirichletTree& cavity,
                                    std::size_t word) {
  const Vector w = params.word_topic.row(ix(word)).transpose().cwiseProduct(cavity.expected_theta());
  const double total = w.sum();
  if (!(total > 0.0)) {
    throw NumericalError("tilted_expected_stats: word " + std::to_string(word) +
                         " has zero probability under the cavity");
  }
  return cavity.base_posterior_stats() * (w / total);
}

struct WordUpdate {
  Vector column;
  double raw_sum = 0.0;
  double discrepancy = 0.0;
  bool ok = false;
};

/// Moment-matches cavity x tilted term, reads the new term off the leaf
/// branches and damps it against the old column, optionally normalising.
inline WordUpdate ep_update_word(const ModelParams& params, const DirichletTree& cavity,
                                 std::size_t word, const Vector& old_column, double damping = 1.0,
                                 bool normalize = false) {
  WordUpdate out;
  out.column = old_column;
  const TreeTopology& topo = cavity.topology();
  const Vector target = tilted_expected_stats(params, cavity, word);
  Vector warm = cavity.xi();
  if (cavity.can_add(old_column)) warm = cavity.bayesian_add(old_column).xi();
  Vector sep;
  try {
    sep = match_tree(cavity.topology_ptr(), target, warm).params.xi();
  } catch (const std::exception&) {
    return out;
  }
  const Vector diff = sep - cavity.xi();
  Vector raw(ix(topo.leaf_count()));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) raw(ix(k)) = diff(ix(topo.leaf_branch(k)));
  // Internal branches of a DT term are determined by its leaves; measure how
  // far the matched difference is from that.
  const Vector implied = selection_apply(topo, raw);
  double sq = 0.0;
  for (std::size_t d = 0; d < topo.branch_count(); ++d) {
    if (!topo.branch_is_leaf(d)) sq += std::pow(diff(ix(d)) - implied(ix(d)), 2);
  }
  out.discrepancy = std::sqrt(sq);
  out.raw_sum = raw.sum();
  const Vector blended = damping * raw + (1.0 - damping) * old_column;
  if (!blended.allFinite()) return out;
  if (!normalize) {
    out.column = blended;
    out.ok = true;
    return out;
  }
  const double total = blended.sum();
  if (!(total > 1e-12)) return out;
  out.column = blended / total;
  out.ok = true;
  return out;
}

namespace detail {

inline bool trans_is_valid(const DirichletTree& prior, const Document& doc, const Matrix& trans) {
  const Vector pseudo = trans * doc.counts;
  if (!prior.can_add(pseudo)) return false;
  const DirichletTree zeta = prior.bayesian_add(pseudo);
  for (Eigen::Index j = 0; j < trans.cols(); ++j) {
    if (!zeta.can_add(-trans.col(j))) return false;
  }
  return true;
}

}  // namespace detail

/// Parallel EP for one document: every word is updated against the same
/// cavity set, then the essential quantities are refreshed.
inline EPDocState ep_infer_document(const ModelParams& params, const Document& doc,
                                    const EPOptions& opt = {}) {
  if (doc.size() == 0) throw ParameterError("ep: empty document");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw ParameterError("ep: damping must be in (0, 1]");
  const std::size_t K = params.K();
  const std::size_t nnz = doc.size();
  for (std::size_t v : doc.words) {
    if (v >= params.V()) throw ParameterError("ep: word id out of range for the model");
  }
  Matrix trans = Matrix::Constant(ix(K), ix(nnz), 1.0 / double(K));
  Vector raw_sums = Vector::Zero(ix(nnz));
  Vector discrepancy = Vector::Zero(ix(nnz));
  int skipped = 0;
  int sweeps = 0;
  bool converged = false;
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    const EPEssential ess = ep_essential(params, doc, trans);
    Matrix next = trans;
    for (std::size_t j = 0; j < nnz; ++j) {
      if (!ess.cavities[j]) {
        ++skipped;
        continue;
      }
      const WordUpdate up =
          ep_update_word(params, *ess.cavities[j], doc.words[j], trans.col(ix(j)), opt.damping,
                         opt.normalize_columns);
      if (!up.ok) ++skipped;
      next.col(ix(j)) = up.column;
      raw_sums(ix(j)) = up.raw_sum;
      discrepancy(ix(j)) = up.discrepancy;
    }
    // Shrink the sweep toward the previous transition matrix until every
    // cavity stays a proper distribution.
    double scale = 1.0;
    Matrix candidate = next;
    int halvings = 0;
    while (!detail::trans_is_valid(params.prior, doc, candidate) && halvings < 40) {
      scale *= 0.5;
      candidate = trans + scale * (next - trans);
      ++halvings;
    }
    if (halvings == 40) candidate = trans;
    const double change = (candidate - trans).cwiseAbs().maxCoeff();
    trans = std::move(candidate);
    sweeps = sweep;
    if (change < opt.tolerance) {
      converged = true;
      break;
    }
  }
  EPEssential fin = ep_essential(params, doc, trans);
  return EPDocState{std::move(trans),  std::move(fin.zeta), std::move(fin.z),
                    std::move(fin.sync), std::move(fin.resp), fin.log_evidence,
                    converged,           sweeps,              skipped,
                    std::move(raw_sums), std::move(discrepancy)};
}

struct EPFit {
  ModelParams params;
  std::vector<EPDocState> states;
  FitReport report;
};

struct EPConfig {
  int max_iters = 100;
  double tolerance = 1e-4;  // relative change of the summed log evidence
  EPOptions doc;
  bool fit_prior = true;
  bool fit_word_topic = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double init_concentration = 1.0;
  std::optional<Matrix> init_word_topic;
};

/// EP over a corpus with frozen parameters.
inline std::vector<EPDocState> infer_ep(const ModelParams& params, const Corpus& corpus,
                                        const EPOptions& opt = {}, std::size_t threads = 1) {
  std::vector<std::optional<EPDocState>> slots(corpus.size());
  parallel_for(corpus.size(), threads,
               [&](std::size_t m) { slots[m] = ep_infer_document(params, corpus.docs[m], opt); });
  std::vector<EPDocState> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline double corpus_log_evidence(const std::vector<EPDocState>& states) {
  double total = 0.0;
  for (const auto& s : states) total += s.log_evidence;
  return total;
}

/// xi by moment matching the averaged posterior statistics; phi from the
/// tilted topic posteriors used as responsibilities.
inline ModelParams ep_m_step(const Corpus& corpus, const std::vector<EPDocState>& states,
                             const ModelParams& current, bool fit_prior = true,
                             bool fit_word_topic = true, std::vector<std::string>* warnings = nullptr) {
  ModelParams out = current;
  if (fit_word_topic) {
    std::vector<std::size_t> empty;
    out.word_topic = m_step_word_topic(
        corpus, current.K(), [&](std::size_t m) -> const Matrix& { return states[m].resp; }, &empty);
    if (warnings) {
      for (std::size_t k : empty) {
        warnings->push_back("topic " + std::to_string(k) + " has no mass; reset to uniform");
      }
    }
  }
  if (fit_prior) {
    PriorUpdate up = m_step_prior(current.prior, states.size(),
                                  [&](std::size_t m) -> const DirichletTree& { return states[m].zeta; });
    if (!up.ok && warnings) warnings->push_back("prior update kept previous value: " + up.message);
    out.prior = std::move(up.prior);
  }
  return out;
}

/// EP-embedded EM. Every E-step restarts the transition matrices at 1/K.
inline EPFit fit_ep(const Corpus& corpus, const DirichletTree& initial_prior,
                    const EPConfig& cfg = {}) {
  corpus.validate();
  if (corpus.size() == 0) throw ParameterError("fit_ep: empty corpus");
  if (!(cfg.tolerance > 0.0)) throw ParameterError("fit_ep: tolerance must be positive");
  const std::size_t K = initial_prior.leaf_count();
  Stopwatch clock;
  Rng rng(cfg.seed);
  Matrix phi = cfg.init_word_topic ? *cfg.init_word_topic
                                   : random_word_topic(corpus.V, K, cfg.init_concentration, rng);
  EPFit fit{ModelParams{initial_prior, std::move(phi)}, {}, {}};
  fit.params.validate();
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    fit.states = infer_ep(fit.params, corpus, cfg.doc, cfg.threads);
    const double objective = corpus_log_evidence(fit.states);
    fit.report.trace.push_back(objective);
    fit.report.seconds.push_back(clock.seconds());
    fit.report.iterations = iter;
    if (!std::isfinite(objective)) throw NumericalError("fit_ep: summed log evidence is not finite");
    if (iter > 1 && relative_change(fit.report.trace[sz(iter) - 2], objective) < cfg.tolerance) {
      fit.report.converged = true;
      break;
    }
    if (iter == cfg.max_iters) break;
    fit.params = ep_m_step(corpus, fit.states, fit.params, cfg.fit_prior, cfg.fit_word_topic,
                           &fit.report.warnings);
  }
  fit.report.wall_seconds = clock.seconds();
  return fit;
}

}  // namespace ldta

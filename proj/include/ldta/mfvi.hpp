#pragma once

// Mean-field variational inference: q(theta | zeta) prod_n q(z_n | resp).

#include "common.hpp"
#include "dtree.hpp"
#include "estimate.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "random.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldta {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Floor applied to word-topic probabilities before taking logs.
inline constexpr double kPhiFloor = 1e-12;

struct VIDocState {
  DirichletTree zeta;
  Matrix resp;  // K x nnz, one column per word present in the document
  bool converged = false;
  int iterations = 0;
  double elbo = kNegInf;
};

struct EStepOptions {
  double tolerance = 1e-6;  // relative change of the document ELBO
  int max_iters = 200;
};

/// log phi_vk for the words of one document, K x nnz. Structural zeros map
/// to -inf, other entries are floored at kPhiFloor.
inline Matrix document_log_phi(const ModelParams& params, const Document& doc) {
  Matrix out(ix(params.K()), ix(doc.size()));
  for (std::size_t j = 0; j < doc.size(); ++j) {
    const std::size_t v = doc.words[j];
    if (v >= params.V()) throw ParameterError("word id out of range for the model");
    bool any = false;
    for (std::size_t k = 0; k < params.K(); ++k) {
      const double phi = params.word_topic(ix(v), ix(k));
      out(ix(k), ix(j)) = phi == 0.0 ? kNegInf : std::log(std::max(phi, kPhiFloor));
      any = any || phi > 0.0;
    }
    if (!any) {
      throw NumericalError("word " + std::to_string(v) + " has zero probability under every topic");
    }
  }
  return out;
}

/// Topic pseudo-counts sum_j resp_kj n_j.
inline Vector topic_pseudo_counts(const Matrix& resp, const Document& doc) {
  return resp * doc.counts;
}

namespace detail {

inline double elbo_with_log_phi(const ModelParams& params, const Document& doc,
                                const DirichletTree& zeta, const Matrix& resp,
                                const Matrix& log_phi) {
  const DirichletTree& xi = params.prior;
  const Vector eu = zeta.expected_sufficient_stats();
  const Vector pseudo = selection_apply(xi.topology(), topic_pseudo_counts(resp, doc));
  double out = (xi.xi() - zeta.xi() + pseudo).dot(eu);
  out += zeta.log_normalizer() - xi.log_normalizer();
  for (std::size_t j = 0; j < doc.size(); ++j) {
    const double n = doc.counts(ix(j));
    for (Eigen::Index k = 0; k < resp.rows(); ++k) {
      const double r = resp(k, ix(j));
      if (r == 0.0) continue;
      if (log_phi(k, ix(j)) == kNegInf) {
        throw NumericalError("ELBO: positive responsibility on a zero word-topic probability");
      }
      out += n * r * (log_phi(k, ix(j)) - std::log(r));
    }
  }
  return out;
}

/// resp_kj proportional to exp(log phi_kj + E[log theta_k]).
inline void update_resp(const Matrix& log_phi, const Vector& elog_theta, Matrix& resp) {
  for (Eigen::Index j = 0; j < log_phi.cols(); ++j) {
    Vector l = log_phi.col(j) + elog_theta;
    const double norm = log_sum_exp(l);
    for (Eigen::Index k = 0; k < l.size(); ++k) {
      resp(k, j) = l(k) == kNegInf ? 0.0 : std::exp(l(k) - norm);
    }
  }
}

}  // namespace detail

/// Evidence lower bound of one document.
inline double elbo_document(const ModelParams& params, const Document& doc,
                            const VIDocState& state) {
  return detail::elbo_with_log_phi(params, doc, state.zeta, state.resp,
                                   document_log_phi(params, doc));
}

/// Alternates responsibility and zeta updates until the document ELBO
/// settles. Starts from uniform responsibilities, or from init_resp when given
/// (a warm start from a previous outer iteration).
inline VIDocState e_step_document(const ModelParams& params, const Document& doc,
                                  const EStepOptions& opt = {},
                                  const Matrix* init_resp = nullptr) {
  if (doc.size() == 0) throw ParameterError("e_step: empty document");
  const Matrix log_phi = document_log_phi(params, doc);
  const std::size_t K = params.K();
  Matrix resp = init_resp ? *init_resp
                          : Matrix::Constant(ix(K), ix(doc.size()), 1.0 / double(K));
  if (resp.rows() != ix(K) || resp.cols() != ix(doc.size())) {
    throw ParameterError("e_step: initial responsibilities have the wrong shape");
  }
  VIDocState state{params.prior.bayesian_add(topic_pseudo_counts(resp, doc)), resp};
  double previous = kNegInf;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    detail::update_resp(log_phi, state.zeta.expected_log_theta(), state.resp);
    state.zeta = params.prior.bayesian_add(topic_pseudo_counts(state.resp, doc));
    state.elbo = detail::elbo_with_log_phi(params, doc, state.zeta, state.resp, log_phi);
    state.iterations = iter;
    if (previous != kNegInf && relative_change(previous, state.elbo) < opt.tolerance) {
      state.converged = true;
      break;
    }
    previous = state.elbo;
  }
  return state;
}

struct VIConfig {
  int max_iters = 100;
  double tolerance = 1e-4;  // relative change of the corpus ELBO
  EStepOptions estep;
  bool fit_prior = true;
  bool fit_word_topic = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double init_concentration = 1.0;
  std::optional<Matrix> init_word_topic;
};

struct VIFit {
  ModelParams params;
  std::vector<VIDocState> states;
  FitReport report;
};

/// E-step over a corpus with frozen parameters.
inline std::vector<VIDocState> infer_vi(const ModelParams& params, const Corpus& corpus,
                                        const EStepOptions& opt = {}, std::size_t threads = 1,
                                        const std::vector<VIDocState>* warm = nullptr) {
  std::vector<std::optional<VIDocState>> slots(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t m) {
    const Matrix* init = warm ? &(*warm)[m].resp : nullptr;
    slots[m] = e_step_document(params, corpus.docs[m], opt, init);
  });
  std::vector<VIDocState> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline double corpus_elbo(const std::vector<VIDocState>& states) {
  double total = 0.0;
  for (const auto& s : states) total += s.elbo;
  return total;
}

inline Matrix m_step_word_topic(const Corpus& corpus, const std::vector<VIDocState>& states,
                                std::size_t K, std::vector<std::size_t>* empty_columns = nullptr) {
  return m_step_word_topic(
      corpus, K, [&](std::size_t m) -> const Matrix& { return states[m].resp; }, empty_columns);
}

inline PriorUpdate m_step_prior(const std::vector<VIDocState>& states, const DirichletTree& current) {
  return m_step_prior(current, states.size(),
                      [&](std::size_t m) -> const DirichletTree& { return states[m].zeta; });
}

/// Variational EM. Later E-steps start from the previous responsibilities,
/// which keeps the corpus ELBO trace non-decreasing.
inline VIFit fit_vi(const Corpus& corpus, const DirichletTree& initial_prior,
                    const VIConfig& cfg = {}) {
  corpus.validate();
  if (corpus.size() == 0) throw ParameterError("fit_vi: empty corpus");
  if (!(cfg.tolerance > 0.0)) throw ParameterError("fit_vi: tolerance must be positive");
  const std::size_t K = initial_prior.leaf_count();
  Stopwatch clock;
  Rng rng(cfg.seed);
  Matrix phi = cfg.init_word_topic ? *cfg.init_word_topic
                                   : random_word_topic(corpus.V, K, cfg.init_concentration, rng);
  VIFit fit{ModelParams{initial_prior, std::move(phi)}, {}, {}};
  fit.params.validate();
  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    fit.states = infer_vi(fit.params, corpus, cfg.estep, cfg.threads,
                          fit.states.empty() ? nullptr : &fit.states);
    const double elbo = corpus_elbo(fit.states);
    fit.report.trace.push_back(elbo);
    fit.report.seconds.push_back(clock.seconds());
    fit.report.iterations = iter;
    if (!std::isfinite(elbo)) throw NumericalError("fit_vi: corpus ELBO is not finite");
    if (iter > 1 && relative_change(fit.report.trace[sz(iter) - 2], elbo) < cfg.tolerance) {
      fit.report.converged = true;
      break;
    }
    if (iter == cfg.max_iters) break;
    if (cfg.fit_word_topic) {
      std::vector<std::size_t> empty;
      fit.params.word_topic = m_step_word_topic(corpus, fit.states, K, &empty);
      for (std::size_t k : empty) {
        fit.report.warnings.push_back("iteration " + std::to_string(iter) + ": topic " +
                                      std::to_string(k) + " has no mass; reset to uniform");
      }
    }
    if (cfg.fit_prior) {
      PriorUpdate up = m_step_prior(fit.states, fit.params.prior);
      if (!up.ok) fit.report.warnings.push_back("prior update kept previous value: " + up.message);
      fit.params.prior = std::move(up.prior);
    }
  }
  fit.report.wall_seconds = clock.seconds();
  return fit;
}

}  // namespace ldta

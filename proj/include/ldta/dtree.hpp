#pragma once

// The Dirichlet-Tree distribution over the K-simplex: a product of independent
// Dirichlets, one per internal node, composed along root-to-leaf paths.
//
// Parameters xi live on branches (see tree.hpp for indexing). Everything is
// evaluated in log space through log-gamma; raw gamma values never appear.

#include "common.hpp"
#include "random.hpp"
#include "special.hpp"
#include "tree.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldta {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DensityForm { node, general, exponential };

/// Natural parameters eta_d = xi_d - l(child(d)) and the log-normalizer
/// log prod_s B(xi_s).
struct NaturalForm {
  Vector eta;
  double log_g = 0.0;
};

// Smallest node mass used before taking logs.
inline constexpr double kMassFloor = 1e-300;

class DirichletTree {
 public:
  DirichletTree(std::shared_ptr<const TreeTopology> topo, Vector xi);

  const TreeTopology& topology() const { return *topo_; }
  const std::shared_ptr<const TreeTopology>& topology_ptr() const { return topo_; }
  const Vector& xi() const { return xi_; }
  std::size_t branch_count() const { return topo_->branch_count(); }
  std::size_t leaf_count() const { return topo_->leaf_count(); }

  /// xi_{*|s} for the parent s of every branch, indexed by branch.
  Vector parent_sums() const;

  /// log g = sum_s [ sum_{t|s} lgamma(xi_{t|s}) - lgamma(xi_{*|s}) ].
  double log_normalizer() const;
  NaturalForm natural_form() const;

  /// E[log(Theta_t / Theta_s)] = psi(xi_{t|s}) - psi(xi_{*|s}) per branch.
  Vector expected_sufficient_stats() const;
  /// E[log theta_k]: path sums of the branch statistics.
  Vector expected_log_theta() const;
  /// E[theta_k]: product of branch proportions along the path of k.
  Vector expected_theta() const;

  /// Conjugate update xi + D n. Counts may be any reals as long as every
  /// updated branch stays positive.
  DirichletTree bayesian_add(const Vector& leaf_counts) const;
  /// Whether bayesian_add(leaf_counts) would be a valid distribution.
  bool can_add(const Vector& leaf_counts) const;

  /// log E[prod_k theta_k^{n_k}] = log g(xi + D n) - log g(xi).
  double log_expected_monomial(const Vector& leaf_counts) const;
  double expected_monomial(const Vector& leaf_counts) const {
    return std::exp(log_expected_monomial(leaf_counts));
  }

  /// The K posteriors bayesian_add(e_k).
  std::vector<DirichletTree> base_posteriors() const;
  /// D x K matrix whose column k is expected_sufficient_stats() of the k-th
  /// base posterior. Only branches below ancestors of leaf k differ from the
  /// prior's statistics, so this avoids building the K posteriors.
  Matrix base_posterior_stats() const;

  /// D x K matrix; row d is E[theta] under the derived density
  /// u_d(theta) p(theta) / E[u_d].
  Matrix derived_expectation_matrix() const;

  double log_density(const Vector& theta, DensityForm form = DensityForm::exponential) const;

  Vector sample(Rng& rng) const;

  bool operator==(const DirichletTree& other) const {
    return *topo_ == *other.topo_ && xi_ == other.xi_;
  }

 private:
  std::shared_ptr<const TreeTopology> topo_;
  Vector xi_;
};

/// theta_k = prod over the path of k of rho_{t|s}. rho is indexed by branch
/// and must be a simplex within every internal node.
Vector theta_from_branch_probs(const TreeTopology& topo, const Vector& rho);
/// rho_{t|s} = Theta_t / Theta_s.
Vector branch_probs_from_theta(const TreeTopology& topo, const Vector& theta);
/// Theta_s for every node (root = sum of theta).
Vector node_masses(const TreeTopology& topo, const Vector& theta);

// Named prior families.
std::shared_ptr<const TreeTopology> flat_topology(std::size_t K);
std::shared_ptr<const TreeTopology> beta_liouville_topology(std::size_t K);
std::shared_ptr<const TreeTopology> generalized_dirichlet_topology(std::size_t K);

DirichletTree make_dirichlet_prior(const Vector& alpha);
/// Root Beta(alpha, beta) between an inner Dirichlet(alphas) over topics
/// 1..K-1 and topic K. Requires K >= 3.
DirichletTree make_beta_liouville_prior(double alpha, double beta, const Vector& alphas);
/// Right cascade of Betas (alpha_k, kappa_k); level k splits off topic k.
DirichletTree make_generalized_dirichlet_prior(const Vector& alphas, const Vector& kappas);

// ---------------------------------------------------------------------------

inline DirichletTree::DirichletTree(std::shared_ptr<const TreeTopology> topo, Vector xi)
    : topo_(std::move(topo)), xi_(std::move(xi)) {
  if (!topo_) throw ParameterError("DirichletTree: null topology");
  if (sz(xi_.size()) != topo_->branch_count()) {
    throw ParameterError("DirichletTree: expected " + std::to_string(topo_->branch_count()) +
                         " branch parameters, got " + std::to_string(xi_.size()));
  }
  for (Eigen::Index d = 0; d < xi_.size(); ++d) {
    if (!(xi_(d) > 0.0) || !std::isfinite(xi_(d))) {
      throw ParameterError("DirichletTree: branch '" + topo_->label(sz(d) + 1) +
                           "' has non-positive parameter " + std::to_string(xi_(d)));
    }
  }
}

inline Vector DirichletTree::parent_sums() const {
  Vector node_sum = Vector::Zero(ix(topo_->node_count()));
  for (std::size_t d = 0; d < branch_count(); ++d) {
    node_sum(ix(topo_->branch_parent(d))) += xi_(ix(d));
  }
  Vector out(ix(branch_count()));
  for (std::size_t d = 0; d < branch_count(); ++d) {
    out(ix(d)) = node_sum(ix(topo_->branch_parent(d)));
  }
  return out;
}

inline double DirichletTree::log_normalizer() const {
  double total = 0.0;
  for (std::size_t s : topo_->internal_nodes()) {
    double sum = 0.0;
    for (std::size_t c : topo_->children(s)) {
      const double x = xi_(ix(c - 1));
      total += log_gamma(x);
      sum += x;
    }
    total -= log_gamma(sum);
  }
  return total;
}

inline NaturalForm DirichletTree::natural_form() const {
  NaturalForm f;
  f.eta.resize(xi_.size());
  for (std::size_t d = 0; d < branch_count(); ++d) {
    f.eta(ix(d)) = xi_(ix(d)) - static_cast<double>(topo_->leaves_under(d + 1));
  }
  f.log_g = log_normalizer();
  return f;
}

inline Vector DirichletTree::expected_sufficient_stats() const {
  const Vector sums = parent_sums();
  Vector out(xi_.size());
  for (Eigen::Index d = 0; d < xi_.size(); ++d) out(d) = digamma(xi_(d)) - digamma(sums(d));
  return out;
}

inline Vector DirichletTree::expected_log_theta() const {
  return selection_apply_transpose(*topo_, expected_sufficient_stats());
}

inline Vector DirichletTree::expected_theta() const {
  const Vector sums = parent_sums();
  Vector proportion = (xi_.array() / sums.array()).log();
  Vector out = selection_apply_transpose(*topo_, proportion).array().exp();
  return out;
}

inline bool DirichletTree::can_add(const Vector& leaf_counts) const {
  const Vector updated = xi_ + selection_apply(*topo_, leaf_counts);
  return (updated.array() > 0.0).all() && updated.allFinite();
}

inline DirichletTree DirichletTree::bayesian_add(const Vector& leaf_counts) const {
  Vector updated = xi_ + selection_apply(*topo_, leaf_counts);
  for (Eigen::Index d = 0; d < updated.size(); ++d) {
    if (!(updated(d) > 0.0) || !std::isfinite(updated(d))) {
      throw ParameterError("bayesian_add: branch '" + topo_->label(sz(d) + 1) +
                           "' would become non-positive (" + std::to_string(updated(d)) + ")");
    }
  }
  return DirichletTree(topo_, std::move(updated));
}

inline double DirichletTree::log_expected_monomial(const Vector& leaf_counts) const {
  return bayesian_add(leaf_counts).log_normalizer() - log_normalizer();
}

inline std::vector<DirichletTree> DirichletTree::base_posteriors() const {
  std::vector<DirichletTree> out;
  out.reserve(leaf_count());
  for (std::size_t k = 0; k < leaf_count(); ++k) {
    out.push_back(bayesian_add(Vector::Unit(ix(leaf_count()), ix(k))));
  }
  return out;
}

inline Matrix DirichletTree::base_posterior_stats() const {
  const std::size_t D = branch_count();
  const std::size_t K = leaf_count();
  const Vector sums = parent_sums();
  Vector psi_xi(ix(D)), psi_xi1(ix(D)), psi_sum(ix(D)), psi_sum1(ix(D));
  for (std::size_t d = 0; d < D; ++d) {
    psi_xi(ix(d)) = digamma(xi_(ix(d)));
    psi_xi1(ix(d)) = psi_xi(ix(d)) + 1.0 / xi_(ix(d));
    psi_sum(ix(d)) = digamma(sums(ix(d)));
    psi_sum1(ix(d)) = psi_sum(ix(d)) + 1.0 / sums(ix(d));
  }
  Matrix out(ix(D), ix(K));
  const Vector base = psi_xi - psi_sum;
  for (std::size_t k = 0; k < K; ++k) {
    out.col(ix(k)) = base;
    // Every internal node on the path of k gains one count in its total; the
    // path branch below it gains one count itself.
    for (std::size_t on_path : topo_->leaf_path(k)) {
      const std::size_t s = topo_->branch_parent(on_path);
      for (std::size_t c : topo_->children(s)) {
        const std::size_t d = c - 1;
        const double top = (d == on_path) ? psi_xi1(ix(d)) : psi_xi(ix(d));
        out(ix(d), ix(k)) = top - psi_sum1(ix(d));
      }
    }
  }
  return out;
}

inline Matrix DirichletTree::derived_expectation_matrix() const {
  const Vector mean = expected_theta();
  const Vector stats = expected_sufficient_stats();
  const Matrix base = base_posterior_stats();
  Matrix out(base.rows(), base.cols());
  for (Eigen::Index d = 0; d < base.rows(); ++d) {
    for (Eigen::Index k = 0; k < base.cols(); ++k) {
      out(d, k) = mean(k) * base(d, k) / stats(d);
    }
  }
  return out;
}

namespace detail {

inline void check_simplex(const Vector& theta, std::size_t K, const char* where) {
  if (sz(theta.size()) != K) {
    throw ParameterError(std::string(where) + ": expected " + std::to_string(K) + " components");
  }
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (!(theta(k) >= 0.0) || !std::isfinite(theta(k))) {
      throw ParameterError(std::string(where) + ": negative or non-finite component");
    }
  }
  if (std::abs(theta.sum() - 1.0) > 1e-10) {
    throw ParameterError(std::string(where) + ": components do not sum to one");
  }
}

}  // namespace detail

inline Vector node_masses(const TreeTopology& topo, const Vector& theta) {
  if (sz(theta.size()) != topo.leaf_count()) {
    throw ParameterError("node_masses: dimension mismatch");
  }
  Vector mass = Vector::Zero(ix(topo.node_count()));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) mass(ix(topo.leaves()[k])) = theta(ix(k));
  for (std::size_t id = topo.node_count(); id-- > 1;) mass(ix(topo.parent(id))) += mass(ix(id));
  return mass;
}

inline double DirichletTree::log_density(const Vector& theta, DensityForm form) const {
  detail::check_simplex(theta, leaf_count(), "log_density");
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    if (!(theta(k) > 0.0)) throw ParameterError("log_density: theta must be strictly positive");
  }
  const TreeTopology& topo = *topo_;
  const Vector mass = node_masses(topo, theta);
  Vector log_mass(mass.size());
  for (Eigen::Index i = 0; i < mass.size(); ++i) log_mass(i) = std::log(std::max(mass(i), kMassFloor));
  // The root mass is exactly one on the simplex.
  log_mass(0) = 0.0;

  auto log_beta = [&](std::size_t s) {
    double sum = 0.0;
    double acc = 0.0;
    for (std::size_t c : topo.children(s)) {
      acc += log_gamma(xi_(ix(c - 1)));
      sum += xi_(ix(c - 1));
    }
    return acc - log_gamma(sum);
  };

  double out = 0.0;
  switch (form) {
    case DensityForm::node: {
      for (std::size_t s : topo.internal_nodes()) {
        const double cs = static_cast<double>(topo.children(s).size());
        out += -log_beta(s) - (cs - 1.0) * log_mass(ix(s));
        for (std::size_t t : topo.children(s)) {
          out += (xi_(ix(t - 1)) - 1.0) * (log_mass(ix(t)) - log_mass(ix(s)));
        }
      }
      break;
    }
    case DensityForm::general: {
      const Vector sums = parent_sums();
      for (std::size_t s : topo.internal_nodes()) {
        out -= log_beta(s);
        if (s == 0) continue;
        // xi_{s|*} - xi_{*|s}
        double below = 0.0;
        for (std::size_t c : topo.children(s)) below += xi_(ix(c - 1));
        out += (xi_(ix(s - 1)) - below) * log_mass(ix(s));
      }
      for (std::size_t k = 0; k < leaf_count(); ++k) {
        const std::size_t leaf = topo.leaves()[k];
        out += (xi_(ix(leaf - 1)) - 1.0) * log_mass(ix(leaf));
      }
      (void)sums;
      break;
    }
    case DensityForm::exponential: {
      const NaturalForm nf = natural_form();
      for (std::size_t d = 0; d < branch_count(); ++d) {
        const std::size_t t = d + 1;
        const std::size_t s = topo.parent(t);
        out += nf.eta(ix(d)) * (log_mass(ix(t)) - log_mass(ix(s)));
      }
      out -= nf.log_g;
      break;
    }
  }
  return out;
}

inline Vector DirichletTree::sample(Rng& rng) const {
  const TreeTopology& topo = *topo_;
  Vector rho(xi_.size());
  for (std::size_t s : topo.internal_nodes()) {
    const auto branches = topo.child_branches(s);
    Vector alpha(ix(branches.size()));
    for (std::size_t i = 0; i < branches.size(); ++i) alpha(ix(i)) = xi_(ix(branches[i]));
    const Vector draw = sample_dirichlet(alpha, rng);
    for (std::size_t i = 0; i < branches.size(); ++i) rho(ix(branches[i])) = draw(ix(i));
  }
  Vector theta = theta_from_branch_probs(topo, rho);
  return theta / theta.sum();
}

inline Vector theta_from_branch_probs(const TreeTopology& topo, const Vector& rho) {
  if (sz(rho.size()) != topo.branch_count()) {
    throw ParameterError("theta_from_branch_probs: expected one probability per branch");
  }
  for (std::size_t s : topo.internal_nodes()) {
    double sum = 0.0;
    for (std::size_t c : topo.children(s)) {
      const double r = rho(ix(c - 1));
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw ParameterError("theta_from_branch_probs: negative probability under node '" +
                             topo.label(s) + "'");
      }
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-10) {
      throw ParameterError("theta_from_branch_probs: probabilities under node '" + topo.label(s) +
                           "' do not sum to one");
    }
  }
  Vector mass = Vector::Ones(ix(topo.node_count()));
  for (std::size_t id = 1; id < topo.node_count(); ++id) {
    mass(ix(id)) = mass(ix(topo.parent(id))) * rho(ix(id - 1));
  }
  Vector theta(ix(topo.leaf_count()));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) theta(ix(k)) = mass(ix(topo.leaves()[k]));
  return theta;
}

inline Vector branch_probs_from_theta(const TreeTopology& topo, const Vector& theta) {
  detail::check_simplex(theta, topo.leaf_count(), "branch_probs_from_theta");
  const Vector mass = node_masses(topo, theta);
  Vector rho(ix(topo.branch_count()));
  for (std::size_t id = 1; id < topo.node_count(); ++id) {
    const double parent_mass = mass(ix(topo.parent(id)));
    if (!(parent_mass > kMassFloor)) {
      throw ParameterError("branch_probs_from_theta: node '" + topo.label(topo.parent(id)) +
                           "' has zero mass");
    }
    rho(ix(id - 1)) = mass(ix(id)) / parent_mass;
  }
  return rho;
}

// ---------------------------------------------------------------------------
// Prior families.

namespace detail {

inline std::string topic_label(std::size_t k) { return "k" + std::to_string(k + 1); }

inline void require_positive(const Vector& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v(i) > 0.0) || !std::isfinite(v(i))) {
      throw ParameterError(std::string(what) + ": parameters must be positive");
    }
  }
}

}  // namespace detail

inline std::shared_ptr<const TreeTopology> flat_topology(std::size_t K) {
  if (K < 2) throw ParameterError("flat prior needs K >= 2");
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < K; ++k) edges.push_back({detail::topic_label(k), "root"});
  return std::make_shared<const TreeTopology>(TreeTopology::from_edges(edges));
}

inline std::shared_ptr<const TreeTopology> beta_liouville_topology(std::size_t K) {
  if (K < 3) throw ParameterError("Beta-Liouville prior needs K >= 3");
  std::vector<Edge> edges{{"inner", "root"}};
  for (std::size_t k = 0; k + 1 < K; ++k) edges.push_back({detail::topic_label(k), "inner"});
  edges.push_back({detail::topic_label(K - 1), "root"});
  return std::make_shared<const TreeTopology>(TreeTopology::from_edges(edges));
}

inline std::shared_ptr<const TreeTopology> generalized_dirichlet_topology(std::size_t K) {
  if (K < 2) throw ParameterError("generalized Dirichlet prior needs K >= 2");
  std::vector<Edge> edges;
  std::string level = "root";
  for (std::size_t k = 0; k + 1 < K; ++k) {
    edges.push_back({detail::topic_label(k), level});
    const std::string next = (k + 2 == K) ? detail::topic_label(K - 1) : "n" + std::to_string(k + 2);
    edges.push_back({next, level});
    level = next;
  }
  return std::make_shared<const TreeTopology>(TreeTopology::from_edges(edges));
}

inline DirichletTree make_dirichlet_prior(const Vector& alpha) {
  detail::require_positive(alpha, "Dirichlet prior");
  return DirichletTree(flat_topology(sz(alpha.size())), alpha);
}

inline DirichletTree make_beta_liouville_prior(double alpha, double beta, const Vector& alphas) {
  const std::size_t K = sz(alphas.size()) + 1;
  detail::require_positive(alphas, "Beta-Liouville prior");
  detail::require_positive(Vector::Constant(2, 1.0).cwiseProduct(Vector{{alpha, beta}}),
                           "Beta-Liouville prior");
  auto topo = beta_liouville_topology(K);
  // Branch order: inner, k1..k{K-1}, kK.
  Vector xi(ix(topo->branch_count()));
  xi(0) = alpha;
  xi.segment(1, alphas.size()) = alphas;
  xi(xi.size() - 1) = beta;
  return DirichletTree(std::move(topo), std::move(xi));
}

inline DirichletTree make_generalized_dirichlet_prior(const Vector& alphas, const Vector& kappas) {
  if (alphas.size() != kappas.size()) {
    throw ParameterError("generalized Dirichlet prior: alphas and kappas differ in length");
  }
  detail::require_positive(alphas, "generalized Dirichlet prior");
  detail::require_positive(kappas, "generalized Dirichlet prior");
  auto topo = generalized_dirichlet_topology(sz(alphas.size()) + 1);
  // Branch order alternates (alpha_k, kappa_k) level by level.
  Vector xi(ix(topo->branch_count()));
  for (Eigen::Index k = 0; k < alphas.size(); ++k) {
    xi(2 * k) = alphas(k);
    xi(2 * k + 1) = kappas(k);
  }
  return DirichletTree(std::move(topo), std::move(xi));
}

}  // namespace ldta

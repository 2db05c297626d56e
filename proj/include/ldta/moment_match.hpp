#pragma once

// Recover Dirichlet-Tree parameters from target expectations of the branch
// sufficient statistics E[log(Theta_t / Theta_s)]. Each internal node is an
// independent Dirichlet problem psi(a_k) - psi(sum a) = u_k.

#include "common.hpp"
#include "dtree.hpp"
#include "special.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace ldta {

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MatchOptions {
  double tolerance = 1e-10;  // on max_k |psi(a_k) - psi(a_0) - u_k|
  int max_newton_iters = 100;
  int max_halvings = 40;
  int max_fixed_point_iters = 100000;
  bool fixed_point_fallback = true;
};

struct NodeSolve {
  Vector alpha;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

namespace detail {

inline void check_targets(const Vector& u, const char* where) {
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u(i)) || !(u(i) < 0.0)) {
      throw ParameterError(std::string(where) + ": targets must be finite and negative, got " +
                           std::to_string(u(i)));
    }
  }
}

inline void check_init(const Vector& init, Eigen::Index c, const char* where) {
  if (init.size() != c) throw ParameterError(std::string(where) + ": init dimension mismatch");
  for (Eigen::Index i = 0; i < c; ++i) {
    if (!(init(i) > 0.0) || !std::isfinite(init(i))) {
      throw ParameterError(std::string(where) + ": init must be positive");
    }
  }
}

inline Vector node_residual(const Vector& alpha, const Vector& u) {
  const double psi0 = digamma(alpha.sum());
  Vector d(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) d(k) = digamma(alpha(k)) - psi0 - u(k);
  return d;
}

}  // namespace detail

/// Inverse of the Jacobian of d(a) = psi(a) - psi(sum a) - u, applied to v via
/// Sherman-Morrison: J^-1 = diag(pi) - pi pi^T / sigma with pi_k = 1/psi'(a_k)
/// and sigma = sum pi - 1/psi'(a_0).
inline Vector newton_direction(const Vector& alpha, const Vector& v) {
  Vector pi(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) pi(k) = 1.0 / trigamma(alpha(k));
  const double sigma = pi.sum() - 1.0 / trigamma(alpha.sum());
  return pi.cwiseProduct(v) - pi * (pi.dot(v) / sigma);
}

/// Dense form of the same inverse, for checking.
inline Matrix inverse_jacobian(const Vector& alpha) {
  Vector pi(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) pi(k) = 1.0 / trigamma(alpha(k));
  const double sigma = pi.sum() - 1.0 / trigamma(alpha.sum());
  Matrix out = -(pi * pi.transpose()) / sigma;
  out.diagonal() += pi;
  return out;
}

/// Jacobian diag(psi'(a)) - psi'(a_0) 1 1^T.
inline Matrix node_jacobian(const Vector& alpha) {
  Matrix out = Matrix::Constant(alpha.size(), alpha.size(), -trigamma(alpha.sum()));
  for (Eigen::Index k = 0; k < alpha.size(); ++k) out(k, k) += trigamma(alpha(k));
  return out;
}

/// a_k <- psi^-1(psi(sum a) + u_k) until the residual drops below tolerance.
inline NodeSolve match_node_fixed_point(const Vector& u, const Vector& init,
                                        const MatchOptions& opt = {}) {
  detail::check_targets(u, "match_node_fixed_point");
  detail::check_init(init, u.size(), "match_node_fixed_point");
  NodeSolve out;
  out.alpha = init;
  for (int iter = 0; iter <= opt.max_fixed_point_iters; ++iter) {
    out.residual = detail::node_residual(out.alpha, u).cwiseAbs().maxCoeff();
    out.iterations = iter;
    if (out.residual < opt.tolerance) {
      out.converged = true;
      return out;
    }
    const double psi0 = digamma(out.alpha.sum());
    for (Eigen::Index k = 0; k < u.size(); ++k) out.alpha(k) = inverse_digamma(psi0 + u(k));
  }
  return out;
}

/// Newton-Raphson with the Sherman-Morrison inverse Jacobian. A step that
/// leaves the positive orthant, or fails to reduce the residual, is halved.
inline NodeSolve match_node_newton(const Vector& u, const Vector& init,
                                   const MatchOptions& opt = {}) {
  detail::check_targets(u, "match_node_newton");
  detail::check_init(init, u.size(), "match_node_newton");
  NodeSolve out;
  out.alpha = init;
  Vector d = detail::node_residual(out.alpha, u);
  out.residual = d.cwiseAbs().maxCoeff();
  for (int iter = 0; iter < opt.max_newton_iters; ++iter) {
    if (out.residual < opt.tolerance) {
      out.converged = true;
      // One more step is nearly free near the root and usually squares the
      // residual; keep it only if it helps.
      const Vector polish = out.alpha - newton_direction(out.alpha, d);
      if ((polish.array() > 0.0).all()) {
        const double r = detail::node_residual(polish, u).cwiseAbs().maxCoeff();
        if (r < out.residual) {
          out.alpha = polish;
          out.residual = r;
        }
      }
      return out;
    }
    const Vector step = newton_direction(out.alpha, d);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h, scale *= 0.5) {
      const Vector trial = out.alpha - scale * step;
      if (!(trial.array() > 0.0).all()) continue;
      const Vector d_trial = detail::node_residual(trial, u);
      const double r = d_trial.cwiseAbs().maxCoeff();
      // Accept the full step whenever it is positive; shorter steps must
      // improve the residual.
      if (h == 0 || r < out.residual) {
        out.alpha = trial;
        d = d_trial;
        out.residual = r;
        accepted = true;
        break;
      }
    }
    out.iterations = iter + 1;
    if (!accepted) break;
  }
  out.converged = out.residual < opt.tolerance;
  return out;
}

struct TreeMatch {
  DirichletTree params;
  int newton_iterations = 0;
  int fallback_nodes = 0;
};

/// Solves every internal node independently. init defaults to all ones.
inline TreeMatch match_tree(const std::shared_ptr<const TreeTopology>& topo, const Vector& u_target,
                            const std::optional<Vector>& init = std::nullopt,
                            const MatchOptions& opt = {}) {
  if (sz(u_target.size()) != topo->branch_count()) {
    throw ParameterError("match_tree: expected one target per branch");
  }
  Vector xi = init ? *init : Vector::Ones(u_target.size());
  if (xi.size() != u_target.size()) throw ParameterError("match_tree: init dimension mismatch");
  TreeMatch result{DirichletTree(topo, xi)};
  for (std::size_t s : topo->internal_nodes()) {
    const auto branches = topo->child_branches(s);
    const auto c = ix(branches.size());
    Vector u(c), start(c);
    for (Eigen::Index i = 0; i < c; ++i) {
      u(i) = u_target(ix(branches[sz(i)]));
      start(i) = xi(ix(branches[sz(i)]));
    }
    NodeSolve solve;
    try {
      solve = match_node_newton(u, start, opt);
    } catch (const ParameterError& e) {
      throw ParameterError("match_tree: node '" + topo->label(s) + "': " + e.what());
    }
    result.newton_iterations += solve.iterations;
    if (!solve.converged && opt.fixed_point_fallback) {
      NodeSolve fp = match_node_fixed_point(u, solve.alpha, opt);
      ++result.fallback_nodes;
      if (fp.residual < solve.residual) solve = fp;
    }
    if (!solve.converged && solve.residual >= opt.tolerance) {
      throw ConvergenceError("match_tree: node '" + topo->label(s) +
                             "' did not converge (residual " + std::to_string(solve.residual) +
                             ")");
    }
    for (Eigen::Index i = 0; i < c; ++i) xi(ix(branches[sz(i)])) = solve.alpha(i);
  }
  result.params = DirichletTree(topo, std::move(xi));
  return result;
}

}  // namespace ldta

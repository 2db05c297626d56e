#pragma once

// Rooted tree topology underlying a Dirichlet-Tree.
//
// Nodes are renumbered in depth-first preorder (children in declaration
// order), so the root is node 0. Every non-root node t owns the branch t|s to
// its parent s; branch index = preorder index - 1. Leaves, in preorder, define
// the topic index k = 0..K-1.

#include "common.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ldta {

class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Edge {
  std::string child;
  std::string parent;
};

class TreeTopology {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Builds and validates a topology from (child, parent) edges. The root is
  /// the unique node that never appears as a child.
  static TreeTopology from_edges(std::span<const Edge> edges);

  std::size_t node_count() const { return labels_.size(); }
  std::size_t branch_count() const { return node_count() - 1; }
  std::size_t leaf_count() const { return leaves_.size(); }
  std::size_t internal_count() const { return internal_nodes_.size(); }

  const std::string& label(std::size_t node) const { return labels_.at(node); }
  std::size_t parent(std::size_t node) const { return parent_.at(node); }
  const std::vector<std::size_t>& children(std::size_t node) const {
    return children_.at(node);
  }
  bool is_leaf(std::size_t node) const { return children_.at(node).empty(); }
  /// l(s): number of leaves under node s.
  std::size_t leaves_under(std::size_t node) const { return leaves_under_.at(node); }

  /// Leaf nodes in topic order.
  const std::vector<std::size_t>& leaves() const { return leaves_; }
  /// Internal nodes in preorder (root first).
  const std::vector<std::size_t>& internal_nodes() const { return internal_nodes_; }

  // Branch <-> node helpers.
  std::size_t branch_child(std::size_t branch) const { return branch + 1; }
  std::size_t branch_parent(std::size_t branch) const { return parent_.at(branch + 1); }
  bool branch_is_leaf(std::size_t branch) const { return is_leaf(branch + 1); }
  /// Branch from node to its parent; npos for the root.
  std::size_t branch_of(std::size_t node) const { return node == 0 ? npos : node - 1; }
  /// Branch leading to leaf k.
  std::size_t leaf_branch(std::size_t k) const { return leaves_.at(k) - 1; }
  /// Topic index of a leaf node, npos if not a leaf.
  std::size_t topic_of(std::size_t node) const { return topic_of_.at(node); }
  /// Position of internal node s in internal_nodes(), npos for leaves.
  std::size_t internal_index(std::size_t node) const { return internal_index_.at(node); }
  /// Child branches of an internal node, in declaration order.
  std::vector<std::size_t> child_branches(std::size_t node) const;

  /// Root-to-leaf branch list for topic k.
  std::vector<std::size_t> leaf_path(std::size_t k) const;

  /// Edges in branch order; feeding them back to from_edges reproduces the
  /// same indices.
  std::vector<Edge> edges() const;

  std::optional<std::size_t> find(const std::string& label) const;

  bool operator==(const TreeTopology& other) const {
    return labels_ == other.labels_ && parent_ == other.parent_;
  }

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::size_t> leaves_under_;
  std::vector<std::size_t> leaves_;
  std::vector<std::size_t> internal_nodes_;
  std::vector<std::size_t> topic_of_;
  std::vector<std::size_t> internal_index_;
};

/// Binary D x K matrix with entry (d, k) = 1 iff branch d is on the path of
/// leaf k.
class SelectionOperator {
 public:
  explicit SelectionOperator(const TreeTopology& topo);

  const Matrix& matrix() const { return matrix_; }
  std::size_t rows() const { return static_cast<std::size_t>(matrix_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(matrix_.cols()); }
  double operator()(std::size_t d, std::size_t k) const {
    return matrix_(ix(d), ix(k));
  }

 private:
  Matrix matrix_;
};

/// Branch pseudo-counts sum_k n_k delta_d(k), via one bottom-up pass.
inline Vector selection_apply(const TreeTopology& topo, const Vector& leaf_counts);

/// Path sums: for each leaf k, sum over branches d on its path of values(d).
/// This is the transpose of the selection operator applied to values.
inline Vector selection_apply_transpose(const TreeTopology& topo,
                                          const Vector& branch_values);

// ---------------------------------------------------------------------------

inline TreeTopology TreeTopology::from_edges(std::span<const Edge> edges) {
  if (edges.empty()) throw TopologyError("tree: empty edge list");

  // Intern labels in first-appearance order.
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> names;
  auto intern = [&](const std::string& s) {
    auto [it, inserted] = ids.try_emplace(s, names.size());
    if (inserted) names.push_back(s);
    return it->second;
  };
  const std::size_t n_guess = edges.size() + 1;
  std::vector<std::size_t> raw_parent;
  std::vector<std::vector<std::size_t>> raw_children;
  raw_parent.reserve(n_guess);
  for (const Edge& e : edges) {
    if (e.child.empty() || e.parent.empty()) throw TopologyError("tree: empty node id");
    if (e.child == e.parent) throw TopologyError("tree: cycle detected at node '" + e.child + "'");
    const std::size_t c = intern(e.child);
    const std::size_t p = intern(e.parent);
    if (raw_parent.size() < names.size()) {
      raw_parent.resize(names.size(), npos);
      raw_children.resize(names.size());
    }
    if (raw_parent[c] != npos) {
      throw TopologyError("tree: node '" + e.child + "' has more than one parent");
    }
    raw_parent[c] = p;
    raw_children[p].push_back(c);
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (raw_parent[i] == npos) roots.push_back(i);
  }
  if (roots.empty()) throw TopologyError("tree: cycle detected (no root)");
  if (roots.size() > 1) {
    throw TopologyError("tree: multiple roots ('" + names[roots[0]] + "', '" + names[roots[1]] +
                        "')");
  }

  // Iterative preorder traversal from the root.
  TreeTopology topo;
  std::vector<std::size_t> new_id(names.size(), npos);
  std::vector<std::size_t> stack{roots.front()};
  while (!stack.empty()) {
    const std::size_t raw = stack.back();
    stack.pop_back();
    new_id[raw] = topo.labels_.size();
    topo.labels_.push_back(names[raw]);
    const auto& ch = raw_children[raw];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  if (topo.labels_.size() != names.size()) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (new_id[i] == npos) {
        throw TopologyError("tree: cycle detected or node '" + names[i] +
                            "' disconnected from the root");
      }
    }
  }

  const std::size_t n = names.size();
  topo.parent_.assign(n, npos);
  topo.children_.assign(n, {});
  topo.topic_of_.assign(n, npos);
  topo.internal_index_.assign(n, npos);
  for (std::size_t raw = 0; raw < n; ++raw) {
    const std::size_t id = new_id[raw];
    if (raw_parent[raw] != npos) topo.parent_[id] = new_id[raw_parent[raw]];
    for (std::size_t c : raw_children[raw]) topo.children_[id].push_back(new_id[c]);
  }
  for (std::size_t id = 0; id < n; ++id) {
    if (topo.children_[id].empty()) {
      topo.topic_of_[id] = topo.leaves_.size();
      topo.leaves_.push_back(id);
    } else {
      if (topo.children_[id].size() < 2) {
        throw TopologyError("tree: internal node '" + topo.labels_[id] +
                            "' has fewer than two children");
      }
      topo.internal_index_[id] = topo.internal_nodes_.size();
      topo.internal_nodes_.push_back(id);
    }
  }
  topo.leaves_under_.assign(n, 0);
  for (std::size_t id = n; id-- > 0;) {
    if (topo.children_[id].empty()) {
      topo.leaves_under_[id] = 1;
    } else {
      for (std::size_t c : topo.children_[id]) topo.leaves_under_[id] += topo.leaves_under_[c];
    }
  }
  return topo;
}

inline std::vector<std::size_t> TreeTopology::child_branches(std::size_t node) const {
  std::vector<std::size_t> out;
  out.reserve(children_.at(node).size());
  for (std::size_t c : children_[node]) out.push_back(c - 1);
  return out;
}

inline std::vector<std::size_t> TreeTopology::leaf_path(std::size_t k) const {
  if (k >= leaves_.size()) {
    throw std::out_of_range("leaf_path: topic index " + std::to_string(k) + " out of range");
  }
  std::vector<std::size_t> path;
  for (std::size_t node = leaves_[k]; node != 0; node = parent_[node]) path.push_back(node - 1);
  return {path.rbegin(), path.rend()};
}

inline std::vector<Edge> TreeTopology::edges() const {
  std::vector<Edge> out;
  out.reserve(branch_count());
  for (std::size_t id = 1; id < node_count(); ++id) {
    out.push_back({labels_[id], labels_[parent_[id]]});
  }
  return out;
}

inline std::optional<std::size_t> TreeTopology::find(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

inline SelectionOperator::SelectionOperator(const TreeTopology& topo)
    : matrix_(Matrix::Zero(ix(topo.branch_count()),
                                    ix(topo.leaf_count()))) {
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) {
    for (std::size_t d : topo.leaf_path(k)) {
      matrix_(ix(d), ix(k)) = 1.0;
    }
  }
}

inline Vector selection_apply(const TreeTopology& topo,
                                       const Vector& leaf_counts) {
  if (static_cast<std::size_t>(leaf_counts.size()) != topo.leaf_count()) {
    throw std::invalid_argument("selection_apply: expected " + std::to_string(topo.leaf_count()) +
                                " leaf counts");
  }
  Vector node_total = Vector::Zero(ix(topo.node_count()));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) {
    node_total(ix(topo.leaves()[k])) = leaf_counts(ix(k));
  }
  // Reverse preorder visits children before parents.
  for (std::size_t id = topo.node_count(); id-- > 1;) {
    node_total(ix(topo.parent(id))) += node_total(ix(id));
  }
  return node_total.tail(ix(topo.branch_count()));
}

inline Vector selection_apply_transpose(const TreeTopology& topo,
                                                 const Vector& branch_values) {
  if (static_cast<std::size_t>(branch_values.size()) != topo.branch_count()) {
    throw std::invalid_argument("selection_apply_transpose: expected " +
                                std::to_string(topo.branch_count()) + " branch values");
  }
  Vector cumulative = Vector::Zero(ix(topo.node_count()));
  for (std::size_t id = 1; id < topo.node_count(); ++id) {
    cumulative(ix(id)) =
        cumulative(ix(topo.parent(id))) +
        branch_values(ix(id - 1));
  }
  Vector out(ix(topo.leaf_count()));
  for (std::size_t k = 0; k < topo.leaf_count(); ++k) {
    out(ix(k)) = cumulative(ix(topo.leaves()[k]));
  }
  return out;
}

}  // namespace ldta

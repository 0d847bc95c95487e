#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scino/core/error.hpp"

namespace scino {

/// Directed graph over named nodes; adj(i, j) = edge i -> j. Acyclicity is
/// checked by topological_order() and validate().
class Dag {
 public:
  Dag() = default;
  explicit Dag(std::size_t d) : d_(d), adj_(d * d, 0) {
    for (std::size_t i = 0; i < d; ++i) names_.push_back("x" + std::to_string(i + 1));
  }
  explicit Dag(std::vector<std::string> names) : d_(names.size()), names_(std::move(names)), adj_(d_ * d_, 0) {}

  std::size_t size() const noexcept { return d_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  void set_names(std::vector<std::string> n) {
    if (n.size() != d_) throw DataError("Dag: name count mismatch");
    names_ = std::move(n);
  }

  bool has_edge(std::size_t i, std::size_t j) const { return adj_[i * d_ + j] != 0; }

  void add_edge(std::size_t i, std::size_t j) {
    if (i >= d_ || j >= d_) throw DataError("Dag: edge endpoint out of range");
    if (i == j) throw DataError("Dag: self-loop on node " + names_[i]);
    adj_[i * d_ + j] = 1;
  }
  void remove_edge(std::size_t i, std::size_t j) { adj_[i * d_ + j] = 0; }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (auto v : adj_) n += v;
    return n;
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> e;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        if (has_edge(i, j)) e.emplace_back(i, j);
    return e;
  }

  std::vector<std::size_t> parents(std::size_t j) const {
    std::vector<std::size_t> p;
    for (std::size_t i = 0; i < d_; ++i)
      if (has_edge(i, j)) p.push_back(i);
    return p;
  }

  std::vector<std::size_t> children(std::size_t i) const {
    std::vector<std::size_t> c;
    for (std::size_t j = 0; j < d_; ++j)
      if (has_edge(i, j)) c.push_back(j);
    return c;
  }

  /// Kahn's algorithm, smallest ready index first; throws on a cycle.
  std::vector<std::size_t> topological_order() const {
    std::vector<std::size_t> indeg(d_, 0), order;
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j) indeg[j] += has_edge(i, j);
    std::vector<bool> done(d_, false);
    while (order.size() < d_) {
      std::size_t pick = d_;
      for (std::size_t i = 0; i < d_; ++i) {
        if (!done[i] && indeg[i] == 0) {
          pick = i;
          break;
        }
      }
      if (pick == d_) throw DataError("Dag: graph contains a cycle");
      done[pick] = true;
      order.push_back(pick);
      for (std::size_t j = 0; j < d_; ++j)
        if (has_edge(pick, j)) --indeg[j];
    }
    return order;
  }

  bool is_acyclic() const {
    try {
      topological_order();
      return true;
    } catch (const DataError&) {
      return false;
    }
  }

  void validate() const {
    for (std::size_t i = 0; i < d_; ++i)
      if (has_edge(i, i)) throw DataError("Dag: self-loop on node " + names_[i]);
    topological_order();
  }

  /// Nodes without children among `alive` (all nodes when empty mask).
  std::vector<std::size_t> leaves(const std::vector<bool>& alive) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < d_; ++i) {
      if (!alive[i]) continue;
      bool leaf = true;
      for (std::size_t j = 0; j < d_ && leaf; ++j) leaf = !(alive[j] && has_edge(i, j));
      if (leaf) out.push_back(i);
    }
    return out;
  }

  friend bool operator==(const Dag& a, const Dag& b) { return a.d_ == b.d_ && a.adj_ == b.adj_; }

 private:
  std::size_t d_ = 0;
  std::vector<std::string> names_;
  std::vector<std::uint8_t> adj_;
};

}  // namespace scino

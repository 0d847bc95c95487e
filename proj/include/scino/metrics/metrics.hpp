#pragma once

#include <json.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "scino/core/error.hpp"
#include "scino/data/dag.hpp"
#include "scino/ordering/order.hpp"

namespace scino {

namespace detail {

inline std::vector<std::size_t> positions(const std::vector<std::size_t>& topo, std::size_t d) {
  if (topo.size() != d) throw DataError("order covers " + std::to_string(topo.size()) + " nodes, graph has " + std::to_string(d));
  std::vector<std::size_t> pos(d, d);
  for (std::size_t k = 0; k < d; ++k) {
    if (topo[k] >= d || pos[topo[k]] != d) throw DataError("order is not a permutation of the graph's nodes");
    pos[topo[k]] = k;
  }
  return pos;
}

inline void require_same_nodes(const Dag& a, const Dag& b) {
  if (a.size() != b.size()) throw DataError("graphs have different node counts");
  if (!a.names().empty() && !b.names().empty() && a.names() != b.names()) throw DataError("graphs have different node names");
}

// Descendants of `from` (inclusive) following edges of g.
inline std::vector<char> descendants(const Dag& g, const std::vector<std::size_t>& from) {
  std::vector<char> seen(g.size(), 0);
  std::vector<std::size_t> stack = from;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    for (std::size_t c : g.children(v)) stack.push_back(c);
  }
  return seen;
}

inline std::vector<char> ancestors(const Dag& g, const std::vector<std::size_t>& from) {
  std::vector<char> seen(g.size(), 0);
  std::vector<std::size_t> stack = from;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    for (std::size_t p : g.parents(v)) stack.push_back(p);
  }
  return seen;
}

}  // namespace detail

/// Number of edges i -> j of g with j placed before i in the topological order.
inline std::size_t order_divergence(const std::vector<std::size_t>& topo, const Dag& g) {
  const std::vector<std::size_t> pos = detail::positions(topo, g.size());
  std::size_t od = 0;
  for (auto [i, j] : g.edges())
    if (pos[i] > pos[j]) ++od;
  return od;
}

inline std::size_t order_divergence(const CausalOrder& pi, const Dag& g) { return order_divergence(pi.topological(), g); }

/// Prefix sums, in removal order, of edges from each removed leaf into nodes
/// still present. The last element equals the order divergence.
inline std::vector<std::size_t> cumulative_od(const CausalOrder& pi, const Dag& g) {
  detail::positions(pi.topological(), g.size());
  std::vector<char> gone(g.size(), 0);
  std::vector<std::size_t> out;
  std::size_t acc = 0;
  for (std::size_t l : pi.removal) {
    gone[l] = 1;
    for (std::size_t c : g.children(l))
      if (!gone[c]) ++acc;
    out.push_back(acc);
  }
  return out;
}

/// Unordered pairs whose edge type (none, i->j, j->i) differs.
inline std::size_t shd(const Dag& g, const Dag& h) {
  detail::require_same_nodes(g, h);
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      if (g.has_edge(i, j) != h.has_edge(i, j) || g.has_edge(j, i) != h.has_edge(j, i)) ++n;
  return n;
}

/// x and y d-separated by z in g (moralized ancestral graph test).
inline bool d_separated(const Dag& g, std::size_t x, std::size_t y, const std::vector<std::size_t>& z) {
  const std::size_t d = g.size();
  std::vector<std::size_t> seeds = z;
  seeds.push_back(x);
  seeds.push_back(y);
  const std::vector<char> anc = detail::ancestors(g, seeds);
  std::vector<char> blocked(d, 0);
  for (std::size_t v : z) blocked[v] = 1;
  std::vector<std::vector<std::size_t>> adj(d);
  for (std::size_t v = 0; v < d; ++v) {
    if (!anc[v]) continue;
    const std::vector<std::size_t> pa = g.parents(v);
    for (std::size_t p : pa) {
      adj[v].push_back(p);
      adj[p].push_back(v);
    }
    for (std::size_t a = 0; a < pa.size(); ++a)
      for (std::size_t b = a + 1; b < pa.size(); ++b) {
        adj[pa[a]].push_back(pa[b]);
        adj[pa[b]].push_back(pa[a]);
      }
  }
  std::vector<char> seen(d, 0);
  std::vector<std::size_t> stack{x};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (seen[v]) continue;
    seen[v] = 1;
    if (v == y) return false;
    for (std::size_t w : adj[v])
      if (!seen[w] && !blocked[w]) stack.push_back(w);
  }
  return true;
}

/// Whether z is a valid adjustment set for the effect of x on y in g.
inline bool valid_adjustment(const Dag& g, std::size_t x, std::size_t y, const std::vector<std::size_t>& z) {
  const std::vector<char> de_x = detail::descendants(g, {x});
  const std::vector<char> an_y = detail::ancestors(g, {y});
  // Nodes other than x on directed paths x -> ... -> y.
  std::vector<std::size_t> causal;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (v != x && de_x[v] && an_y[v]) causal.push_back(v);
  const std::vector<char> forbidden = detail::descendants(g, causal);
  for (std::size_t v : z)
    if (v == x || forbidden[v]) return false;
  Dag backdoor = g;
  for (std::size_t c : causal)
    if (backdoor.has_edge(x, c)) backdoor.remove_edge(x, c);
  return d_separated(backdoor, x, y, z);
}

/// Ordered pairs (i, j) for which the parents of i in h do not yield the
/// interventional distribution of j under do(i) in g.
inline std::size_t sid(const Dag& g, const Dag& h) {
  detail::require_same_nodes(g, h);
  g.validate();
  h.validate();
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::vector<std::size_t> pa = h.parents(i);
    const std::vector<char> de_i = detail::descendants(g, {i});
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (i == j) continue;
      const bool j_in_pa = std::find(pa.begin(), pa.end(), j) != pa.end();
      const bool ok = j_in_pa ? !de_i[j] : valid_adjustment(g, i, j, pa);
      if (!ok) ++n;
    }
  }
  return n;
}

struct MetricReport {
  std::optional<std::size_t> od, shd, sid;
  std::vector<std::size_t> cumulative_od;
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json::object();
  if (r.od) j["od"] = *r.od;
  if (r.shd) j["shd"] = *r.shd;
  if (r.sid) j["sid"] = *r.sid;
  if (!r.cumulative_od.empty()) j["cumulative_od"] = r.cumulative_od;
}

/// OD and its cumulative series for an order.
inline MetricReport evaluate_order(const CausalOrder& pi, const Dag& truth) {
  MetricReport r;
  r.od = order_divergence(pi, truth);
  r.cumulative_od = cumulative_od(pi, truth);
  return r;
}

/// OD, SHD and SID for a predicted graph; OD uses the graph's own topological order.
inline MetricReport evaluate_graph(const Dag& predicted, const Dag& truth) {
  MetricReport r;
  r.od = order_divergence(predicted.topological_order(), truth);
  r.shd = shd(truth, predicted);
  r.sid = sid(truth, predicted);
  return r;
}

}  // namespace scino

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/numerics.hpp"

namespace hgp {

enum class NodeType : std::uint8_t { Group = 0, User = 1, Item = 2 };
enum class EdgeType : std::uint8_t { GroupUser = 0, ItemUser = 1 };

inline constexpr std::array<NodeType, 3> kNodeTypes{NodeType::Group, NodeType::User, NodeType::Item};
// Global edge-type order; used for stacking, concatenation and checkpoints.
inline constexpr std::array<EdgeType, 2> kEdgeTypes{EdgeType::GroupUser, EdgeType::ItemUser};
inline constexpr std::size_t kNumNodeTypes = kNodeTypes.size();
inline constexpr std::size_t kNumEdgeTypes = kEdgeTypes.size();

inline constexpr std::size_t index_of(NodeType t) { return static_cast<std::size_t>(t); }
inline constexpr std::size_t index_of(EdgeType t) { return static_cast<std::size_t>(t); }

inline std::string_view to_string(NodeType t) {
  switch (t) {
    case NodeType::Group:
      return "Group";
    case NodeType::User:
      return "User";
    case NodeType::Item:
      return "Item";
  }
  return "?";
}

inline std::string_view to_string(EdgeType t) { return t == EdgeType::GroupUser ? "GroupUser" : "ItemUser"; }

inline NodeType parse_node_type(std::string_view s) {
  for (NodeType t : kNodeTypes)
    if (s == to_string(t)) return t;
  throw Error("unknown node type '" + std::string(s) + "'", "node_type");
}

inline EdgeType parse_edge_type(std::string_view s) {
  for (EdgeType t : kEdgeTypes)
    if (s == to_string(t)) return t;
  throw Error("unknown edge type '" + std::string(s) + "'", "edge_type");
}

// The non-User endpoint type a relation admits.
inline constexpr NodeType partner_type(EdgeType r) {
  return r == EdgeType::GroupUser ? NodeType::Group : NodeType::Item;
}

using NodeId = std::uint32_t;
using Day = std::int64_t;

struct NodeSpec {
  NodeId id;
  NodeType type;
};

struct EdgeSpec {
  NodeId u;
  NodeId v;
  EdgeType type;
  std::optional<Day> timestamp;
};

// Pattern-only CSR: sorted, duplicate-free column indices per row.
struct Csr {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<NodeId> col;

  std::span<const NodeId> neighbors(NodeId v) const { return {col.data() + row_ptr[v], row_ptr[v + 1] - row_ptr[v]}; }
  std::size_t degree(NodeId v) const { return row_ptr[v + 1] - row_ptr[v]; }
  std::size_t nnz() const { return col.size(); }
};

// Tripartite graph, immutable once built. Every undirected edge is stored in
// both directions of its relation's CSR.
class HetGraph {
 public:
  std::size_t num_nodes() const { return types_.size(); }
  NodeType type_of(NodeId v) const { return types_[v]; }
  std::span<const NodeType> node_types() const { return types_; }

  const std::vector<NodeId>& nodes_of_type(NodeType t) const { return by_type_[index_of(t)]; }
  std::size_t count(NodeType t) const { return by_type_[index_of(t)].size(); }

  const Csr& adjacency(EdgeType r) const { return adj_[index_of(r)]; }
  std::size_t num_edges(EdgeType r) const { return adj_[index_of(r)].nnz() / 2; }

  // Canonical (u < v) edge list with timestamps, sorted by (type, u, v).
  std::span<const EdgeSpec> edges() const { return edges_; }

  bool has_edge(EdgeType r, NodeId u, NodeId v) const {
    const auto nb = adjacency(r).neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  friend HetGraph build_graph(std::span<const NodeSpec> nodes, std::span<const EdgeSpec> edges);

 private:
  std::vector<NodeType> types_;
  std::array<std::vector<NodeId>, kNumNodeTypes> by_type_;
  std::array<Csr, kNumEdgeTypes> adj_;
  std::vector<EdgeSpec> edges_;
};

inline std::string describe_edge(const EdgeSpec& e) {
  return "(" + std::to_string(e.u) + "," + std::to_string(e.v) + "," + std::string(to_string(e.type)) + ")";
}

// Validates the typed node and edge lists and builds the per-relation CSR.
// Duplicate edges collapse to one; the earliest timestamp is kept.
inline HetGraph build_graph(std::span<const NodeSpec> nodes, std::span<const EdgeSpec> edges) {
  HetGraph g;
  const std::size_t n = nodes.size();
  g.types_.assign(n, NodeType::Group);
  std::vector<bool> seen(n, false);
  for (const auto& node : nodes) {
    require(node.id < n, "node id " + std::to_string(node.id) + " outside dense range [0," + std::to_string(n) + ")",
            "node " + std::to_string(node.id));
    require(!seen[node.id], "duplicate node id " + std::to_string(node.id), "node " + std::to_string(node.id));
    seen[node.id] = true;
    g.types_[node.id] = node.type;
  }
  for (NodeId v = 0; v < n; ++v) g.by_type_[index_of(g.types_[v])].push_back(v);

  std::vector<EdgeSpec> canon;
  canon.reserve(edges.size());
  for (const auto& e : edges) {
    const std::string name = describe_edge(e);
    require(e.u < n && e.v < n, "edge endpoint out of range " + name, name);
    const NodeType tu = g.types_[e.u];
    const NodeType tv = g.types_[e.v];
    const NodeType want = partner_type(e.type);
    for (NodeType t : {tu, tv})
      require(t == NodeType::User || t == want,
              std::string(to_string(e.type)) + " endpoint of type " + std::string(to_string(t)) + " in edge " + name,
              name);
    require(
        (tu == NodeType::User) != (tv == NodeType::User),
        std::string(to_string(e.type)) + " edge must join a User and a " + std::string(to_string(want)) + ": " + name,
        name);
    EdgeSpec c = e;
    if (c.u > c.v) std::swap(c.u, c.v);
    canon.push_back(c);
  }
  std::sort(canon.begin(), canon.end(), [](const EdgeSpec& a, const EdgeSpec& b) {
    if (a.type != b.type) return a.type < b.type;
    if (a.u != b.u) return a.u < b.u;
    if (a.v != b.v) return a.v < b.v;
    // earliest timestamp first; missing timestamps last
    if (a.timestamp.has_value() != b.timestamp.has_value()) return a.timestamp.has_value();
    return a.timestamp.value_or(0) < b.timestamp.value_or(0);
  });
  for (const auto& e : canon) {
    if (!g.edges_.empty()) {
      const auto& last = g.edges_.back();
      if (last.type == e.type && last.u == e.u && last.v == e.v) continue;
    }
    g.edges_.push_back(e);
  }

  for (EdgeType r : kEdgeTypes) {
    Csr& csr = g.adj_[index_of(r)];
    csr.n = n;
    std::vector<std::size_t> deg(n, 0);
    for (const auto& e : g.edges_) {
      if (e.type != r) continue;
      ++deg[e.u];
      ++deg[e.v];
    }
    csr.row_ptr.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) csr.row_ptr[v + 1] = csr.row_ptr[v] + deg[v];
    csr.col.assign(csr.row_ptr[n], 0);
    std::vector<std::size_t> fill(csr.row_ptr.begin(), csr.row_ptr.end() - 1);
    for (const auto& e : g.edges_) {
      if (e.type != r) continue;
      csr.col[fill[e.u]++] = e.v;
      csr.col[fill[e.v]++] = e.u;
    }
    for (std::size_t v = 0; v < n; ++v)
      std::sort(csr.col.begin() + static_cast<std::ptrdiff_t>(csr.row_ptr[v]),
                csr.col.begin() + static_cast<std::ptrdiff_t>(csr.row_ptr[v + 1]));
  }
  return g;
}

// D^-1/2 (A + I) D^-1/2 for one relation, over the full node index space.
struct NormAdj {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<NodeId> col;
  std::vector<double> val;
  std::vector<double> degree;  // degree of A + I

  std::size_t nnz() const { return col.size(); }

  double at(NodeId u, NodeId v) const {
    const auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[u]);
    const auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[u + 1]);
    const auto it = std::lower_bound(b, e, v);
    return (it != e && *it == v) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
  }

  Dense to_dense() const {
    Dense d(n, n);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t p = row_ptr[u]; p < row_ptr[u + 1]; ++p) d(u, col[p]) = val[p];
    return d;
  }
};

// Self loops are added for every node, including nodes the relation does not
// touch, so isolated rows reduce to the identity.
inline NormAdj normalized_adjacency(const HetGraph& g, EdgeType r) {
  const Csr& a = g.adjacency(r);
  NormAdj out;
  out.n = a.n;
  out.degree.resize(a.n);
  for (NodeId v = 0; v < a.n; ++v) out.degree[v] = static_cast<double>(a.degree(v) + 1);
  out.row_ptr.assign(a.n + 1, 0);
  for (NodeId v = 0; v < a.n; ++v) out.row_ptr[v + 1] = out.row_ptr[v] + a.degree(v) + 1;
  out.col.resize(out.row_ptr[a.n]);
  out.val.resize(out.row_ptr[a.n]);
  for (NodeId u = 0; u < a.n; ++u) {
    std::size_t p = out.row_ptr[u];
    bool self_done = false;
    for (NodeId v : a.neighbors(u)) {
      if (!self_done && u < v) {
        out.col[p] = u;
        out.val[p++] = 1.0 / out.degree[u];
        self_done = true;
      }
      // The product is commutative in IEEE arithmetic, so (u,v) and (v,u)
      // receive the identical value.
      out.col[p] = v;
      out.val[p++] = 1.0 / std::sqrt(out.degree[u] * out.degree[v]);
    }
    if (!self_done) {
      out.col[p] = u;
      out.val[p++] = 1.0 / out.degree[u];
    }
  }
  return out;
}

// Exact CSR * dense product; each output row accumulates in ascending column
// order.
inline Dense spmm(const NormAdj& adj, const Dense& m) {
  if (adj.n != m.rows())
    throw Error("spmm: adjacency is " + std::to_string(adj.n) + " nodes, matrix has " + std::to_string(m.rows()) +
                " rows");
  Dense out(adj.n, m.cols());
  for (std::size_t i = 0; i < adj.n; ++i) {
    auto o = out.row(i);
    for (std::size_t p = adj.row_ptr[i]; p < adj.row_ptr[i + 1]; ++p) {
      const double a = adj.val[p];
      const auto src = m.row(adj.col[p]);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += a * src[c];
    }
  }
  return out;
}

// Power-iteration estimate of the spectral radius. For a symmetric matrix the
// Rayleigh-style norm ratio never exceeds the true radius.
inline double spectral_radius_estimate(const NormAdj& adj, int iterations = 200, std::uint64_t seed = 1) {
  if (adj.n == 0) return 0.0;
  Rng rng(seed);
  Dense x(adj.n, 1);
  for (double& v : x.values()) v = rng.uniform(0.5, 1.5);
  double estimate = 0.0;
  for (int it = 0; it < iterations; ++it) {
    double norm = std::sqrt(dot(x.values(), x.values()));
    for (double& v : x.values()) v /= norm;
    Dense y = spmm(adj, x);
    estimate = std::sqrt(dot(y.values(), y.values()));
    if (estimate == 0.0) return 0.0;
    x = std::move(y);
  }
  return estimate;
}

}  // namespace hgp

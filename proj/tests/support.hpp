#pragma once

// Test-side oracles and fixtures. Everything here is written independently of
// the library kernels it is used to check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hgp/ctr.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

namespace hgp::test {

inline Dense random_dense(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Dense d(rows, cols);
  for (double& x : d.values()) x = rng.uniform(lo, hi);
  return d;
}

inline Dense naive_matmul(const Dense& a, const Dense& b) {
  Dense c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Random tripartite graph: node types drawn at random (at least one of each),
// each admissible pair joined with probability p.
inline HetGraph random_graph(std::size_t n, double p, Rng& rng) {
  std::vector<NodeSpec> nodes(n);
  for (NodeId v = 0; v < n; ++v) {
    NodeType t = v < 3 ? kNodeTypes[v] : kNodeTypes[rng.below(3)];
    nodes[v] = {v, t};
  }
  std::vector<EdgeSpec> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = 0; v < n; ++v) {
      if (nodes[u].type != NodeType::User) continue;
      if (nodes[v].type == NodeType::Group && rng.bernoulli(p)) edges.push_back({v, u, EdgeType::GroupUser, {}});
      if (nodes[v].type == NodeType::Item && rng.bernoulli(p)) edges.push_back({v, u, EdgeType::ItemUser, {}});
    }
  return build_graph(nodes, edges);
}

// D^-1/2 (A + I) D^-1/2 straight from the canonical edge list.
inline Dense dense_normalized_oracle(const HetGraph& g, EdgeType r) {
  const std::size_t n = g.num_nodes();
  Dense a = Dense::identity(n);
  for (const auto& e : g.edges())
    if (e.type == r) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(deg[i]) * std::sqrt(deg[j]);
  return a;
}

inline double brute_roc_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Average precision with ties broken by input order: for positive i, its rank
// is the number of items ordered before or at it.
inline double brute_average_precision(const std::vector<double>& s, const std::vector<int>& y) {
  double sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    ++positives;
    std::size_t rank = 0;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool before = s[j] > s[i] || (s[j] == s[i] && j <= i);
      if (!before) continue;
      ++rank;
      if (y[j] == 1) ++hits;
    }
    sum += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return sum / static_cast<double>(positives);
}

}  // namespace hgp::test

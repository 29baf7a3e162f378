#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

// Per-type node distributions for one relation: within type o, q(v) is
// proportional to the self-looped degree of v in that relation.
struct SamplingDistribution {
  EdgeType relation = EdgeType::GroupUser;
  std::array<std::vector<NodeId>, kNumNodeTypes> nodes;
  std::array<std::vector<double>, kNumNodeTypes> prob;
  std::array<double, kNumNodeTypes> type_share{};  // |V_o| / |V|
};

inline SamplingDistribution sampling_distribution(const HetGraph& g, EdgeType r) {
  SamplingDistribution d;
  d.relation = r;
  const Csr& a = g.adjacency(r);
  const double total = static_cast<double>(g.num_nodes());
  for (NodeType t : kNodeTypes) {
    const auto& nodes = g.nodes_of_type(t);
    auto& p = d.prob[index_of(t)];
    d.nodes[index_of(t)] = nodes;
    p.resize(nodes.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      p[i] = static_cast<double>(a.degree(nodes[i]) + 1);
      sum += p[i];
    }
    for (double& x : p) x /= sum;
    d.type_share[index_of(t)] = total > 0 ? static_cast<double>(nodes.size()) / total : 0.0;
  }
  return d;
}

// Splits `budget` across types proportionally to type cardinality (largest
// remainder, ties to the earlier type).
inline std::array<std::size_t, kNumNodeTypes> type_quotas(const HetGraph& g, std::size_t budget) {
  const std::size_t n = g.num_nodes();
  require(budget <= n, "sampling budget " + std::to_string(budget) + " exceeds node count " + std::to_string(n),
          "budget");
  std::array<std::size_t, kNumNodeTypes> quota{};
  std::array<double, kNumNodeTypes> rem{};
  std::size_t assigned = 0;
  for (NodeType t : kNodeTypes) {
    const std::size_t i = index_of(t);
    const std::size_t num = budget * g.count(t);
    quota[i] = n == 0 ? 0 : num / n;
    rem[i] = n == 0 ? 0.0 : static_cast<double>(num % n);
    assigned += quota[i];
  }
  std::array<std::size_t, kNumNodeTypes> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < budget; k = (k + 1) % kNumNodeTypes) {
    const std::size_t i = order[k];
    if (quota[i] < g.count(kNodeTypes[i])) {
      ++quota[i];
      ++assigned;
    }
  }
  return quota;
}

struct SamplingPlan {
  SamplingDistribution dist;
  std::vector<std::size_t> step_budget;                       // S per propagation step
  std::vector<std::array<std::size_t, kNumNodeTypes>> quota;  // per step, per type
  std::size_t num_nodes = 0;
};

inline SamplingPlan make_sampling_plan(const HetGraph& g, EdgeType r, std::size_t budget, std::size_t steps) {
  SamplingPlan plan;
  plan.dist = sampling_distribution(g, r);
  plan.num_nodes = g.num_nodes();
  plan.step_budget.assign(std::max<std::size_t>(steps, 1), budget);
  for (std::size_t s : plan.step_budget) plan.quota.push_back(type_quotas(g, s));
  return plan;
}

// One layer's sample. `weight[v]` is the inverse inclusion probability for
// sampled nodes and 0 elsewhere.
struct LayerSample {
  std::vector<NodeId> nodes;
  std::vector<double> weight;
  std::array<std::size_t, kNumNodeTypes> per_type{};
};

// Inclusion probabilities proportional to q within one type for a fixed
// sample size; nodes whose share would exceed 1 are taken with certainty.
inline std::vector<double> inclusion_probabilities(std::span<const double> q, std::size_t take) {
  const std::size_t n = q.size();
  require(take <= n, "quota " + std::to_string(take) + " exceeds type population " + std::to_string(n), "quota");
  std::vector<double> pi(n, 0.0);
  std::vector<bool> certain(n, false);
  std::size_t left = take;
  while (left > 0) {
    double total = 0.0;
    std::size_t open = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!certain[i]) {
        total += q[i];
        ++open;
      }
    if (open == left) {
      for (std::size_t i = 0; i < n; ++i) pi[i] = 1.0;
      break;
    }
    bool capped = false;
    for (std::size_t i = 0; i < n && left > 0; ++i) {
      if (certain[i]) continue;
      if (static_cast<double>(left) * q[i] / total >= 1.0) {
        certain[i] = true;
        pi[i] = 1.0;
        --left;
        capped = true;
      }
    }
    if (capped) continue;
    for (std::size_t i = 0; i < n; ++i)
      if (!certain[i]) pi[i] = static_cast<double>(left) * q[i] / total;
    break;
  }
  return pi;
}

// Draws a without-replacement sample per type, sized exactly to the type
// quota, with inclusion probability pi(v) proportional to degree (capped at
// 1). Selection is randomized systematic PPS, whose inclusion probabilities
// are exactly pi; weights 1/pi make the estimator unbiased.
inline LayerSample sample_layer(const SamplingPlan& plan, std::size_t step, Rng& rng) {
  require(step < plan.quota.size(), "sample_layer: step " + std::to_string(step) + " outside plan", "step");
  LayerSample s;
  s.weight.assign(plan.num_nodes, 0.0);
  for (NodeType t : kNodeTypes) {
    const std::size_t ti = index_of(t);
    const auto& nodes = plan.dist.nodes[ti];
    const std::size_t take = plan.quota[step][ti];
    const std::vector<double> pi = inclusion_probabilities(plan.dist.prob[ti], take);

    std::vector<std::size_t> rest;
    std::size_t certain = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (pi[i] >= 1.0) {
        s.weight[nodes[i]] = 1.0;
        ++certain;
      } else if (pi[i] > 0.0) {
        rest.push_back(i);
      }
    }
    const std::size_t draws = take - certain;
    if (draws > 0) {
      rng.shuffle(std::span<std::size_t>(rest));
      std::vector<double> cum(rest.size());
      double acc = 0.0;
      for (std::size_t k = 0; k < rest.size(); ++k) cum[k] = (acc += pi[rest[k]]);
      const double scale = static_cast<double>(draws) / acc;
      for (double& c : cum) c *= scale;
      cum.back() = static_cast<double>(draws);
      const double start = rng.uniform();
      std::size_t k = 0;
      for (std::size_t j = 0; j < draws; ++j) {
        const double point = start + static_cast<double>(j);
        while (cum[k] <= point) ++k;
        const std::size_t i = rest[k];
        s.weight[nodes[i]] = 1.0 / pi[i];
      }
    }
    s.per_type[ti] = take;
  }
  for (NodeId v = 0; v < plan.num_nodes; ++v)
    if (s.weight[v] != 0.0) s.nodes.push_back(v);
  return s;
}

// Estimate of adj * m that only reads the sampled source rows of m, each
// scaled by its importance weight. Every target row is produced.
inline Dense sampled_spmm(const NormAdj& adj, const Dense& m, const LayerSample& sample) {
  require(adj.n == m.rows(), "sampled_spmm: adjacency/matrix size mismatch");
  require(sample.weight.size() == adj.n, "sampled_spmm: weight vector length " + std::to_string(sample.weight.size()) +
                                             " vs " + std::to_string(adj.n) + " nodes",
          "weight");
  Dense out(adj.n, m.cols());
  for (std::size_t i = 0; i < adj.n; ++i) {
    auto o = out.row(i);
    for (std::size_t p = adj.row_ptr[i]; p < adj.row_ptr[i + 1]; ++p) {
      const double w = sample.weight[adj.col[p]];
      if (w == 0.0) continue;
      const double a = adj.val[p] * w;
      const auto src = m.row(adj.col[p]);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += a * src[c];
    }
  }
  return out;
}

// Adjoint of sampled_spmm: d(out)/d(m) applied to an upstream gradient.
inline Dense sampled_spmm_transpose(const NormAdj& adj, const Dense& grad_out, const LayerSample& sample) {
  require(adj.n == grad_out.rows() && sample.weight.size() == adj.n, "sampled_spmm_transpose: size mismatch");
  Dense out(adj.n, grad_out.cols());
  for (std::size_t j = 0; j < adj.n; ++j) {
    const double w = sample.weight[j];
    if (w == 0.0) continue;
    auto o = out.row(j);
    // adjacency is symmetric: column j equals row j
    for (std::size_t p = adj.row_ptr[j]; p < adj.row_ptr[j + 1]; ++p) {
      const double a = adj.val[p] * w;
      const auto g = grad_out.row(adj.col[p]);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += a * g[c];
    }
  }
  return out;
}

}  // namespace hgp

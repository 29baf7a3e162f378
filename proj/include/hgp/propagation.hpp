#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/sampler.hpp"

namespace hgp {

struct PropagationConfig {
  double alpha = 0.1;     // teleport probability
  std::size_t steps = 10; // K

  void validate() const {
    require(alpha > 0.0 && alpha <= 1.0, "teleport probability must lie in (0,1]", "alpha");
  }
};

// Z(k) = (1 - alpha) * A * Z(k-1) + alpha * H, iterated K times from Z(0) = H.
inline Dense appnp_propagate(const NormAdj& adj, const Dense& h, const PropagationConfig& cfg) {
  cfg.validate();
  require(adj.n == h.rows(), "appnp_propagate: adjacency/feature size mismatch");
  Dense z = h;
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    Dense next = spmm(adj, z);
    auto nv = next.values();
    auto hv = h.values();
    for (std::size_t i = 0; i < nv.size(); ++i) nv[i] = (1.0 - cfg.alpha) * nv[i] + cfg.alpha * hv[i];
    z = std::move(next);
  }
  return z;
}

// Limit of appnp_propagate as K -> infinity: solves (I - (1-alpha) A) Z = alpha H
// with dense Gaussian elimination (partial pivoting). Small instances only.
inline Dense fixed_point_solve(const NormAdj& adj, const Dense& h, double alpha, std::size_t max_nodes = 2000) {
  require(alpha > 0.0 && alpha <= 1.0, "teleport probability must lie in (0,1]", "alpha");
  require(adj.n <= max_nodes,
          "fixed_point_solve: " + std::to_string(adj.n) + " nodes exceeds guard " + std::to_string(max_nodes), "nodes");
  require(adj.n == h.rows(), "fixed_point_solve: adjacency/feature size mismatch");
  const std::size_t n = adj.n;
  const std::size_t m = h.cols();
  Dense a = Dense::identity(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t p = adj.row_ptr[u]; p < adj.row_ptr[u + 1]; ++p) a(u, adj.col[p]) -= (1.0 - alpha) * adj.val[p];
  Dense b = h;
  b *= alpha;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    require(a(piv, c) != 0.0, "fixed_point_solve: singular system");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(b(c, j), b(piv, j));
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      if (f == 0.0) continue;
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      for (std::size_t j = 0; j < m; ++j) b(r, j) -= f * b(c, j);
    }
  }
  Dense z(n, m);
  for (std::size_t r = n; r-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = b(r, j);
      for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * z(k, j);
      z(r, j) = s / a(r, r);
    }
  }
  return z;
}

// Z(k) = A * Z(k-1): no teleport, no weights. Converges to a degree-profile
// vector per connected component.
inline Dense plain_propagate(const NormAdj& adj, const Dense& h, std::size_t steps) {
  require(adj.n == h.rows(), "plain_propagate: adjacency/feature size mismatch");
  Dense z = h;
  for (std::size_t k = 0; k < steps; ++k) z = spmm(adj, z);
  return z;
}

struct CosineStats {
  double mean = 0.0;
  double min = 0.0;
  std::size_t rows_used = 0;
  std::size_t zero_rows = 0;
};

// Pairwise cosine similarity over the rows in `subset`; zero rows are skipped
// and counted.
inline CosineStats row_cosine_stats(const Dense& z, std::span<const NodeId> subset) {
  require(!subset.empty(), "row_cosine_stats: empty node subset", "subset");
  std::vector<NodeId> used;
  std::vector<double> norms;
  CosineStats s;
  for (NodeId v : subset) {
    require(v < z.rows(), "row_cosine_stats: node " + std::to_string(v) + " out of range", "subset");
    const double nrm = std::sqrt(dot(z.row(v), z.row(v)));
    if (nrm == 0.0) {
      ++s.zero_rows;
      continue;
    }
    used.push_back(v);
    norms.push_back(nrm);
  }
  s.rows_used = used.size();
  if (used.size() < 2) {
    s.mean = s.min = used.empty() ? 0.0 : 1.0;
    return s;
  }
  double sum = 0.0;
  double mn = 1.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < used.size(); ++a)
    for (std::size_t b = a + 1; b < used.size(); ++b) {
      const double c = dot(z.row(used[a]), z.row(used[b])) / (norms[a] * norms[b]);
      sum += c;
      mn = std::min(mn, c);
      ++pairs;
    }
  s.mean = sum / static_cast<double>(pairs);
  s.min = mn;
  return s;
}

// Learnable per-step propagation matrices W_H(0..K-1), each m x m. When tied,
// one matrix serves every step.
struct PropWeights {
  std::vector<Dense> w;
  bool tied = false;

  const Dense& at_step(std::size_t k) const { return tied ? w.front() : w[k]; }
  std::size_t index_for_step(std::size_t k) const { return tied ? 0 : k; }
};

// Per relation, per step: a node sample, or nothing for exact propagation.
using SampleSchedule = std::array<std::vector<LayerSample>, kNumEdgeTypes>;

struct PropagationState {
  std::array<Dense, kNumEdgeTypes> z;  // Z_r(K) in global edge-type order
};

// Everything the backward pass needs from a forward pass.
struct PropagationTrace {
  // per relation: Z(0..K), A Z(k), and the pre-activation A Z(k) W(k)
  std::array<std::vector<Dense>, kNumEdgeTypes> z;
  std::array<std::vector<Dense>, kNumEdgeTypes> az;
  std::array<std::vector<Dense>, kNumEdgeTypes> pre;

  double min_abs_preactivation() const {
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& per_r : pre)
      for (const auto& p : per_r)
        for (double x : p.values()) mn = std::min(mn, std::abs(x));
    return mn;
  }
};

namespace detail {

inline Dense adjacency_product(const NormAdj& adj, const Dense& m, const SampleSchedule* samples, std::size_t r,
                               std::size_t k) {
  if (samples == nullptr || (*samples)[r].empty()) return spmm(adj, m);
  const auto& per_step = (*samples)[r];
  return sampled_spmm(adj, m, per_step[std::min(k, per_step.size() - 1)]);
}

inline Dense adjacency_adjoint(const NormAdj& adj, const Dense& g, const SampleSchedule* samples, std::size_t r,
                               std::size_t k) {
  if (samples == nullptr || (*samples)[r].empty()) return spmm(adj, g);
  const auto& per_step = (*samples)[r];
  return sampled_spmm_transpose(adj, g, per_step[std::min(k, per_step.size() - 1)]);
}

inline void check_prop_inputs(std::span<const NormAdj> adjs, const Dense& h, const PropagationConfig& cfg,
                              const PropWeights& w) {
  cfg.validate();
  require(adjs.size() == kNumEdgeTypes, "hgp_propagate: expected one adjacency per edge type");
  for (const auto& a : adjs) require(a.n == h.rows(), "hgp_propagate: adjacency/feature size mismatch");
  const std::size_t need = cfg.steps == 0 ? 0 : (w.tied ? 1 : cfg.steps);
  require(w.w.size() >= need, "hgp_propagate: " + std::to_string(w.w.size()) + " propagation weights for " +
                                  std::to_string(cfg.steps) + " steps",
          "PropWeights");
  for (const auto& m : w.w)
    require(m.rows() == h.cols() && m.cols() == h.cols(), "hgp_propagate: W_H must be m x m", "PropWeights");
}

}  // namespace detail

// Z_r(k+1) = (1 - alpha) * ReLU(A_r Z_r(k) W(k)) + alpha * H, run independently
// for each relation with the same W(k). `trace` is filled when given.
inline PropagationState hgp_propagate(std::span<const NormAdj> adjs, const Dense& h, const PropagationConfig& cfg,
                                      const PropWeights& w, PropagationTrace* trace = nullptr,
                                      const SampleSchedule* samples = nullptr) {
  detail::check_prop_inputs(adjs, h, cfg, w);
  PropagationState state;
  for (std::size_t r = 0; r < kNumEdgeTypes; ++r) {
    Dense z = h;
    if (trace) {
      trace->z[r].assign(1, h);
      trace->az[r].clear();
      trace->pre[r].clear();
    }
    for (std::size_t k = 0; k < cfg.steps; ++k) {
      Dense az = detail::adjacency_product(adjs[r], z, samples, r, k);
      Dense pre = dense_matmul(az, w.at_step(k));
      Dense next(pre.rows(), pre.cols());
      auto nv = next.values();
      auto pv = pre.values();
      auto hv = h.values();
      for (std::size_t i = 0; i < nv.size(); ++i)
        nv[i] = (1.0 - cfg.alpha) * (pv[i] > 0.0 ? pv[i] : 0.0) + cfg.alpha * hv[i];
      if (trace) {
        trace->az[r].push_back(std::move(az));
        trace->pre[r].push_back(std::move(pre));
        trace->z[r].push_back(next);
      }
      z = std::move(next);
    }
    state.z[r] = std::move(z);
  }
  return state;
}

struct PropagationGrads {
  std::vector<Dense> w;  // same layout as PropWeights::w
  Dense h;
};

// Reverse pass of hgp_propagate given dL/dZ_r(K) per relation.
inline PropagationGrads hgp_propagate_backward(std::span<const NormAdj> adjs, const PropagationTrace& trace,
                                               const PropagationConfig& cfg, const PropWeights& w,
                                               const std::array<Dense, kNumEdgeTypes>& grad_z,
                                               const SampleSchedule* samples = nullptr) {
  PropagationGrads g;
  const std::size_t rows = trace.z[0].front().rows();
  const std::size_t m = trace.z[0].front().cols();
  g.h = Dense(rows, m);
  for (const auto& mat : w.w) g.w.emplace_back(mat.rows(), mat.cols());
  for (std::size_t r = 0; r < kNumEdgeTypes; ++r) {
    require(grad_z[r].rows() == rows && grad_z[r].cols() == m, "hgp_propagate_backward: gradient shape mismatch");
    Dense dz = grad_z[r];
    for (std::size_t k = cfg.steps; k-- > 0;) {
      // teleport branch
      for (std::size_t i = 0; i < dz.size(); ++i) g.h.values()[i] += cfg.alpha * dz.values()[i];
      Dense dpre = relu_backward(trace.pre[r][k], dz);
      dpre *= (1.0 - cfg.alpha);
      g.w[w.index_for_step(k)] += matmul_tn(trace.az[r][k], dpre);
      Dense daz = matmul_nt(dpre, w.at_step(k));
      dz = detail::adjacency_adjoint(adjs[r], daz, samples, r, k);
    }
    g.h += dz;  // Z(0) = H
  }
  return g;
}

}  // namespace hgp

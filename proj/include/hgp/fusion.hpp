#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/propagation.hpp"

namespace hgp {

// Single-head self-attention over the per-relation stack of one node, followed
// by a linear map of the concatenated attention outputs.
struct AttnParams {
  Dense w_q;     // m x d_k
  Dense w_k;     // m x d_k
  Dense w_v;     // m x d_v
  Dense fuse_w;  // (|R| * d_v) x z_dim
  Dense fuse_b;  // 1 x z_dim

  std::size_t key_dim() const { return w_q.cols(); }
  std::size_t value_dim() const { return w_v.cols(); }
  std::size_t out_dim() const { return fuse_w.cols(); }

  static AttnParams zeros_like(const AttnParams& p) {
    return {Dense(p.w_q.rows(), p.w_q.cols()), Dense(p.w_k.rows(), p.w_k.cols()), Dense(p.w_v.rows(), p.w_v.cols()),
            Dense(p.fuse_w.rows(), p.fuse_w.cols()), Dense(p.fuse_b.rows(), p.fuse_b.cols())};
  }
};

struct AttentionCache {
  Dense q, k, v;
  Dense weights;  // softmax(Q K^T / sqrt(d_k))
  Dense out;
};

// softmax(Q K^T / sqrt(d_k)) V
inline Dense attention(const Dense& q, const Dense& k, const Dense& v, AttentionCache* cache = nullptr) {
  if (q.cols() != k.cols()) throw Error("attention: query/key width mismatch " + shape_str(q) + " vs " + shape_str(k));
  if (k.rows() != v.rows()) throw Error("attention: key/value count mismatch " + shape_str(k) + " vs " + shape_str(v));
  Dense logits = matmul_nt(q, k);
  logits *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Dense weights = row_softmax(logits);
  Dense out = dense_matmul(weights, v);
  if (cache) *cache = {q, k, v, weights, out};
  return out;
}

struct AttentionGrads {
  Dense q, k, v;
};

inline AttentionGrads attention_backward(const AttentionCache& c, const Dense& grad_out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.q.cols()));
  AttentionGrads g;
  g.v = matmul_tn(c.weights, grad_out);
  Dense dweights = matmul_nt(grad_out, c.v);
  Dense dlogits = row_softmax_backward(c.weights, dweights);
  dlogits *= scale;
  g.q = dense_matmul(dlogits, c.k);
  g.k = matmul_tn(dlogits, c.q);
  return g;
}

struct FuseCache {
  Dense stack;  // Y_i, |R| x m
  AttentionCache attn;
  Dense concat;  // 1 x (|R| * d_v)
};

// Y_i: row r is node i's final representation under relation r.
inline Dense stack_node(const PropagationState& state, NodeId node) {
  const std::size_t m = state.z[0].cols();
  Dense y(kNumEdgeTypes, m);
  for (std::size_t r = 0; r < kNumEdgeTypes; ++r) {
    if (node >= state.z[r].rows()) throw Error("node index " + std::to_string(node) + " out of range", "node");
    const auto src = state.z[r].row(node);
    std::copy(src.begin(), src.end(), y.row(r).begin());
  }
  return y;
}

// z_i = concat(rows of Attention(Y W_Q, Y W_K, Y W_V)) * W_F + b_F, as a 1 x z_dim row.
inline Dense fuse_node(const Dense& stack, const AttnParams& p, FuseCache* cache = nullptr) {
  if (stack.cols() != p.w_q.rows())
    throw Error("fuse_node: stack width " + shape_str(stack) + " vs W_Q " + shape_str(p.w_q));
  if (p.fuse_w.rows() != stack.rows() * p.value_dim())
    throw Error("fuse_node: fusion layer expects " + std::to_string(p.fuse_w.rows()) + " inputs");
  AttentionCache ac;
  Dense out = attention(dense_matmul(stack, p.w_q), dense_matmul(stack, p.w_k), dense_matmul(stack, p.w_v), &ac);
  Dense concat(1, out.size(), std::vector<double>(out.values().begin(), out.values().end()));
  Dense z = dense_matmul(concat, p.fuse_w);
  add_row_bias(z, p.fuse_b);
  if (cache) *cache = {stack, std::move(ac), std::move(concat)};
  return z;
}

// Accumulates parameter gradients into `grads` and returns dL/dY_i.
inline Dense fuse_node_backward(const FuseCache& c, const AttnParams& p, const Dense& grad_z, AttnParams& grads) {
  grads.fuse_w += matmul_tn(c.concat, grad_z);
  grads.fuse_b += grad_z;
  Dense dconcat = matmul_nt(grad_z, p.fuse_w);
  Dense dout(c.attn.out.rows(), c.attn.out.cols(),
             std::vector<double>(dconcat.values().begin(), dconcat.values().end()));
  AttentionGrads ag = attention_backward(c.attn, dout);
  grads.w_q += matmul_tn(c.stack, ag.q);
  grads.w_k += matmul_tn(c.stack, ag.k);
  grads.w_v += matmul_tn(c.stack, ag.v);
  Dense dstack = matmul_nt(ag.q, p.w_q);
  dstack += matmul_nt(ag.k, p.w_k);
  dstack += matmul_nt(ag.v, p.w_v);
  return dstack;
}

// Batched fusion over many nodes. Row j * |R| + r of `stack` is node j's
// representation under relation r; `weights` holds each node's |R| x |R|
// attention matrix in the same row layout. Every row is computed in the same
// order as fuse_node, so the two agree bitwise.
struct FuseBatchCache {
  Dense stack, q, k, v;
  Dense weights;
  Dense concat;  // nodes x (|R| * d_v); the attention outputs, row-major
};

// Row j of the result is z for nodes[j].
inline Dense fuse_all(const PropagationState& state, const AttnParams& p, std::span<const NodeId> nodes,
                      FuseBatchCache* cache = nullptr) {
  const std::size_t R = kNumEdgeTypes;
  const std::size_t m = state.z[0].cols();
  if (m != p.w_q.rows())
    throw Error("fuse_all: representation width " + std::to_string(m) + " vs W_Q " + shape_str(p.w_q));
  if (p.fuse_w.rows() != R * p.value_dim())
    throw Error("fuse_all: fusion layer expects " + std::to_string(p.fuse_w.rows()) + " inputs");
  Dense stack(nodes.size() * R, m);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (nodes[j] >= state.z[0].rows())
      throw Error("fuse_all: node index " + std::to_string(nodes[j]) + " out of range", "node");
    for (std::size_t r = 0; r < R; ++r) {
      const auto src = state.z[r].row(nodes[j]);
      std::copy(src.begin(), src.end(), stack.row(j * R + r).begin());
    }
  }
  Dense q = dense_matmul(stack, p.w_q);
  Dense k = dense_matmul(stack, p.w_k);
  Dense v = dense_matmul(stack, p.w_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Dense logits(nodes.size() * R, R);
  for (std::size_t j = 0; j < nodes.size(); ++j)
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b) logits(j * R + a, b) = dot(q.row(j * R + a), k.row(j * R + b)) * scale;
  Dense weights = row_softmax(logits);
  const std::size_t dv = v.cols();
  Dense concat(nodes.size(), R * dv);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    auto out = concat.row(j);
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b) {
        const double w = weights(j * R + a, b);
        const auto vrow = v.row(j * R + b);
        for (std::size_t c = 0; c < dv; ++c) out[a * dv + c] += w * vrow[c];
      }
  }
  Dense z = dense_matmul(concat, p.fuse_w);
  add_row_bias(z, p.fuse_b);
  if (cache)
    *cache = {std::move(stack), std::move(q), std::move(k), std::move(v), std::move(weights), std::move(concat)};
  return z;
}

// Accumulates parameter gradients and returns dL/dstack in the cache's row layout.
inline Dense fuse_all_backward(const FuseBatchCache& c, const AttnParams& p, const Dense& grad_z, AttnParams& grads) {
  const std::size_t R = kNumEdgeTypes;
  const std::size_t n = c.concat.rows();
  const std::size_t dv = c.v.cols();
  const std::size_t dk = c.q.cols();
  if (grad_z.rows() != n || grad_z.cols() != p.out_dim())
    throw Error("fuse_all_backward: gradient shape " + shape_str(grad_z));
  grads.fuse_w += matmul_tn(c.concat, grad_z);
  grads.fuse_b += column_sums(grad_z);
  const Dense dconcat = matmul_nt(grad_z, p.fuse_w);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Dense dq(n * R, dk), dk_(n * R, dk), dv_(n * R, dv);
  std::vector<double> dw(R * R), dl(R * R);
  for (std::size_t j = 0; j < n; ++j) {
    const auto dout = dconcat.row(j);
    for (std::size_t a = 0; a < R; ++a) {
      double inner = 0.0;
      for (std::size_t b = 0; b < R; ++b) {
        dw[a * R + b] = dot(dout.subspan(a * dv, dv), c.v.row(j * R + b));
        inner += c.weights(j * R + a, b) * dw[a * R + b];
      }
      for (std::size_t b = 0; b < R; ++b) dl[a * R + b] = c.weights(j * R + a, b) * (dw[a * R + b] - inner) * scale;
    }
    for (std::size_t a = 0; a < R; ++a)
      for (std::size_t b = 0; b < R; ++b) {
        const double w = c.weights(j * R + a, b);
        const double l = dl[a * R + b];
        auto dvr = dv_.row(j * R + b);
        for (std::size_t x = 0; x < dv; ++x) dvr[x] += w * dout[a * dv + x];
        auto dqr = dq.row(j * R + a);
        auto dkr = dk_.row(j * R + b);
        const auto kr = c.k.row(j * R + b);
        const auto qr = c.q.row(j * R + a);
        for (std::size_t x = 0; x < dk; ++x) {
          dqr[x] += l * kr[x];
          dkr[x] += l * qr[x];
        }
      }
  }
  grads.w_q += matmul_tn(c.stack, dq);
  grads.w_k += matmul_tn(c.stack, dk_);
  grads.w_v += matmul_tn(c.stack, dv_);
  Dense dstack = matmul_nt(dq, p.w_q);
  dstack += matmul_nt(dk_, p.w_k);
  dstack += matmul_nt(dv_, p.w_v);
  return dstack;
}

}  // namespace hgp

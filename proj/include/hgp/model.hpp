#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgp/ctr.hpp"
#include "hgp/error.hpp"
#include "hgp/features.hpp"
#include "hgp/fusion.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/propagation.hpp"

namespace hgp {

struct ModelConfig {
  FeatureDims dims;
  std::size_t key_dim = 16;
  std::size_t value_dim = 8;
  std::size_t z_dim = 16;
  PropagationConfig prop;
  bool tie_prop_weights = false;
  // W_H^(k) starts at the identity (otherwise Xavier uniform). With H >= 0
  // the initial propagation is then exactly APPNP.
  bool prop_identity_init = true;

  std::string fingerprint() const {
    char alpha[32];
    const auto res = std::to_chars(alpha, alpha + sizeof alpha, prop.alpha);
    return "alpha=" + std::string(alpha, res.ptr) + ";K=" + std::to_string(prop.steps) +
           ";n=" + std::to_string(dims.n) + ";m=" + std::to_string(dims.m) + ";embed=" + std::to_string(dims.embed) +
           ";dk=" + std::to_string(key_dim) + ";dv=" + std::to_string(value_dim) + ";z=" + std::to_string(z_dim) +
           ";tied=" + (tie_prop_weights ? "1" : "0") + ";idinit=" + (prop_identity_init ? "1" : "0");
  }
};

struct ModelParams {
  EmbedParams embed;
  PropWeights prop;
  AttnParams attn;

  static ModelParams init(const AttributeSchema& schema, const ModelConfig& cfg, Rng& rng) {
    ModelParams p;
    p.embed = EmbedParams::init(schema, cfg.dims, rng);
    p.prop.tied = cfg.tie_prop_weights;
    const std::size_t count = cfg.prop.steps == 0 ? 0 : (cfg.tie_prop_weights ? 1 : cfg.prop.steps);
    for (std::size_t k = 0; k < count; ++k)
      p.prop.w.push_back(cfg.prop_identity_init ? Dense::identity(cfg.dims.m) : xavier_uniform(cfg.dims.m, cfg.dims.m, rng));
    p.attn.w_q = xavier_uniform(cfg.dims.m, cfg.key_dim, rng);
    p.attn.w_k = xavier_uniform(cfg.dims.m, cfg.key_dim, rng);
    p.attn.w_v = xavier_uniform(cfg.dims.m, cfg.value_dim, rng);
    p.attn.fuse_w = xavier_uniform(kNumEdgeTypes * cfg.value_dim, cfg.z_dim, rng);
    p.attn.fuse_b = Dense(1, cfg.z_dim);
    return p;
  }

  static ModelParams zeros_like(const ModelParams& o) {
    ModelParams p;
    p.embed = EmbedParams::zeros_like(o.embed);
    p.prop.tied = o.prop.tied;
    for (const auto& w : o.prop.w) p.prop.w.emplace_back(w.rows(), w.cols());
    p.attn = AttnParams::zeros_like(o.attn);
    return p;
  }

  // Visits every parameter in the fixed checkpoint order.
  template <typename Self, typename F>
  static void visit(Self& self, const AttributeSchema& schema, F&& fn) {
    for (NodeType t : kNodeTypes) {
      const std::size_t ti = index_of(t);
      const std::string type(to_string(t));
      for (std::size_t a = 0; a < self.embed.attr[ti].size(); ++a)
        fn("embed/" + type + "/" + schema.of(t)[a].name, self.embed.attr[ti][a]);
      fn("agg/" + type + "/W", self.embed.agg_w[ti]);
      fn("agg/" + type + "/b", self.embed.agg_b[ti]);
      fn("pred/" + type + "/W", self.embed.pred_w[ti]);
      fn("pred/" + type + "/b", self.embed.pred_b[ti]);
    }
    for (std::size_t k = 0; k < self.prop.w.size(); ++k) fn("prop/W_H/" + std::to_string(k), self.prop.w[k]);
    fn("attn/W_Q", self.attn.w_q);
    fn("attn/W_K", self.attn.w_k);
    fn("attn/W_V", self.attn.w_v);
    fn("fuse/W", self.attn.fuse_w);
    fn("fuse/b", self.attn.fuse_b);
  }

  template <typename F>
  void for_each(const AttributeSchema& schema, F&& fn) {
    visit(*this, schema, std::forward<F>(fn));
  }
  template <typename F>
  void for_each(const AttributeSchema& schema, F&& fn) const {
    visit(*this, schema, std::forward<F>(fn));
  }
};

// The graph-side inputs of a forward pass: the (training) graph, its node
// attributes and the per-relation normalized adjacencies.
struct GraphContext {
  const HetGraph* graph = nullptr;
  const AttributeTable* attributes = nullptr;
  const AttributeSchema* schema = nullptr;
  std::array<NormAdj, kNumEdgeTypes> adj;

  GraphContext(const HetGraph& g, const AttributeTable& attrs, const AttributeSchema& s)
      : graph(&g), attributes(&attrs), schema(&s) {
    validate_attributes(attrs, g, s);
    for (EdgeType r : kEdgeTypes) adj[index_of(r)] = normalized_adjacency(g, r);
  }
};

struct ForwardOutput {
  Dense x;
  Dense h;
  PropagationState state;
  std::vector<NodeId> nodes;  // distinct nodes referenced by the pairs, ascending
  Dense z;                    // fused representation per entry of `nodes`
  std::vector<double> probs;  // per pair
  double min_abs_preactivation = 0.0;
  std::uint64_t relu_pattern = 0;  // hash of the sign of every ReLU input
};

namespace detail {

inline void hash_signs(std::uint64_t& h, const Dense& pre) {
  for (double x : pre.values()) {
    h ^= (x > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL);
    h = Rng::splitmix(h);
  }
}

}  // namespace detail

namespace detail {

inline std::vector<NodeId> pair_nodes(std::span<const LabeledPair> pairs) {
  std::vector<NodeId> nodes;
  nodes.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    nodes.push_back(p.user);
    nodes.push_back(p.item);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return nodes;
}

inline std::size_t row_of(const std::vector<NodeId>& nodes, NodeId v) {
  return static_cast<std::size_t>(std::lower_bound(nodes.begin(), nodes.end(), v) - nodes.begin());
}

}  // namespace detail

// Full forward pass for a set of user-item pairs. When `grads` is non-null the
// mean BCE loss is back-propagated into it (accumulating). Returns the loss.
inline double forward_backward(const GraphContext& ctx, const ModelConfig& cfg, const ModelParams& params,
                               std::span<const LabeledPair> pairs, ModelParams* grads,
                               const SampleSchedule* samples = nullptr, ForwardOutput* out = nullptr) {
  require(!pairs.empty(), "forward: empty pair set");
  const HetGraph& g = *ctx.graph;
  for (const auto& p : pairs) {
    require(p.user < g.num_nodes() && g.type_of(p.user) == NodeType::User,
            "pair user " + std::to_string(p.user) + " is not a User node", "user");
    require(p.item < g.num_nodes() && g.type_of(p.item) == NodeType::Item,
            "pair item " + std::to_string(p.item) + " is not an Item node", "item");
  }
  EmbedCache ecache;
  PredictCache pcache;
  PropagationTrace trace;
  const bool need_trace = grads != nullptr || out != nullptr;
  Dense x = embed_attributes(*ctx.attributes, g, *ctx.schema, params.embed, &ecache);
  Dense h = predict_per_type(x, g, params.embed, &pcache);
  PropagationState state = hgp_propagate(ctx.adj, h, cfg.prop, params.prop, need_trace ? &trace : nullptr, samples);

  const std::vector<NodeId> nodes = detail::pair_nodes(pairs);
  FuseBatchCache fcache;
  Dense z = fuse_all(state, params.attn, nodes, grads ? &fcache : nullptr);

  std::vector<double> probs(pairs.size());
  std::vector<int> labels(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::size_t ru = detail::row_of(nodes, p.user);
    const std::size_t ri = detail::row_of(nodes, p.item);
    probs[i] = sigmoid(score_logit(z.row(ru), z.row(ri), x.row(p.user), x.row(p.item)));
    labels[i] = p.label;
  }
  const double loss = bce_loss(probs, labels);

  if (grads) {
    const std::vector<double> dlogit = bce_logit_grad(probs, labels);
    Dense dz(z.rows(), z.cols());
    Dense dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      const std::size_t ru = detail::row_of(nodes, p.user);
      const std::size_t ri = detail::row_of(nodes, p.item);
      const double d = dlogit[i];
      for (std::size_t c = 0; c < z.cols(); ++c) {
        dz(ru, c) += d * z(ri, c);
        dz(ri, c) += d * z(ru, c);
      }
      for (std::size_t c = 0; c < x.cols(); ++c) {
        dx(p.user, c) += d * x(p.item, c);
        dx(p.item, c) += d * x(p.user, c);
      }
    }
    std::array<Dense, kNumEdgeTypes> dstate;
    for (auto& d : dstate) d = Dense(h.rows(), h.cols());
    const Dense dstack = fuse_all_backward(fcache, params.attn, dz, grads->attn);
    for (std::size_t j = 0; j < nodes.size(); ++j)
      for (std::size_t r = 0; r < kNumEdgeTypes; ++r) {
        const auto src = dstack.row(j * kNumEdgeTypes + r);
        std::copy(src.begin(), src.end(), dstate[r].row(nodes[j]).begin());
      }
    PropagationGrads pg = hgp_propagate_backward(ctx.adj, trace, cfg.prop, params.prop, dstate, samples);
    for (std::size_t k = 0; k < pg.w.size(); ++k) grads->prop.w[k] += pg.w[k];
    dx += predict_per_type_backward(x, g, params.embed, pcache, pg.h, grads->embed);
    embed_attributes_backward(*ctx.attributes, g, *ctx.schema, params.embed, ecache, dx, grads->embed);
  }

  if (out) {
    out->min_abs_preactivation = std::min(trace.min_abs_preactivation(), [&] {
      double mn = std::numeric_limits<double>::infinity();
      for (double v : pcache.pre.values()) mn = std::min(mn, std::abs(v));
      return mn;
    }());
    std::uint64_t pattern = 0;
    detail::hash_signs(pattern, pcache.pre);
    for (const auto& per_r : trace.pre)
      for (const auto& p : per_r) detail::hash_signs(pattern, p);
    out->relu_pattern = pattern;
    out->x = std::move(x);
    out->h = std::move(h);
    out->state = std::move(state);
    out->nodes = nodes;
    out->z = std::move(z);
    out->probs = std::move(probs);
  }
  return loss;
}

// Click probabilities for `pairs` (labels ignored), without gradients.
inline std::vector<double> predict_pairs(const GraphContext& ctx, const ModelConfig& cfg, const ModelParams& params,
                                         std::span<const LabeledPair> pairs) {
  const HetGraph& g = *ctx.graph;
  Dense x = embed_attributes(*ctx.attributes, g, *ctx.schema, params.embed);
  Dense h = predict_per_type(x, g, params.embed);
  PropagationState state = hgp_propagate(ctx.adj, h, cfg.prop, params.prop);
  const std::vector<NodeId> nodes = detail::pair_nodes(pairs);
  Dense z = fuse_all(state, params.attn, nodes);
  std::vector<double> probs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    probs[i] = sigmoid(score_logit(z.row(detail::row_of(nodes, p.user)), z.row(detail::row_of(nodes, p.item)),
                                   x.row(p.user), x.row(p.item)));
  }
  return probs;
}

}  // namespace hgp

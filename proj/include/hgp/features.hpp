#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

enum class AttributeKind { Categorical, Numeric };

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::Categorical;
  std::size_t size = 1;  // vocabulary size or vector dimension

  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

struct AttributeSchema {
  std::array<std::vector<AttributeSpec>, kNumNodeTypes> per_type;

  const std::vector<AttributeSpec>& of(NodeType t) const { return per_type[index_of(t)]; }

  void validate() const {
    for (NodeType t : kNodeTypes)
      for (const auto& a : of(t))
        require(a.size >= 1, "attribute " + a.name + " of " + std::string(to_string(t)) + " must have size >= 1",
                a.name);
  }

  friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;
};

// Category id or numeric vector, in schema order for the node's type.
using AttributeValue = std::variant<std::int64_t, std::vector<double>>;
using AttributeTable = std::vector<std::vector<AttributeValue>>;  // indexed by global node id

struct FeatureDims {
  std::size_t embed = 8;   // width of each embedded attribute
  std::size_t n = 16;      // columns of X
  std::size_t m = 16;      // columns of H
};

// Per type: one embedding table / linear map per attribute, the aggregation
// layer (concat -> n) and the predictor (n -> m, ReLU).
struct EmbedParams {
  std::array<std::vector<Dense>, kNumNodeTypes> attr;
  std::array<Dense, kNumNodeTypes> agg_w;
  std::array<Dense, kNumNodeTypes> agg_b;
  std::array<Dense, kNumNodeTypes> pred_w;
  std::array<Dense, kNumNodeTypes> pred_b;

  static EmbedParams init(const AttributeSchema& schema, const FeatureDims& dims, Rng& rng) {
    schema.validate();
    EmbedParams p;
    for (NodeType t : kNodeTypes) {
      const std::size_t ti = index_of(t);
      for (const auto& a : schema.of(t)) p.attr[ti].push_back(xavier_uniform(a.size, dims.embed, rng));
      const std::size_t width = schema.of(t).size() * dims.embed;
      p.agg_w[ti] = xavier_uniform(width, dims.n, rng);
      p.agg_b[ti] = Dense(1, dims.n);
      p.pred_w[ti] = xavier_uniform(dims.n, dims.m, rng);
      p.pred_b[ti] = Dense(1, dims.m);
    }
    return p;
  }

  static EmbedParams zeros_like(const EmbedParams& o) {
    EmbedParams p;
    auto z = [](const Dense& d) { return Dense(d.rows(), d.cols()); };
    for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
      for (const auto& d : o.attr[t]) p.attr[t].push_back(z(d));
      p.agg_w[t] = z(o.agg_w[t]);
      p.agg_b[t] = z(o.agg_b[t]);
      p.pred_w[t] = z(o.pred_w[t]);
      p.pred_b[t] = z(o.pred_b[t]);
    }
    return p;
  }
};

inline void validate_attributes(const AttributeTable& raw, const HetGraph& g, const AttributeSchema& schema) {
  require(raw.size() == g.num_nodes(), "attribute table has " + std::to_string(raw.size()) + " rows for " +
                                           std::to_string(g.num_nodes()) + " nodes");
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto& specs = schema.of(g.type_of(v));
    const auto& vals = raw[v];
    const std::string node = "node " + std::to_string(v);
    require(vals.size() == specs.size(), node + ": expected " + std::to_string(specs.size()) + " attributes, got " +
                                             std::to_string(vals.size()),
            node);
    for (std::size_t a = 0; a < specs.size(); ++a) {
      const std::string field = node + " attribute " + specs[a].name;
      if (specs[a].kind == AttributeKind::Categorical) {
        const auto* id = std::get_if<std::int64_t>(&vals[a]);
        require(id != nullptr, field + ": missing category id", field);
        require(*id >= 0 && static_cast<std::size_t>(*id) < specs[a].size,
                field + ": unknown category id " + std::to_string(*id), field);
      } else {
        const auto* vec = std::get_if<std::vector<double>>(&vals[a]);
        require(vec != nullptr, field + ": missing numeric vector", field);
        require(vec->size() == specs[a].size, field + ": expected dimension " + std::to_string(specs[a].size), field);
      }
    }
  }
}

// Per type, the node list and the concatenated embedded attributes.
struct EmbedCache {
  std::array<Dense, kNumNodeTypes> concat;
};

// X[i] = concat(embedded attributes of i) * agg_W(type i) + agg_b(type i).
inline Dense embed_attributes(const AttributeTable& raw, const HetGraph& g, const AttributeSchema& schema,
                              const EmbedParams& p, EmbedCache* cache = nullptr) {
  validate_attributes(raw, g, schema);
  const std::size_t n_cols = p.agg_w[0].cols();
  Dense x(g.num_nodes(), n_cols);
  for (NodeType t : kNodeTypes) {
    const std::size_t ti = index_of(t);
    const auto& nodes = g.nodes_of_type(t);
    const auto& specs = schema.of(t);
    const std::size_t width = p.agg_w[ti].rows();
    Dense concat(nodes.size(), width);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      auto out = concat.row(j);
      std::size_t offset = 0;
      for (std::size_t a = 0; a < specs.size(); ++a) {
        const Dense& table = p.attr[ti][a];
        if (specs[a].kind == AttributeKind::Categorical) {
          const auto row = table.row(static_cast<std::size_t>(std::get<std::int64_t>(raw[nodes[j]][a])));
          std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
        } else {
          const auto& vec = std::get<std::vector<double>>(raw[nodes[j]][a]);
          for (std::size_t d = 0; d < vec.size(); ++d)
            for (std::size_t c = 0; c < table.cols(); ++c) out[offset + c] += vec[d] * table(d, c);
        }
        offset += table.cols();
      }
    }
    Dense xt = dense_matmul(concat, p.agg_w[ti]);
    add_row_bias(xt, p.agg_b[ti]);
    for (std::size_t j = 0; j < nodes.size(); ++j) std::copy(xt.row(j).begin(), xt.row(j).end(), x.row(nodes[j]).begin());
    if (cache) cache->concat[ti] = std::move(concat);
  }
  return x;
}

inline void embed_attributes_backward(const AttributeTable& raw, const HetGraph& g, const AttributeSchema& schema,
                                      const EmbedParams& p, const EmbedCache& cache, const Dense& grad_x,
                                      EmbedParams& grads) {
  for (NodeType t : kNodeTypes) {
    const std::size_t ti = index_of(t);
    const auto& nodes = g.nodes_of_type(t);
    const auto& specs = schema.of(t);
    Dense gx(nodes.size(), grad_x.cols());
    for (std::size_t j = 0; j < nodes.size(); ++j)
      std::copy(grad_x.row(nodes[j]).begin(), grad_x.row(nodes[j]).end(), gx.row(j).begin());
    grads.agg_w[ti] += matmul_tn(cache.concat[ti], gx);
    grads.agg_b[ti] += column_sums(gx);
    const Dense gconcat = matmul_nt(gx, p.agg_w[ti]);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const auto grow = gconcat.row(j);
      std::size_t offset = 0;
      for (std::size_t a = 0; a < specs.size(); ++a) {
        Dense& gt = grads.attr[ti][a];
        if (specs[a].kind == AttributeKind::Categorical) {
          auto row = gt.row(static_cast<std::size_t>(std::get<std::int64_t>(raw[nodes[j]][a])));
          for (std::size_t c = 0; c < row.size(); ++c) row[c] += grow[offset + c];
        } else {
          const auto& vec = std::get<std::vector<double>>(raw[nodes[j]][a]);
          for (std::size_t d = 0; d < vec.size(); ++d)
            for (std::size_t c = 0; c < gt.cols(); ++c) gt(d, c) += vec[d] * grow[offset + c];
        }
        offset += gt.cols();
      }
    }
  }
}

struct PredictCache {
  Dense pre;  // X W + b before ReLU, global node order
};

// H[i] = ReLU(X[i] W(type i) + b(type i)), kept in global node order.
inline Dense predict_per_type(const Dense& x, const HetGraph& g, const EmbedParams& p, PredictCache* cache = nullptr) {
  require(x.rows() == g.num_nodes(), "predict_per_type: X has " + std::to_string(x.rows()) + " rows for " +
                                         std::to_string(g.num_nodes()) + " nodes");
  const std::size_t m = p.pred_w[0].cols();
  Dense pre(x.rows(), m);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const std::size_t ti = index_of(g.type_of(v));
    const Dense& w = p.pred_w[ti];
    require(w.rows() == x.cols(), "predict_per_type: predictor expects " + std::to_string(w.rows()) + " inputs");
    auto out = pre.row(v);
    const auto in = x.row(v);
    for (std::size_t c = 0; c < m; ++c) out[c] = p.pred_b[ti](0, c);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const auto wrow = w.row(k);
      for (std::size_t c = 0; c < m; ++c) out[c] += in[k] * wrow[c];
    }
  }
  Dense h = relu(pre);
  if (cache) cache->pre = std::move(pre);
  return h;
}

// Accumulates predictor gradients and returns dL/dX.
inline Dense predict_per_type_backward(const Dense& x, const HetGraph& g, const EmbedParams& p,
                                       const PredictCache& cache, const Dense& grad_h, EmbedParams& grads) {
  const Dense dpre = relu_backward(cache.pre, grad_h);
  Dense dx(x.rows(), x.cols());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const std::size_t ti = index_of(g.type_of(v));
    const auto d = dpre.row(v);
    const auto in = x.row(v);
    Dense& gw = grads.pred_w[ti];
    const Dense& w = p.pred_w[ti];
    for (std::size_t c = 0; c < d.size(); ++c) grads.pred_b[ti](0, c) += d[c];
    auto dxr = dx.row(v);
    for (std::size_t k = 0; k < in.size(); ++k) {
      auto gwr = gw.row(k);
      const auto wr = w.row(k);
      double s = 0.0;
      for (std::size_t c = 0; c < d.size(); ++c) {
        gwr[c] += in[k] * d[c];
        s += wr[c] * d[c];
      }
      dxr[k] = s;
    }
  }
  return dx;
}

}  // namespace hgp

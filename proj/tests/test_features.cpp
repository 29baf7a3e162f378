#include <gtest/gtest.h>

#include "hgp/features.hpp"
#include "support.hpp"

using namespace hgp;

namespace {

// 5 nodes: group 0, users 1-2, items 3-4. Each type has one categorical
// attribute; users and items also carry a 4-dim numeric vector.
struct Fixture {
  AttributeSchema schema;
  HetGraph graph;
  AttributeTable attrs;

  Fixture() {
    schema.per_type[index_of(NodeType::Group)] = {{"topic", AttributeKind::Categorical, 3}};
    schema.per_type[index_of(NodeType::User)] = {{"demo", AttributeKind::Categorical, 3},
                                                 {"profile", AttributeKind::Numeric, 4}};
    schema.per_type[index_of(NodeType::Item)] = {{"cat", AttributeKind::Categorical, 3},
                                                 {"content", AttributeKind::Numeric, 4}};
    const std::vector<NodeSpec> nodes{{0, NodeType::Group}, {1, NodeType::User}, {2, NodeType::User},
                                      {3, NodeType::Item},  {4, NodeType::Item}};
    const std::vector<EdgeSpec> edges{{0, 1, EdgeType::GroupUser, {}}, {3, 2, EdgeType::ItemUser, {}}};
    graph = build_graph(nodes, edges);
    attrs = {{std::int64_t{2}},
             {std::int64_t{0}, std::vector<double>{0.5, -1.0, 0.25, 2.0}},
             {std::int64_t{1}, std::vector<double>{-0.3, 0.7, 1.1, 0.0}},
             {std::int64_t{2}, std::vector<double>{1.0, 1.0, -1.0, 0.5}},
             {std::int64_t{0}, std::vector<double>{0.0, -0.2, 0.4, 0.9}}};
  }
};

EmbedParams random_params(const AttributeSchema& s, const FeatureDims& dims, Rng& rng) {
  EmbedParams p = EmbedParams::init(s, dims, rng);
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    for (double& x : p.agg_b[t].values()) x = rng.uniform(-0.3, 0.3);
    for (double& x : p.pred_b[t].values()) x = rng.uniform(-0.3, 0.3);
  }
  return p;
}

}  // namespace

TEST(EmbedAttributes, CategoricalLookup) {
  AttributeSchema s;
  for (NodeType t : kNodeTypes) s.per_type[index_of(t)] = {{"c", AttributeKind::Categorical, 4}};
  const std::vector<NodeSpec> nodes{{0, NodeType::Group}, {1, NodeType::User}, {2, NodeType::Item}};
  const HetGraph g = build_graph(nodes, std::span<const EdgeSpec>{});
  const AttributeTable raw{{std::int64_t{3}}, {std::int64_t{0}}, {std::int64_t{2}}};
  const FeatureDims dims{4, 4, 4};
  Rng rng(1);
  EmbedParams p = EmbedParams::init(s, dims, rng);
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    p.attr[t][0] = test::random_dense(4, 4, rng);
    p.agg_w[t] = Dense::identity(4);
  }
  const Dense x = embed_attributes(raw, g, s, p);
  for (NodeId v = 0; v < 3; ++v) {
    const auto id = static_cast<std::size_t>(std::get<std::int64_t>(raw[v][0]));
    const auto want = p.attr[index_of(g.type_of(v))][0].row(id);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(x(v, c), want[c]);
  }
}

TEST(EmbedAttributes, ZeroAggregationGivesBiasRows) {
  Fixture f;
  Rng rng(2);
  EmbedParams p = random_params(f.schema, {3, 5, 5}, rng);
  for (auto& w : p.agg_w) w.fill(0.0);
  const Dense x = embed_attributes(f.attrs, f.graph, f.schema, p);
  for (NodeId v = 0; v < 5; ++v)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(x(v, c), p.agg_b[index_of(f.graph.type_of(v))](0, c));
}

TEST(EmbedAttributes, MatchesHandOracle) {
  Fixture f;
  Rng rng(3);
  const FeatureDims dims{3, 5, 4};
  const EmbedParams p = random_params(f.schema, dims, rng);
  const Dense x = embed_attributes(f.attrs, f.graph, f.schema, p);
  for (NodeId v = 0; v < 5; ++v) {
    const std::size_t t = index_of(f.graph.type_of(v));
    std::vector<double> concat;
    for (std::size_t a = 0; a < f.schema.per_type[t].size(); ++a) {
      const Dense& table = p.attr[t][a];
      if (f.schema.per_type[t][a].kind == AttributeKind::Categorical) {
        const auto id = static_cast<std::size_t>(std::get<std::int64_t>(f.attrs[v][a]));
        for (std::size_t c = 0; c < dims.embed; ++c) concat.push_back(table(id, c));
      } else {
        const auto& vec = std::get<std::vector<double>>(f.attrs[v][a]);
        for (std::size_t c = 0; c < dims.embed; ++c) {
          double s = 0.0;
          for (std::size_t d = 0; d < vec.size(); ++d) s += vec[d] * table(d, c);
          concat.push_back(s);
        }
      }
    }
    for (std::size_t c = 0; c < dims.n; ++c) {
      double s = p.agg_b[t](0, c);
      for (std::size_t k = 0; k < concat.size(); ++k) s += concat[k] * p.agg_w[t](k, c);
      EXPECT_NEAR(x(v, c), s, 1e-12);
    }
  }
}

TEST(EmbedAttributes, UnknownCategoryNamesNodeAndAttribute) {
  Fixture f;
  f.attrs[2][0] = std::int64_t{7};
  Rng rng(4);
  const EmbedParams p = EmbedParams::init(f.schema, {}, rng);
  try {
    embed_attributes(f.attrs, f.graph, f.schema, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "node 2 attribute demo");
  }
}

TEST(EmbedAttributes, MissingAttributeRejected) {
  Fixture f;
  f.attrs[3].pop_back();
  Rng rng(4);
  const EmbedParams p = EmbedParams::init(f.schema, {}, rng);
  EXPECT_THROW(embed_attributes(f.attrs, f.graph, f.schema, p), Error);
}

TEST(PredictPerType, IdentityOnNonnegative) {
  Fixture f;
  Rng rng(5);
  EmbedParams p = EmbedParams::init(f.schema, {3, 4, 4}, rng);
  for (auto& w : p.pred_w) w = Dense::identity(4);
  const Dense x = test::random_dense(5, 4, rng, 0.0, 2.0);
  EXPECT_EQ(predict_per_type(x, f.graph, p), x);
}

TEST(PredictPerType, NegativeRowFloorsToZero) {
  Fixture f;
  Rng rng(6);
  EmbedParams p = EmbedParams::init(f.schema, {3, 4, 4}, rng);
  for (auto& w : p.pred_w) w = Dense::identity(4);
  Dense x = test::random_dense(5, 4, rng, 0.1, 1.0);
  for (double& v : x.row(2)) v = -v;
  const Dense h = predict_per_type(x, f.graph, p);
  for (double v : h.row(2)) EXPECT_EQ(v, 0.0);
}

TEST(PredictPerType, MixedTypesMatchSingleTypeOracle) {
  Fixture f;
  Rng rng(7);
  const EmbedParams p = random_params(f.schema, {3, 5, 4}, rng);
  const Dense x = test::random_dense(5, 5, rng);
  const Dense h = predict_per_type(x, f.graph, p);
  for (NodeId v = 0; v < 5; ++v) {
    const std::size_t t = index_of(f.graph.type_of(v));
    Dense xi(1, 5);
    std::copy(x.row(v).begin(), x.row(v).end(), xi.row(0).begin());
    Dense want = test::naive_matmul(xi, p.pred_w[t]);
    for (std::size_t c = 0; c < 4; ++c) want(0, c) = std::max(0.0, want(0, c) + p.pred_b[t](0, c));
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(h(v, c), want(0, c), 1e-12);
  }
}

TEST(Features, LocalityOfAttributeChange) {
  Fixture f;
  Rng rng(8);
  const EmbedParams p = random_params(f.schema, {3, 5, 4}, rng);
  const Dense x0 = embed_attributes(f.attrs, f.graph, f.schema, p);
  const Dense h0 = predict_per_type(x0, f.graph, p);
  f.attrs[3][0] = std::int64_t{1};
  std::get<std::vector<double>>(f.attrs[3][1])[0] = -4.0;
  const Dense x1 = embed_attributes(f.attrs, f.graph, f.schema, p);
  const Dense h1 = predict_per_type(x1, f.graph, p);
  for (NodeId v = 0; v < 5; ++v) {
    if (v == 3) continue;
    for (std::size_t c = 0; c < x0.cols(); ++c) EXPECT_EQ(x0(v, c), x1(v, c));
    for (std::size_t c = 0; c < h0.cols(); ++c) EXPECT_EQ(h0(v, c), h1(v, c));
  }
  EXPECT_NE(max_abs_diff(x0, x1), 0.0);
}

TEST(Features, PredictorIsolation) {
  Fixture f;
  Rng rng(9);
  EmbedParams p = random_params(f.schema, {3, 5, 4}, rng);
  const Dense x = embed_attributes(f.attrs, f.graph, f.schema, p);
  const Dense h0 = predict_per_type(x, f.graph, p);
  for (double& w : p.pred_w[index_of(NodeType::Group)].values()) w += 0.5;
  for (double& w : p.pred_b[index_of(NodeType::Group)].values()) w += 0.5;
  const Dense h1 = predict_per_type(x, f.graph, p);
  for (NodeId v = 1; v < 5; ++v)
    for (std::size_t c = 0; c < h0.cols(); ++c) EXPECT_EQ(h0(v, c), h1(v, c));
}

TEST(Features, GradientsMatchFiniteDifferences) {
  Fixture f;
  Rng rng(10);
  const FeatureDims dims{3, 5, 4};
  EmbedParams p = random_params(f.schema, dims, rng);
  const Dense up = test::random_dense(5, 4, rng);
  auto loss = [&] {
    const Dense h = predict_per_type(embed_attributes(f.attrs, f.graph, f.schema, p), f.graph, p);
    double l = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) l += h.values()[i] * up.values()[i];
    return l;
  };
  EmbedCache ec;
  PredictCache pc;
  const Dense x = embed_attributes(f.attrs, f.graph, f.schema, p, &ec);
  predict_per_type(x, f.graph, p, &pc);
  double min_pre = 1e9;
  for (double v : pc.pre.values()) min_pre = std::min(min_pre, std::abs(v));
  ASSERT_GT(min_pre, 1e-4);  // well away from any ReLU kink at h = 1e-5

  EmbedParams g = EmbedParams::zeros_like(p);
  const Dense dx = predict_per_type_backward(x, f.graph, p, pc, up, g);
  embed_attributes_backward(f.attrs, f.graph, f.schema, p, ec, dx, g);

  std::vector<CheckedParam> ps;
  for (std::size_t t = 0; t < kNumNodeTypes; ++t) {
    for (std::size_t a = 0; a < p.attr[t].size(); ++a)
      ps.push_back({"attr" + std::to_string(t) + "_" + std::to_string(a), &p.attr[t][a], &g.attr[t][a]});
    ps.push_back({"agg_w", &p.agg_w[t], &g.agg_w[t]});
    ps.push_back({"agg_b", &p.agg_b[t], &g.agg_b[t]});
    ps.push_back({"pred_w", &p.pred_w[t], &g.pred_w[t]});
    ps.push_back({"pred_b", &p.pred_b[t], &g.pred_b[t]});
  }
  const auto rep = finite_diff_check(loss, ps, 1e-5, 1e-4);
  EXPECT_TRUE(rep.passed()) << rep.worst;
  for (double e : rep.max_entry_error) EXPECT_LE(e, 1e-4);
}

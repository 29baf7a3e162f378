#include <gtest/gtest.h>

#include <cmath>

#include "hgp/sampler.hpp"
#include "support.hpp"

using namespace hgp;

namespace {

struct McResult {
  double max_error = 0.0;
  double max_se = 0.0;
};

// Mean and standard error of `draws` sampled products against the exact one.
McResult monte_carlo(const HetGraph& g, EdgeType r, std::size_t budget, const Dense& m, int draws, std::uint64_t seed) {
  const NormAdj adj = normalized_adjacency(g, r);
  const SamplingPlan plan = make_sampling_plan(g, r, budget, 1);
  const Dense exact = spmm(adj, m);
  Dense sum(exact.rows(), exact.cols()), sum2(exact.rows(), exact.cols());
  Rng rng(seed);
  for (int d = 0; d < draws; ++d) {
    const Dense est = sampled_spmm(adj, m, sample_layer(plan, 0, rng));
    for (std::size_t i = 0; i < est.size(); ++i) {
      sum.values()[i] += est.values()[i];
      sum2.values()[i] += est.values()[i] * est.values()[i];
    }
  }
  McResult out;
  const double n = draws;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double mean = sum.values()[i] / n;
    const double var = std::max(0.0, sum2.values()[i] / n - mean * mean) * n / (n - 1);
    out.max_error = std::max(out.max_error, std::abs(mean - exact.values()[i]));
    out.max_se = std::max(out.max_se, std::sqrt(var / n));
  }
  return out;
}

}  // namespace

TEST(SamplingDistribution, DegreeProportional) {
  // users 0,1; items 2,3,4. user 0 has no item edge (d~=1), user 1 has 2 (d~=3)
  const std::vector<NodeSpec> nodes{
      {0, NodeType::User}, {1, NodeType::User}, {2, NodeType::Item}, {3, NodeType::Item}, {4, NodeType::Item}};
  const std::vector<EdgeSpec> edges{{2, 1, EdgeType::ItemUser, {}}, {3, 1, EdgeType::ItemUser, {}}};
  const auto d = sampling_distribution(build_graph(nodes, edges), EdgeType::ItemUser);
  const auto& pu = d.prob[index_of(NodeType::User)];
  ASSERT_EQ(pu.size(), 2u);
  EXPECT_DOUBLE_EQ(pu[0], 0.25);
  EXPECT_DOUBLE_EQ(pu[1], 0.75);
  const auto& pi = d.prob[index_of(NodeType::Item)];
  EXPECT_DOUBLE_EQ(pi[0], 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(pi[2], 1.0 / 5.0);  // isolated item keeps self-loop degree 1
}

TEST(SamplingDistribution, UniformDegreesAndTypeSums) {
  Rng rng(1);
  const HetGraph g = test::random_graph(60, 0.2, rng);
  for (EdgeType r : kEdgeTypes) {
    const auto d = sampling_distribution(g, r);
    for (NodeType t : kNodeTypes) {
      double s = 0.0;
      for (double p : d.prob[index_of(t)]) {
        EXPECT_GT(p, 0.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    // Groups have degree 0 in ItemUser: uniform
    if (r == EdgeType::ItemUser) {
      for (double p : d.prob[index_of(NodeType::Group)])
        EXPECT_DOUBLE_EQ(p, 1.0 / static_cast<double>(g.count(NodeType::Group)));
    }
  }
}

TEST(TypeQuotas, ProportionalToCardinality) {
  std::vector<NodeSpec> nodes;
  NodeId v = 0;
  for (int i = 0; i < 10; ++i) nodes.push_back({v++, NodeType::Group});
  for (int i = 0; i < 20; ++i) nodes.push_back({v++, NodeType::User});
  for (int i = 0; i < 30; ++i) nodes.push_back({v++, NodeType::Item});
  const HetGraph g = build_graph(nodes, std::span<const EdgeSpec>{});
  const auto q = type_quotas(g, 30);
  EXPECT_EQ(q[index_of(NodeType::Group)], 5u);
  EXPECT_EQ(q[index_of(NodeType::User)], 10u);
  EXPECT_EQ(q[index_of(NodeType::Item)], 15u);
  const auto q2 = type_quotas(g, 31);
  EXPECT_EQ(q2[0] + q2[1] + q2[2], 31u);
  EXPECT_THROW(type_quotas(g, 61), Error);
}

TEST(SampleLayer, ExhaustiveBudgetIsExactBitwise) {
  Rng rng(2);
  const HetGraph g = test::random_graph(80, 0.1, rng);
  const Dense m = test::random_dense(80, 5, rng);
  for (EdgeType r : kEdgeTypes) {
    const NormAdj adj = normalized_adjacency(g, r);
    const SamplingPlan plan = make_sampling_plan(g, r, 80, 2);
    const LayerSample s = sample_layer(plan, 1, rng);
    EXPECT_EQ(s.nodes.size(), 80u);
    for (double w : s.weight) EXPECT_EQ(w, 1.0);
    EXPECT_EQ(sampled_spmm(adj, m, s), spmm(adj, m));
    EXPECT_EQ(sampled_spmm_transpose(adj, m, s), spmm(adj, m));
  }
}

TEST(SampleLayer, DeterministicPerSeed) {
  Rng rng(3);
  const HetGraph g = test::random_graph(50, 0.2, rng);
  const SamplingPlan plan = make_sampling_plan(g, EdgeType::GroupUser, 17, 1);
  Rng a(9), b(9);
  const auto sa = sample_layer(plan, 0, a);
  const auto sb = sample_layer(plan, 0, b);
  EXPECT_EQ(sa.nodes, sb.nodes);
  EXPECT_EQ(sa.weight, sb.weight);
}

TEST(SampleLayer, QuotasRealizedExactly) {
  Rng rng(4);
  const HetGraph g = test::random_graph(100, 0.1, rng);
  for (std::size_t budget : {1u, 7u, 33u, 99u}) {
    const SamplingPlan plan = make_sampling_plan(g, EdgeType::ItemUser, budget, 1);
    for (int draw = 0; draw < 50; ++draw) {
      const LayerSample s = sample_layer(plan, 0, rng);
      std::array<std::size_t, kNumNodeTypes> realized{};
      for (NodeId v : s.nodes) ++realized[index_of(g.type_of(v))];
      EXPECT_EQ(realized, plan.quota[0]);
      EXPECT_EQ(s.nodes.size(), budget);
    }
  }
}

TEST(SampleLayer, StepOutsidePlanRejected) {
  Rng rng(5);
  const HetGraph g = test::random_graph(20, 0.2, rng);
  const SamplingPlan plan = make_sampling_plan(g, EdgeType::ItemUser, 5, 2);
  EXPECT_THROW(sample_layer(plan, 2, rng), Error);
}

TEST(InclusionProbabilities, SumToQuotaAndCapAtOne) {
  const std::vector<double> q{0.7, 0.1, 0.1, 0.1};
  const auto pi = inclusion_probabilities(q, 2);
  EXPECT_EQ(pi[0], 1.0);
  double s = 0.0;
  for (double p : pi) s += p;
  EXPECT_NEAR(s, 2.0, 1e-12);
  EXPECT_NEAR(pi[1], 1.0 / 3.0, 1e-12);
  EXPECT_THROW(inclusion_probabilities(q, 5), Error);
}

TEST(SampleLayer, EmpiricalInclusionMatchesProbabilities) {
  Rng rng(6);
  const HetGraph g = test::random_graph(40, 0.15, rng);
  const SamplingPlan plan = make_sampling_plan(g, EdgeType::ItemUser, 12, 1);
  std::vector<double> hits(40, 0.0);
  const int draws = 20000;
  for (int d = 0; d < draws; ++d)
    for (NodeId v : sample_layer(plan, 0, rng).nodes) hits[v] += 1.0;
  for (NodeType t : kNodeTypes) {
    const std::size_t ti = index_of(t);
    const auto pi = inclusion_probabilities(plan.dist.prob[ti], plan.quota[0][ti]);
    for (std::size_t i = 0; i < pi.size(); ++i) {
      const double se = std::sqrt(pi[i] * (1 - pi[i]) / draws);
      EXPECT_LE(std::abs(hits[plan.dist.nodes[ti][i]] / draws - pi[i]), 4 * se + 1e-12);
    }
  }
}

TEST(SampledSpmm, UnbiasedWithinThreeStandardErrors) {
  Rng rng(7);
  const HetGraph g = test::random_graph(100, 0.08, rng);
  const Dense m = test::random_dense(100, 3, rng);
  for (EdgeType r : kEdgeTypes) {
    const auto res = monte_carlo(g, r, 30, m, 10000, 11 + index_of(r));
    EXPECT_LE(res.max_error, 3 * res.max_se) << to_string(r);
  }
}

TEST(SampledSpmm, SingleSourcePerTypeEstimatorUnbiased) {
  // 10 nodes per type and a budget of 3: one source per type, weight 1/q
  std::vector<NodeSpec> nodes;
  for (NodeId v = 0; v < 30; ++v) nodes.push_back({v, kNodeTypes[v / 10]});
  Rng rng(8);
  std::vector<EdgeSpec> edges;
  for (NodeId u = 10; u < 20; ++u)
    for (NodeId o = 0; o < 30; ++o) {
      if (o >= 10 && o < 20) continue;
      if (rng.bernoulli(0.3)) edges.push_back({o, u, o < 10 ? EdgeType::GroupUser : EdgeType::ItemUser, {}});
    }
  const HetGraph g = build_graph(nodes, edges);
  const SamplingPlan plan = make_sampling_plan(g, EdgeType::ItemUser, 3, 1);
  for (std::size_t q : plan.quota[0]) EXPECT_EQ(q, 1u);
  const LayerSample s = sample_layer(plan, 0, rng);
  for (NodeId v : s.nodes) {
    const std::size_t ti = index_of(g.type_of(v));
    const auto& list = plan.dist.nodes[ti];
    const auto at = static_cast<std::size_t>(std::find(list.begin(), list.end(), v) - list.begin());
    EXPECT_DOUBLE_EQ(s.weight[v], 1.0 / plan.dist.prob[ti][at]);
  }
  const Dense m = test::random_dense(30, 2, rng);
  const auto res = monte_carlo(g, EdgeType::ItemUser, 3, m, 10000, 5);
  EXPECT_LE(res.max_error, 3 * res.max_se);
}

TEST(SampledSpmm, NoSampledNeighborsGivesZeroRow) {
  // user 0 - item 2; user 1 isolated. Sample only user 1.
  const std::vector<NodeSpec> nodes{{0, NodeType::User}, {1, NodeType::User}, {2, NodeType::Item}};
  const std::vector<EdgeSpec> edges{{2, 0, EdgeType::ItemUser, {}}};
  const HetGraph g = build_graph(nodes, edges);
  const NormAdj adj = normalized_adjacency(g, EdgeType::ItemUser);
  LayerSample s;
  s.weight = {0.0, 2.0, 0.0};
  s.nodes = {1};
  const Dense out = sampled_spmm(adj, Dense::from_rows({{1}, {1}, {1}}), s);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(2, 0), 0.0);
  EXPECT_EQ(out(1, 0), 2.0);
  s.weight.pop_back();
  try {
    sampled_spmm(adj, Dense(3, 1), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "weight");
  }
}

TEST(SampledSpmm, TransposeIsAdjoint) {
  Rng rng(9);
  const HetGraph g = test::random_graph(40, 0.15, rng);
  const NormAdj adj = normalized_adjacency(g, EdgeType::GroupUser);
  const SamplingPlan plan = make_sampling_plan(g, EdgeType::GroupUser, 15, 1);
  const LayerSample s = sample_layer(plan, 0, rng);
  const Dense x = test::random_dense(40, 3, rng), y = test::random_dense(40, 3, rng);
  // <y, S x> == <S^T y, x>
  const double lhs = dot(y.values(), sampled_spmm(adj, x, s).values());
  const double rhs = dot(sampled_spmm_transpose(adj, y, s).values(), x.values());
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

#include <gtest/gtest.h>

#include <cmath>

#include "hgp/fusion.hpp"
#include "support.hpp"

using namespace hgp;

namespace {

AttnParams random_attn(std::size_t m, std::size_t dk, std::size_t dv, std::size_t z, Rng& rng) {
  return {test::random_dense(m, dk, rng), test::random_dense(m, dk, rng), test::random_dense(m, dv, rng),
          test::random_dense(kNumEdgeTypes * dv, z, rng), test::random_dense(1, z, rng)};
}

// softmax(Q K^T / sqrt(dk)) V written out with scalar loops.
Dense attention_oracle(const Dense& q, const Dense& k, const Dense& v) {
  Dense out(q.rows(), v.cols());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> logit(k.rows());
    double mx = -1e300;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) s += q(i, c) * k(j, c);
      logit[j] = s / std::sqrt(static_cast<double>(q.cols()));
      mx = std::max(mx, logit[j]);
    }
    double z = 0.0;
    for (double& l : logit) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < k.rows(); ++j)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += logit[j] / z * v(j, c);
  }
  return out;
}

Dense fuse_oracle(const Dense& y, const AttnParams& p) {
  const Dense att = attention_oracle(test::naive_matmul(y, p.w_q), test::naive_matmul(y, p.w_k),
                                     test::naive_matmul(y, p.w_v));
  Dense concat(1, att.size());
  for (std::size_t i = 0; i < att.size(); ++i) concat.values()[i] = att.values()[i];
  Dense z = test::naive_matmul(concat, p.fuse_w);
  for (std::size_t c = 0; c < z.cols(); ++c) z(0, c) += p.fuse_b(0, c);
  return z;
}

PropagationState random_state(std::size_t n, std::size_t m, Rng& rng) {
  PropagationState s;
  for (auto& z : s.z) z = test::random_dense(n, m, rng);
  return s;
}

}  // namespace

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng(1);
  const Dense q = test::random_dense(3, 4, rng);
  const Dense k = test::random_dense(1, 4, rng);
  const Dense v = test::random_dense(1, 2, rng);
  const Dense out = attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(out(i, c), v(0, c));
}

TEST(Attention, ZeroQueryAveragesValues) {
  Rng rng(2);
  const Dense v = test::random_dense(4, 3, rng);
  const Dense out = attention(Dense(2, 5), test::random_dense(4, 5, rng), v);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mean += v(j, c) / 4.0;
    EXPECT_NEAR(out(0, c), mean, 1e-15);
    EXPECT_NEAR(out(1, c), mean, 1e-15);
  }
}

TEST(Attention, TwoByTwoHandCase) {
  const Dense i2 = Dense::identity(2);
  AttentionCache cache;
  const Dense out = attention(i2, i2, i2, &cache);
  const double w0 = std::exp(1.0 / std::sqrt(2.0)) / (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
  EXPECT_NEAR(out(0, 0), w0, 1e-15);
  EXPECT_NEAR(out(0, 1), 1.0 - w0, 1e-15);
  EXPECT_NEAR(out(0, 0), 0.6698, 1e-4);
  EXPECT_NEAR(out(0, 1), 0.3302, 1e-4);  // 0.33024, rounded
  EXPECT_NEAR(out(1, 1), w0, 1e-15);
}

TEST(Attention, WeightsSumToOneAndShiftInvariant) {
  Rng rng(3);
  const Dense q = test::random_dense(5, 4, rng, -3, 3);
  const Dense k = test::random_dense(6, 4, rng, -3, 3);
  AttentionCache c;
  attention(q, k, test::random_dense(6, 2, rng), &c);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0.0;
    for (double w : c.weights.row(i)) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  Dense logits = matmul_nt(q, k);
  logits *= 0.5;
  Dense shifted = logits;
  for (std::size_t i = 0; i < 5; ++i)
    for (double& x : shifted.row(i)) x += 3.0 * static_cast<double>(i) - 4.0;
  EXPECT_LE(max_abs_diff(row_softmax(logits), row_softmax(shifted)), 1e-12);
  EXPECT_LE(max_abs_diff(row_softmax(logits), c.weights), 1e-12);
}

TEST(Attention, ShapeMismatchRejected) {
  EXPECT_THROW(attention(Dense(2, 3), Dense(2, 4), Dense(2, 1)), Error);
  EXPECT_THROW(attention(Dense(2, 3), Dense(2, 3), Dense(3, 1)), Error);
}

TEST(Attention, RowPermutationEquivariance) {
  Rng rng(4);
  const Dense y = test::random_dense(2, 5, rng);
  const AttnParams p = random_attn(5, 4, 3, 6, rng);
  Dense ys(2, 5);
  std::copy(y.row(1).begin(), y.row(1).end(), ys.row(0).begin());
  std::copy(y.row(0).begin(), y.row(0).end(), ys.row(1).begin());
  const Dense a = attention(dense_matmul(y, p.w_q), dense_matmul(y, p.w_k), dense_matmul(y, p.w_v));
  const Dense b = attention(dense_matmul(ys, p.w_q), dense_matmul(ys, p.w_k), dense_matmul(ys, p.w_v));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(a(0, c), b(1, c), 1e-14);
    EXPECT_NEAR(a(1, c), b(0, c), 1e-14);
  }
}

TEST(FuseNode, ZeroQueryUsesMeanValue) {
  Rng rng(5);
  AttnParams p = random_attn(4, 3, 2, 5, rng);
  p.w_q.fill(0.0);
  const Dense y = test::random_dense(2, 4, rng);
  FuseCache c;
  const Dense z = fuse_node(y, p, &c);
  const Dense v = dense_matmul(y, p.w_v);
  Dense dup(1, 4);
  for (std::size_t c2 = 0; c2 < 2; ++c2) dup(0, c2) = dup(0, 2 + c2) = 0.5 * (v(0, c2) + v(1, c2));
  Dense want = dense_matmul(dup, p.fuse_w);
  add_row_bias(want, p.fuse_b);
  EXPECT_LE(max_abs_diff(z, want), 1e-14);
}

TEST(FuseNode, IdenticalRowsGiveIdenticalOutputs) {
  Rng rng(6);
  const AttnParams p = random_attn(4, 3, 2, 5, rng);
  Dense y = test::random_dense(2, 4, rng);
  std::copy(y.row(0).begin(), y.row(0).end(), y.row(1).begin());
  FuseCache c;
  fuse_node(y, p, &c);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(c.attn.out(0, k), c.attn.out(1, k));
  // z depends only on the common row: any Q/K change is irrelevant
  AttnParams p2 = p;
  p2.w_q = test::random_dense(4, 3, rng);
  p2.w_k = test::random_dense(4, 3, rng);
  EXPECT_LE(max_abs_diff(fuse_node(y, p, nullptr), fuse_node(y, p2, nullptr)), 1e-14);
}

TEST(FuseNode, MatchesUnrolledOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const AttnParams p = random_attn(16, 16, 8, 16, rng);
    const Dense y = test::random_dense(2, 16, rng);
    EXPECT_LE(max_abs_diff(fuse_node(y, p), fuse_oracle(y, p)), 1e-12);
  }
}

TEST(FuseNode, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  AttnParams p = random_attn(5, 4, 3, 6, rng);
  Dense y = test::random_dense(2, 5, rng);
  const Dense up = test::random_dense(1, 6, rng);
  auto loss = [&] {
    const Dense z = fuse_node(y, p);
    return dot(z.row(0), up.row(0));
  };
  FuseCache c;
  fuse_node(y, p, &c);
  AttnParams g = AttnParams::zeros_like(p);
  const Dense dy = fuse_node_backward(c, p, up, g);
  const std::vector<CheckedParam> ps{{"Y", &y, &dy},           {"W_Q", &p.w_q, &g.w_q},      {"W_K", &p.w_k, &g.w_k},
                                     {"W_V", &p.w_v, &g.w_v}, {"fuse_w", &p.fuse_w, &g.fuse_w}, {"fuse_b", &p.fuse_b, &g.fuse_b}};
  const auto rep = finite_diff_check(loss, ps, 1e-5, 1e-4);
  EXPECT_TRUE(rep.passed()) << rep.worst;
}

TEST(FuseAll, OneNodeEqualsFuseNode) {
  Rng rng(9);
  const PropagationState s = random_state(6, 16, rng);
  const AttnParams p = random_attn(16, 16, 8, 16, rng);
  const std::vector<NodeId> one{4};
  EXPECT_EQ(fuse_all(s, p, one), fuse_node(stack_node(s, 4), p));
}

TEST(FuseAll, TenNodesMatchLoopOracleExactly) {
  Rng rng(10);
  const PropagationState s = random_state(25, 16, rng);
  const AttnParams p = random_attn(16, 16, 8, 16, rng);
  std::vector<NodeId> nodes;
  for (NodeId v = 0; v < 10; ++v) nodes.push_back(static_cast<NodeId>(rng.below(25)));
  const Dense z = fuse_all(s, p, nodes);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const Dense want = fuse_node(stack_node(s, nodes[j]), p);
    for (std::size_t c = 0; c < z.cols(); ++c) EXPECT_EQ(z(j, c), want(0, c));
  }
}

TEST(FuseAll, PermutationPermutesRows) {
  Rng rng(11);
  const PropagationState s = random_state(12, 8, rng);
  const AttnParams p = random_attn(8, 4, 3, 5, rng);
  std::vector<NodeId> nodes{3, 7, 0, 11, 5};
  const Dense a = fuse_all(s, p, nodes);
  std::vector<NodeId> rev(nodes.rbegin(), nodes.rend());
  const Dense b = fuse_all(s, p, rev);
  for (std::size_t j = 0; j < nodes.size(); ++j)
    for (std::size_t c = 0; c < a.cols(); ++c) EXPECT_EQ(a(j, c), b(nodes.size() - 1 - j, c));
}

TEST(FuseAll, OutOfRangeNodeRejected) {
  Rng rng(12);
  const PropagationState s = random_state(4, 8, rng);
  const AttnParams p = random_attn(8, 4, 3, 5, rng);
  const std::vector<NodeId> bad{1, 4};
  try {
    fuse_all(s, p, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "node");
  }
}

TEST(FuseAll, BackwardMatchesPerNodeBackward) {
  Rng rng(13);
  const PropagationState s = random_state(9, 6, rng);
  const AttnParams p = random_attn(6, 4, 3, 5, rng);
  const std::vector<NodeId> nodes{2, 8, 5};
  FuseBatchCache bc;
  fuse_all(s, p, nodes, &bc);
  const Dense up = test::random_dense(3, 5, rng);
  AttnParams gb = AttnParams::zeros_like(p), gn = AttnParams::zeros_like(p);
  const Dense dstack = fuse_all_backward(bc, p, up, gb);
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    FuseCache c;
    fuse_node(stack_node(s, nodes[j]), p, &c);
    Dense upj(1, 5);
    std::copy(up.row(j).begin(), up.row(j).end(), upj.row(0).begin());
    const Dense dy = fuse_node_backward(c, p, upj, gn);
    for (std::size_t r = 0; r < kNumEdgeTypes; ++r)
      for (std::size_t c2 = 0; c2 < 6; ++c2) EXPECT_NEAR(dstack(j * kNumEdgeTypes + r, c2), dy(r, c2), 1e-13);
  }
  EXPECT_LE(max_abs_diff(gb.w_q, gn.w_q), 1e-13);
  EXPECT_LE(max_abs_diff(gb.w_k, gn.w_k), 1e-13);
  EXPECT_LE(max_abs_diff(gb.w_v, gn.w_v), 1e-13);
  EXPECT_LE(max_abs_diff(gb.fuse_w, gn.fuse_w), 1e-13);
  EXPECT_LE(max_abs_diff(gb.fuse_b, gn.fuse_b), 1e-13);
}

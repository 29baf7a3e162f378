#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_set>
#include <vector>

#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

struct LabeledPair {
  NodeId user = 0;
  NodeId item = 0;
  int label = 0;
  Day day = 0;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

inline std::uint64_t pair_key(NodeId user, NodeId item) {
  return (static_cast<std::uint64_t>(user) << 32) | static_cast<std::uint64_t>(item);
}

using PairSet = std::unordered_set<std::uint64_t>;

inline PairSet make_pair_set(std::span<const LabeledPair> pairs) {
  PairSet s;
  s.reserve(pairs.size() * 2);
  for (const auto& p : pairs) s.insert(pair_key(p.user, p.item));
  return s;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// z_i . z_j + x_i . x_j
inline double score_logit(std::span<const double> z_i, std::span<const double> z_j, std::span<const double> x_i,
                          std::span<const double> x_j) {
  require(z_i.size() == z_j.size(), "score: representation lengths differ");
  require(x_i.size() == x_j.size(), "score: feature lengths differ");
  return dot(z_i, z_j) + dot(x_i, x_j);
}

inline double score(std::span<const double> z_i, std::span<const double> z_j, std::span<const double> x_i,
                    std::span<const double> x_j) {
  return sigmoid(score_logit(z_i, z_j, x_i, x_j));
}

inline constexpr double kProbClamp = 1e-12;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
inline double bce_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size())
    throw Error("bce_loss: " + std::to_string(probs.size()) + " probabilities vs " + std::to_string(labels.size()) +
                " labels");
  require(!probs.empty(), "bce_loss: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_prob(probs[i]);
    sum += labels[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

// dL/dlogit for mean BCE over a sigmoid: (p - y) / batch.
inline std::vector<double> bce_logit_grad(std::span<const double> probs, std::span<const int> labels) {
  require(probs.size() == labels.size(), "bce_logit_grad: length mismatch");
  std::vector<double> g(probs.size());
  const double inv = 1.0 / static_cast<double>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = (probs[i] - labels[i]) * inv;
  return g;
}

// For every positive, ceil(ratio) pairs (same user, uniform random item)
// that are not in `exclude`. Falls back to enumerating the user's free items
// after a bounded number of rejections.
inline std::vector<LabeledPair> sample_negatives(const HetGraph& g, std::span<const LabeledPair> positives,
                                                 const PairSet& exclude, double ratio, Rng& rng) {
  require(ratio > 0.0, "negative ratio must be positive", "ratio");
  const auto& items = g.nodes_of_type(NodeType::Item);
  require(!items.empty(), "sample_negatives: graph has no items");
  const auto per_positive = static_cast<std::size_t>(std::ceil(ratio));
  constexpr int kRejectionTries = 32;
  std::vector<LabeledPair> out;
  out.reserve(positives.size() * per_positive);
  for (const auto& pos : positives) {
    for (std::size_t k = 0; k < per_positive; ++k) {
      NodeId chosen = 0;
      bool found = false;
      for (int t = 0; t < kRejectionTries && !found; ++t) {
        const NodeId cand = items[rng.below(items.size())];
        if (!exclude.contains(pair_key(pos.user, cand))) {
          chosen = cand;
          found = true;
        }
      }
      if (!found) {
        std::vector<NodeId> free;
        for (NodeId it : items)
          if (!exclude.contains(pair_key(pos.user, it))) free.push_back(it);
        require(!free.empty(), "user " + std::to_string(pos.user) + " interacts with every item; no negative available",
                "user " + std::to_string(pos.user));
        chosen = free[rng.below(free.size())];
      }
      out.push_back({pos.user, chosen, 0, pos.day});
    }
  }
  return out;
}

}  // namespace hgp

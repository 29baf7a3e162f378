#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "hgp/ctr.hpp"
#include "hgp/dataset.hpp"
#include "hgp/error.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/metrics.hpp"
#include "hgp/model.hpp"
#include "hgp/propagation.hpp"
#include "hgp/trainer.hpp"

namespace hgp {

// A dataset prepared for training: temporal split, the training graph (test and
// validation interactions hidden) and labelled evaluation sets.
struct Experiment {
  Dataset data;
  TemporalSplit split;
  HetGraph graph;
  std::unique_ptr<GraphContext> ctx;
  std::vector<LabeledPair> validation;
  std::vector<LabeledPair> test;
  PairSet known_positives;
  std::uint64_t eval_seed = 7;
};

// Throws when a held-out pair also appears among the training positives.
inline void assert_disjoint(std::span<const LabeledPair> train, std::span<const LabeledPair> held_out,
                            const std::string& name) {
  const PairSet seen = make_pair_set(train);
  for (const auto& p : held_out)
    require(p.label != 1 || !seen.contains(pair_key(p.user, p.item)),
            name + " positive (" + std::to_string(p.user) + "," + std::to_string(p.item) +
                ") also appears in the training split",
            name);
}

inline std::unique_ptr<Experiment> prepare_experiment(Dataset data, std::uint64_t eval_seed = 7) {
  auto e = std::make_unique<Experiment>();
  e->data = std::move(data);
  e->eval_seed = eval_seed;
  e->split = temporal_split(e->data.interactions);
  e->graph = build_interaction_graph(e->data, e->split.train);
  e->ctx = std::make_unique<GraphContext>(e->graph, e->data.attributes, e->data.schema);
  e->validation = evaluation_pairs(e->data, e->graph, e->split.validation, eval_seed);
  e->test = evaluation_pairs(e->data, e->graph, e->split.test, eval_seed);
  e->known_positives = make_pair_set(e->data.interactions);
  assert_disjoint(e->split.train, e->test, "test");
  assert_disjoint(e->split.train, e->validation, "validation");
  return e;
}

inline TrainResult train_experiment(const Experiment& e, const TrainConfig& cfg,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const PairSet train_known = make_pair_set(e.split.train);
  TrainInputs in{e.ctx.get(), e.split.train, e.validation, &train_known};
  return train(cfg, e.data.schema, in, on_epoch);
}

// Mean pairwise cosine of rows of the ItemUser plain and APPNP propagations
// of H, over the users of one community.
struct OversmoothingReport {
  double plain_cosine = 0.0;
  double appnp_cosine = 0.0;
  std::size_t rows = 0;
};

inline OversmoothingReport oversmoothing(const Experiment& e, const Dense& h, const PropagationConfig& cfg,
                                         int community = 0) {
  require(e.data.truth.has_value(), "oversmoothing diagnostic needs planted communities", "truth");
  std::vector<NodeId> users;
  for (NodeId v : e.graph.nodes_of_type(NodeType::User))
    if (e.data.truth->community[v] == community) users.push_back(v);
  const NormAdj& adj = e.ctx->adj[index_of(EdgeType::ItemUser)];
  const CosineStats plain = row_cosine_stats(plain_propagate(adj, h, cfg.steps), users);
  const CosineStats appnp = row_cosine_stats(appnp_propagate(adj, h, cfg), users);
  return {plain.mean, appnp.mean, plain.rows_used};
}

// The model's per-type predictor output H for a trained or fresh model.
inline Dense predicted_features(const Experiment& e, const TrainedModel& m) {
  const Dense x = embed_attributes(e.data.attributes, e.graph, e.data.schema, m.params.embed);
  return predict_per_type(x, e.graph, m.params.embed);
}

}  // namespace hgp

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgp/dataset.hpp"
#include "hgp/error.hpp"
#include "hgp/features.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/metrics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

// Planted-partition tripartite generator. Communities are assigned
// round-robin (node index mod C) within each type.
struct GenConfig {
  std::size_t groups = 200;
  std::size_t users = 2000;
  std::size_t items = 500;
  std::size_t communities = 10;
  std::size_t mean_memberships = 2;    // per user, drawn uniformly from 1..2*mean-1
  double membership_fidelity = 0.8;    // P(joined group is in the user's community)
  double p_in = 0.2;
  double p_out = 0.002;
  std::size_t interactions = 10;       // clicks per user
  std::size_t days = 17;
  double attribute_fidelity = 0.3;     // P(categorical attribute equals the community)
  std::size_t numeric_dim = 4;
  double numeric_noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    require(groups > 0 && users > 0 && items > 0, "generator needs at least one node of every type", "counts");
    require(communities >= 1 && communities <= std::min(groups, items),
            "communities must lie in [1, min(groups, items)]", "communities");
    require(p_out > 0.0 && p_out <= p_in && p_in < 1.0, "need 0 < p_out <= p_in < 1", "p_in/p_out");
    require(days >= 3, "need at least 3 days for a train/validation/test split", "days");
    require(mean_memberships >= 1, "mean_memberships must be >= 1", "mean_memberships");
    require(2 * mean_memberships - 1 <= groups,
            "up to " + std::to_string(2 * mean_memberships - 1) + " memberships per user but only " +
                std::to_string(groups) + " groups",
            "mean_memberships");
    require(interactions >= 1 && interactions < items, "interactions per user must lie in [1, items)",
            "interactions");
    require(membership_fidelity >= 0.0 && membership_fidelity <= 1.0, "membership_fidelity must lie in [0,1]",
            "membership_fidelity");
    require(attribute_fidelity >= 0.0 && attribute_fidelity <= 1.0, "attribute_fidelity must lie in [0,1]",
            "attribute_fidelity");
    require(numeric_dim >= 1, "numeric_dim must be >= 1", "numeric_dim");
  }

  nlohmann::json to_json() const {
    return {{"groups", groups},
            {"users", users},
            {"items", items},
            {"communities", communities},
            {"mean_memberships", mean_memberships},
            {"membership_fidelity", membership_fidelity},
            {"p_in", p_in},
            {"p_out", p_out},
            {"interactions", interactions},
            {"days", days},
            {"attribute_fidelity", attribute_fidelity},
            {"numeric_dim", numeric_dim},
            {"numeric_noise", numeric_noise},
            {"seed", seed}};
  }
};

inline AttributeSchema synthetic_schema(const GenConfig& cfg) {
  AttributeSchema s;
  s.per_type[index_of(NodeType::Group)] = {{"topic", AttributeKind::Categorical, cfg.communities}};
  s.per_type[index_of(NodeType::User)] = {{"demographic", AttributeKind::Categorical, cfg.communities},
                                          {"profile", AttributeKind::Numeric, cfg.numeric_dim}};
  s.per_type[index_of(NodeType::Item)] = {{"category", AttributeKind::Categorical, cfg.communities},
                                          {"content", AttributeKind::Numeric, cfg.numeric_dim}};
  return s;
}

// Builds the dataset; oracle_auc in the manifest is computed on the default
// temporal test split against evaluation negatives drawn from `eval_seed`.
inline Dataset generate(const GenConfig& cfg, std::uint64_t eval_seed = 7) {
  cfg.validate();
  Rng rng(cfg.seed);
  Dataset d;
  d.schema = synthetic_schema(cfg);
  PlantedTruth truth;
  truth.p_in = cfg.p_in;
  truth.p_out = cfg.p_out;

  const std::size_t C = cfg.communities;
  auto add_nodes = [&](NodeType t, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      d.types.push_back(t);
      d.external_id.push_back(static_cast<std::int64_t>(i));
      truth.community.push_back(static_cast<int>(i % C));
    }
  };
  add_nodes(NodeType::Group, cfg.groups);
  add_nodes(NodeType::User, cfg.users);
  add_nodes(NodeType::Item, cfg.items);
  const NodeId group0 = 0;
  const auto user0 = static_cast<NodeId>(cfg.groups);
  const auto item0 = static_cast<NodeId>(cfg.groups + cfg.users);

  // nodes of each community, per type
  std::vector<std::vector<NodeId>> groups_in(C), items_in(C);
  for (std::size_t g = 0; g < cfg.groups; ++g) groups_in[g % C].push_back(group0 + static_cast<NodeId>(g));
  for (std::size_t i = 0; i < cfg.items; ++i) items_in[i % C].push_back(item0 + static_cast<NodeId>(i));

  for (std::size_t u = 0; u < cfg.users; ++u) {
    const NodeId user = user0 + static_cast<NodeId>(u);
    const std::size_t c = u % C;
    const std::size_t count = 1 + rng.below(2 * cfg.mean_memberships - 1);
    std::vector<NodeId> joined;
    for (std::size_t tries = 0; joined.size() < count; ++tries) {
      const bool own = tries < 100 * count && rng.bernoulli(cfg.membership_fidelity);
      const NodeId g = own
                           ? groups_in[c][rng.below(groups_in[c].size())]
                           : group0 + static_cast<NodeId>(rng.below(cfg.groups));
      if (std::find(joined.begin(), joined.end(), g) == joined.end()) joined.push_back(g);
    }
    for (NodeId g : joined) d.memberships.push_back({g, user, EdgeType::GroupUser, std::nullopt});

    // Each click lands in the user's community with probability proportional
    // to p_in times the community's item count.
    const double in_mass = static_cast<double>(items_in[c].size()) * cfg.p_in;
    const double out_mass = static_cast<double>(cfg.items - items_in[c].size()) * cfg.p_out;
    const double p_inside = in_mass / (in_mass + out_mass);
    std::vector<NodeId> clicked;
    std::size_t guard = 0;
    while (clicked.size() < cfg.interactions && guard++ < 100 * cfg.interactions) {
      NodeId item;
      if (rng.bernoulli(p_inside) || items_in[c].size() == cfg.items) {
        item = items_in[c][rng.below(items_in[c].size())];
      } else {
        do {
          item = item0 + static_cast<NodeId>(rng.below(cfg.items));
        } while (static_cast<std::size_t>(truth.community[item]) == c);
      }
      if (std::find(clicked.begin(), clicked.end(), item) != clicked.end()) continue;
      clicked.push_back(item);
      d.interactions.push_back({user, item, 1, static_cast<Day>(rng.below(cfg.days))});
    }
  }

  auto noisy_category = [&](NodeId v) -> std::int64_t {
    return rng.bernoulli(cfg.attribute_fidelity) ? truth.community[v] : static_cast<std::int64_t>(rng.below(C));
  };
  auto noise_vector = [&]() {
    std::vector<double> v(cfg.numeric_dim);
    for (double& x : v) x = cfg.numeric_noise * rng.normal();
    return v;
  };
  d.attributes.resize(d.types.size());
  for (NodeId v = 0; v < d.types.size(); ++v) {
    auto& a = d.attributes[v];
    a.emplace_back(noisy_category(v));
    if (d.types[v] != NodeType::Group) a.emplace_back(noise_vector());
  }
  d.truth = std::move(truth);

  d.manifest = {{"config", cfg.to_json()},
                {"rng", Rng::kAlgorithm},
                {"counts",
                 {{"groups", cfg.groups},
                  {"users", cfg.users},
                  {"items", cfg.items},
                  {"group_user_edges", d.memberships.size()},
                  {"item_user_edges", d.interactions.size()}}},
                {"eval_seed", eval_seed}};
  try {
    const TemporalSplit split = temporal_split(d.interactions);
    const HetGraph g = build_interaction_graph(d, split.train);
    const auto test_pairs = evaluation_pairs(d, g, split.test, eval_seed);
    d.manifest["oracle_auc"] = oracle_auc(*d.truth, g, test_pairs);
    d.manifest["split"] = {{"train", split.train.size()},
                           {"validation", split.validation.size()},
                           {"test", split.test.size()},
                           {"validation_start_day", split.validation_start},
                           {"test_start_day", split.test_start}};
  } catch (const Error& e) {
    // tiny instances may not support the default split
    d.manifest["oracle_auc"] = nullptr;
    d.manifest["split_error"] = e.what();
  }
  return d;
}

}  // namespace hgp

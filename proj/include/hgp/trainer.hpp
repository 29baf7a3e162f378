#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgp/ctr.hpp"
#include "hgp/dataset.hpp"
#include "hgp/error.hpp"
#include "hgp/metrics.hpp"
#include "hgp/model.hpp"
#include "hgp/numerics.hpp"
#include "hgp/propagation.hpp"
#include "hgp/rng.hpp"
#include "hgp/sampler.hpp"

namespace hgp {

enum class SamplingMode { Off, On, Auto };
enum class SampleScope { PerStep, PerBatch };

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-3;  // graphs with millions of edges train at about 3e-7
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double negative_ratio = 1.0;
  SamplingMode sampling = SamplingMode::Auto;
  SampleScope sample_scope = SampleScope::PerStep;
  std::size_t budget = 10240;              // nodes per propagation step, all types together
  std::size_t sampling_threshold = 50000;  // Auto samples only at or above this node count
  double threshold = 0.5;                  // F1 decision threshold
  std::size_t eval_every = 1;
  std::uint64_t eval_seed = 7;
  bool record_wall_time = true;

  void validate() const {
    model.prop.validate();
    require(batch_size >= 1, "batch size must be >= 1", "batch_size");
    require(learning_rate > 0.0, "learning rate must be positive", "lr");
    require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "Adam betas must lie in (0,1)", "beta");
    require(negative_ratio > 0.0, "negative ratio must be positive", "negative_ratio");
    require(budget >= 1, "sampling budget must be >= 1", "budget");
    require(eval_every >= 1, "eval_every must be >= 1", "eval_every");
  }

  bool sampling_enabled(std::size_t num_nodes) const {
    return sampling == SamplingMode::On || (sampling == SamplingMode::Auto && num_nodes >= sampling_threshold);
  }
};

struct TrainedModel {
  ModelConfig config;
  AttributeSchema schema;
  ModelParams params;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_roc_auc = 0.0;
  double val_pr_auc = 0.0;
  double val_f1 = 0.0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},          {"train_loss", train_loss}, {"val_roc_auc", val_roc_auc},
            {"val_pr_auc", val_pr_auc}, {"val_f1", val_f1},         {"wall_seconds", wall_seconds}};
  }
};

inline std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) out += r.to_json().dump() + "\n";
  return out;
}

struct TrainResult {
  TrainedModel best;   // highest validation ROC-AUC
  TrainedModel last;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<double> batch_losses;
};

// Thrown when a batch loss is non-finite; carries the last finite model.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, TrainedModel last_finite)
      : Error(msg, "train_loss"), last_finite_(std::move(last_finite)) {}
  const TrainedModel& last_finite() const { return last_finite_; }

 private:
  TrainedModel last_finite_;
};

inline TrainedModel init_model(const ModelConfig& cfg, const AttributeSchema& schema, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x1417);
  return {cfg, schema, ModelParams::init(schema, cfg, rng)};
}

inline EvalReport evaluate_model(const TrainedModel& model, const GraphContext& ctx,
                                 std::span<const LabeledPair> labeled, double threshold = 0.5) {
  const auto probs = predict_pairs(ctx, model.config, model.params, labeled);
  std::vector<int> labels(labeled.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) labels[i] = labeled[i].label;
  return evaluate_scores(probs, labels, threshold);
}

// Training data for one run: the graph (train interactions only) and the
// labelled validation set.
struct TrainInputs {
  const GraphContext* ctx = nullptr;
  std::span<const LabeledPair> train_positives;
  std::span<const LabeledPair> validation;  // labelled, with negatives
  const PairSet* known_positives = nullptr; // excluded when drawing training negatives
};

namespace detail {

inline SampleSchedule draw_schedule(const std::array<SamplingPlan, kNumEdgeTypes>& plans, std::size_t steps,
                                    SampleScope scope, Rng& rng) {
  SampleSchedule s;
  const std::size_t draws = scope == SampleScope::PerStep ? std::max<std::size_t>(steps, 1) : 1;
  for (std::size_t r = 0; r < kNumEdgeTypes; ++r)
    for (std::size_t k = 0; k < draws; ++k) s[r].push_back(sample_layer(plans[r], k, rng));
  return s;
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const AttributeSchema& schema, const TrainInputs& in,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  require(in.ctx != nullptr && in.known_positives != nullptr, "train: incomplete inputs");
  require(!in.train_positives.empty(), "train: no training positives", "train");
  const GraphContext& ctx = *in.ctx;
  const HetGraph& g = *ctx.graph;

  TrainResult result;
  TrainedModel model = init_model(cfg.model, schema, cfg.seed);
  result.best = model;
  result.last = model;
  if (cfg.epochs == 0) return result;

  Rng negative_rng = Rng::derive(cfg.seed, 0x2e6);
  Rng shuffle_rng = Rng::derive(cfg.seed, 0x5f1);
  Rng sample_rng = Rng::derive(cfg.seed, 0x5a3);

  const bool sampling = cfg.sampling_enabled(g.num_nodes());
  std::array<SamplingPlan, kNumEdgeTypes> plans;
  if (sampling) {
    const std::size_t budget = std::min(cfg.budget, g.num_nodes());
    for (EdgeType r : kEdgeTypes)
      plans[index_of(r)] = make_sampling_plan(g, r, budget, std::max<std::size_t>(cfg.model.prop.steps, 1));
  }

  ModelParams grads = ModelParams::zeros_like(model.params);
  std::vector<AdamState> adam;
  model.params.for_each(schema, [&](const std::string&, Dense& p) { adam.push_back(AdamState::for_param(p)); });
  const AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon};

  double best_auc = -1.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<LabeledPair> pairs =
        labeled_with_negatives(g, in.train_positives, *in.known_positives, cfg.negative_ratio, negative_rng);
    shuffle_rng.shuffle(std::span<LabeledPair>(pairs));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      const std::span<const LabeledPair> batch(pairs.data() + start, end - start);
      grads.for_each(schema, [](const std::string&, Dense& d) { d.fill(0.0); });
      SampleSchedule schedule;
      if (sampling) schedule = detail::draw_schedule(plans, cfg.model.prop.steps, cfg.sample_scope, sample_rng);
      const double loss = forward_backward(ctx, model.config, model.params, batch, &grads,
                                           sampling ? &schedule : nullptr);
      if (!std::isfinite(loss))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch), model);
      result.batch_losses.push_back(loss);
      loss_sum += loss * static_cast<double>(batch.size());

      std::vector<Dense*> grad_list;
      grads.for_each(schema, [&](const std::string&, Dense& d) { grad_list.push_back(&d); });
      std::size_t i = 0;
      model.params.for_each(schema, [&](const std::string&, Dense& p) {
        adam_step(p, *grad_list[i], adam[i], adam_cfg);
        ++i;
      });
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(pairs.size());
    if (!in.validation.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      const EvalReport rep = evaluate_model(model, ctx, in.validation, cfg.threshold);
      rec.val_roc_auc = rep.roc_auc;
      rec.val_pr_auc = rep.pr_auc;
      rec.val_f1 = rep.f1;
      if (rep.roc_auc > best_auc) {
        best_auc = rep.roc_auc;
        result.best = model;
        result.best_epoch = epoch;
      }
    }
    if (cfg.record_wall_time)
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.last = model;
  if (in.validation.empty()) {
    result.best = model;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text, one block per parameter:
//   <name> <rows> <cols>
//   <row-major values, one matrix row per line, 17 significant digits>

inline constexpr const char* kCheckpointMagic = "hgp-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string format17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string schema_line(const AttributeSchema& s) {
  std::string out;
  for (NodeType t : kNodeTypes) {
    out += std::string(to_string(t)) + "=";
    bool first = true;
    for (const auto& a : s.of(t)) {
      out += (first ? "" : ",") + io::attribute_header(a);
      first = false;
    }
    out += t == NodeType::Item ? "" : ";";
  }
  return out;
}

inline AttributeSchema parse_schema_line(const std::string& line) {
  AttributeSchema s;
  for (const auto& part : io::split(line, ';')) {
    const auto eq = part.find('=');
    require(eq != std::string::npos, "checkpoint: malformed schema entry '" + part + "'", "schema");
    const NodeType t = parse_node_type(part.substr(0, eq));
    const std::string rest = part.substr(eq + 1);
    if (rest.empty()) continue;
    for (const auto& a : io::split(rest, ',')) s.per_type[index_of(t)].push_back(io::parse_attribute_header(a, "schema"));
  }
  return s;
}

}  // namespace detail

inline std::string checkpoint_text(const TrainedModel& m) {
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "config " << m.config.fingerprint() << '\n';
  os << "edge_types";
  for (EdgeType r : kEdgeTypes) os << ' ' << to_string(r);
  os << '\n';
  os << "schema " << detail::schema_line(m.schema) << '\n';
  std::size_t count = 0;
  m.params.for_each(m.schema, [&](const std::string&, const Dense&) { ++count; });
  os << "params " << count << '\n';
  m.params.for_each(m.schema, [&](const std::string& name, const Dense& d) {
    os << name << ' ' << d.rows() << ' ' << d.cols() << '\n';
    for (std::size_t r = 0; r < d.rows(); ++r) {
      for (std::size_t c = 0; c < d.cols(); ++c) os << (c ? " " : "") << detail::format17(d(r, c));
      os << '\n';
    }
  });
  return os.str();
}

inline void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  io::write_text(path, checkpoint_text(m));
}

inline ModelConfig parse_fingerprint(const std::string& fp) {
  ModelConfig c;
  for (const auto& kv : io::split(fp, ';')) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "checkpoint: malformed config entry '" + kv + "'", "config");
    const std::string k = kv.substr(0, eq);
    const std::string v = kv.substr(eq + 1);
    if (k == "alpha") c.prop.alpha = io::parse_double(v, "config alpha");
    else if (k == "K") c.prop.steps = static_cast<std::size_t>(io::parse_int(v, "config K"));
    else if (k == "n") c.dims.n = static_cast<std::size_t>(io::parse_int(v, "config n"));
    else if (k == "m") c.dims.m = static_cast<std::size_t>(io::parse_int(v, "config m"));
    else if (k == "embed") c.dims.embed = static_cast<std::size_t>(io::parse_int(v, "config embed"));
    else if (k == "dk") c.key_dim = static_cast<std::size_t>(io::parse_int(v, "config dk"));
    else if (k == "dv") c.value_dim = static_cast<std::size_t>(io::parse_int(v, "config dv"));
    else if (k == "z") c.z_dim = static_cast<std::size_t>(io::parse_int(v, "config z"));
    else if (k == "tied") c.tie_prop_weights = v == "1";
    else if (k == "idinit") c.prop_identity_init = v == "1";
    else throw Error("checkpoint: unknown config key '" + k + "'", "config");
  }
  return c;
}

// Parses a checkpoint. With `expected` given, the stored shapes must match a
// model built from that configuration and schema.
inline TrainedModel load_checkpoint(const std::filesystem::path& path, const TrainedModel* expected = nullptr) {
  std::ifstream in(path);
  require(in.good(), "cannot open checkpoint " + path.string(), path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  std::size_t at = 0;
  auto next = [&](const std::string& what) -> const std::string& {
    require(at < lines.size(), "checkpoint truncated: missing " + what, what);
    return lines[at++];
  };
  auto header = io::split(next("header"), ' ');
  require(header.size() == 2 && header[0] == kCheckpointMagic, "not an hgp checkpoint", "header");
  require(io::parse_int(header[1], "version") == kCheckpointVersion,
          "checkpoint version " + header[1] + " unsupported (expected " + std::to_string(kCheckpointVersion) + ")",
          "version");
  auto field = [&](const std::string& key) {
    const std::string& l = next(key);
    require(l.rfind(key + " ", 0) == 0 || l == key, "checkpoint: expected '" + key + "' line", key);
    return l.size() > key.size() ? l.substr(key.size() + 1) : std::string();
  };
  TrainedModel m;
  m.config = parse_fingerprint(field("config"));
  std::string order;
  for (EdgeType r : kEdgeTypes) order += (order.empty() ? "" : " ") + std::string(to_string(r));
  require(field("edge_types") == order, "checkpoint edge-type order differs from " + order, "edge_types");
  m.schema = detail::parse_schema_line(field("schema"));
  const auto count = static_cast<std::size_t>(io::parse_int(field("params"), "params"));

  std::vector<std::pair<std::string, Dense>> blocks;
  for (std::size_t b = 0; b < count; ++b) {
    const auto h = io::split(next("parameter block " + std::to_string(b)), ' ');
    require(h.size() == 3, "checkpoint: malformed block header", "block " + std::to_string(b));
    const std::string& name = h[0];
    const auto rows = static_cast<std::size_t>(io::parse_int(h[1], name + " rows"));
    const auto cols = static_cast<std::size_t>(io::parse_int(h[2], name + " cols"));
    std::vector<double> vals;
    vals.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      require(at < lines.size(), "checkpoint truncated inside block " + name, name);
      const auto cells = lines[at].empty() && cols == 0 ? std::vector<std::string>{} : io::split(lines[at], ' ');
      ++at;
      require(cells.size() == cols, "checkpoint block " + name + " row " + std::to_string(r) + " is incomplete",
              name);
      for (const auto& c : cells) vals.push_back(io::parse_double(c, name));
    }
    blocks.emplace_back(name, Dense(rows, cols, std::move(vals)));
  }

  // Rebuild the parameter layout implied by the stored config, then fill it.
  const std::size_t stored_prop = static_cast<std::size_t>(std::count_if(
      blocks.begin(), blocks.end(), [](const auto& b) { return b.first.rfind("prop/W_H/", 0) == 0; }));
  const TrainedModel& shape_src = expected ? *expected : m;
  if (expected) {
    require(expected->params.prop.w.size() == stored_prop,
            "PropWeights count mismatch: checkpoint has " + std::to_string(stored_prop) + ", config expects " +
                std::to_string(expected->params.prop.w.size()),
            "PropWeights");
    require(expected->schema == m.schema, "checkpoint attribute schema differs from configuration", "schema");
  }
  Rng dummy(0);
  ModelParams params = expected ? ModelParams::zeros_like(expected->params)
                                : ModelParams::init(m.schema, m.config, dummy);
  std::size_t i = 0;
  std::size_t expected_count = 0;
  params.for_each(shape_src.schema, [&](const std::string&, Dense&) { ++expected_count; });
  require(expected_count == blocks.size(),
          "checkpoint has " + std::to_string(blocks.size()) + " parameter blocks, model needs " +
              std::to_string(expected_count),
          "params");
  params.for_each(shape_src.schema, [&](const std::string& name, Dense& d) {
    const auto& [bname, value] = blocks[i++];
    require(bname == name, "checkpoint block '" + bname + "' where '" + name + "' was expected", name);
    require(value.same_shape(d), "shape mismatch for " + name + ": checkpoint " + shape_str(value) + ", model " +
                                     shape_str(d),
            name);
    d = value;
  });
  if (expected) {
    require(expected->config.fingerprint() == m.config.fingerprint(),
            "checkpoint config '" + m.config.fingerprint() + "' differs from '" + expected->config.fingerprint() + "'",
            "config");
  }
  m.params = std::move(params);
  return m;
}

}  // namespace hgp

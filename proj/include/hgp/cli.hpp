#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgp/datagen.hpp"
#include "hgp/dataset.hpp"
#include "hgp/error.hpp"
#include "hgp/gradcheck.hpp"
#include "hgp/metrics.hpp"
#include "hgp/pipeline.hpp"
#include "hgp/trainer.hpp"

namespace hgp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::size_t> kDefaultSweepK{1, 2, 3, 5, 10};

// Flat key=value run configuration. Values stay textual until a command
// converts them; every key is also a --key flag.
class RunConfig {
 public:
  RunConfig() {
    const GenConfig g;
    const TrainConfig t;
    const ModelConfig& m = t.model;
    set_default("data", "", "dataset directory (empty: generate from the generator keys)");
    set_default("out", "out", "output directory");
    set_default("checkpoint", "", "checkpoint to evaluate (empty: fresh initialization)");
    set_default("seed", std::to_string(t.seed), "seed for generation and training");
    set_default("seeds", "", "comma list of seeds for sweep-k (empty: seed)");
    set_default("k", "", "propagation steps; a comma list for sweep-k (empty: 10, sweep-k 1,2,3,5,10)");
    set_default("alpha", io::format_double(m.prop.alpha), "teleport probability");
    set_default("embed_dim", std::to_string(m.dims.embed), "width of each embedded attribute");
    set_default("n_dim", std::to_string(m.dims.n), "columns of X");
    set_default("m_dim", std::to_string(m.dims.m), "columns of H");
    set_default("key_dim", std::to_string(m.key_dim), "attention key width");
    set_default("value_dim", std::to_string(m.value_dim), "attention value width");
    set_default("z_dim", std::to_string(m.z_dim), "fused representation width");
    set_default("tie_weights", "false", "share one W_H across propagation steps");
    set_default("identity_init", m.prop_identity_init ? "true" : "false", "add the identity to each initial W_H");
    set_default("epochs", std::to_string(t.epochs), "training epochs");
    set_default("lr", io::format_double(t.learning_rate), "Adam learning rate");
    set_default("beta1", io::format_double(t.beta1), "Adam beta1");
    set_default("beta2", io::format_double(t.beta2), "Adam beta2");
    set_default("adam_eps", io::format_double(t.adam_epsilon), "Adam epsilon");
    set_default("batch_size", std::to_string(t.batch_size), "labelled pairs per batch");
    set_default("negative_ratio", io::format_double(t.negative_ratio), "negatives per positive");
    set_default("sampling", "auto", "on | off | auto");
    set_default("sample_scope", "step", "step | batch: fresh node sample per propagation step or per batch");
    set_default("budget", std::to_string(t.budget), "sampled nodes per propagation step");
    set_default("sampling_threshold", std::to_string(t.sampling_threshold), "auto sampling from this node count");
    set_default("threshold", io::format_double(t.threshold), "F1 decision threshold");
    set_default("eval_every", std::to_string(t.eval_every), "validation cadence in epochs");
    set_default("eval_seed", std::to_string(t.eval_seed), "seed of the evaluation negatives");
    set_default("wall_time", "true", "record wall_seconds in the history (false: 0, for bit-identical reruns)");
    set_default("groups", std::to_string(g.groups), "generator: groups");
    set_default("users", std::to_string(g.users), "generator: users");
    set_default("items", std::to_string(g.items), "generator: items");
    set_default("communities", std::to_string(g.communities), "generator: planted communities");
    set_default("mean_memberships", std::to_string(g.mean_memberships), "generator: mean groups per user");
    set_default("membership_fidelity", io::format_double(g.membership_fidelity), "generator: in-community joins");
    set_default("p_in", io::format_double(g.p_in), "generator: in-community click probability");
    set_default("p_out", io::format_double(g.p_out), "generator: cross-community click probability");
    set_default("interactions", std::to_string(g.interactions), "generator: clicks per user");
    set_default("days", std::to_string(g.days), "generator: day span");
    set_default("attribute_fidelity", io::format_double(g.attribute_fidelity), "generator: attribute signal");
    set_default("numeric_dim", std::to_string(g.numeric_dim), "generator: numeric attribute width");
    set_default("numeric_noise", io::format_double(g.numeric_noise), "generator: numeric attribute stddev");
    set_default("fd_step", "1e-05", "grad-check: finite-difference step");
    set_default("tol", "0.0001", "grad-check: relative error tolerance");
  }

  const std::vector<std::string>& keys() const { return order_; }
  const std::string& help(const std::string& key) const { return help_.at(key); }
  bool has(const std::string& key) const { return values_.contains(key); }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), "unknown config key '" + key + "'", key);
    return it->second;
  }

  void set(const std::string& key, const std::string& value) {
    require(has(key), "unknown config key '" + key + "'", key);
    values_[key] = value;
  }

  // `key = value` lines; blank lines and lines starting with '#' are skipped.
  void merge_file(const fs::path& path) {
    require(fs::exists(path), "config file " + path.string() + " not found", "config");
    const auto lines = io::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string line = trim(lines[i]);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      const std::string where = path.string() + ":" + std::to_string(i + 1);
      require(eq != std::string::npos, where + ": expected key = value", "config");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  std::string text() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
    return out;
  }

  std::int64_t integer(const std::string& key) const { return io::parse_int(get(key), key); }
  double real(const std::string& key) const { return io::parse_double(get(key), key); }

  std::size_t count(const std::string& key) const {
    const auto v = integer(key);
    require(v >= 0, key + " must be non-negative", key);
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key) const {
    const std::string v = io::lower(get(key));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(key + ": expected a boolean, got '" + get(key) + "'", key);
  }

  std::vector<std::size_t> count_list(const std::string& key) const {
    std::vector<std::size_t> out;
    if (get(key).empty()) return out;
    for (const auto& part : io::split(get(key), ',')) {
      const auto v = io::parse_int(trim(part), key);
      require(v >= 0, key + " entries must be non-negative", key);
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

 private:
  void set_default(const std::string& key, const std::string& value, const std::string& help) {
    order_.push_back(key);
    values_[key] = value;
    help_[key] = help;
  }

  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> help_;
};

inline GenConfig gen_config(const RunConfig& c) {
  GenConfig g;
  g.groups = c.count("groups");
  g.users = c.count("users");
  g.items = c.count("items");
  g.communities = c.count("communities");
  g.mean_memberships = c.count("mean_memberships");
  g.membership_fidelity = c.real("membership_fidelity");
  g.p_in = c.real("p_in");
  g.p_out = c.real("p_out");
  g.interactions = c.count("interactions");
  g.days = c.count("days");
  g.attribute_fidelity = c.real("attribute_fidelity");
  g.numeric_dim = c.count("numeric_dim");
  g.numeric_noise = c.real("numeric_noise");
  g.seed = c.count("seed");
  g.validate();
  return g;
}

inline std::size_t single_k(const RunConfig& c) {
  const auto ks = c.count_list("k");
  if (ks.empty()) return PropagationConfig{}.steps;
  require(ks.size() == 1, "k must be a single value for this command", "k");
  return ks[0];
}

inline TrainConfig train_config(const RunConfig& c, std::size_t k) {
  TrainConfig t;
  t.model.prop.alpha = c.real("alpha");
  t.model.prop.steps = k;
  t.model.dims.embed = c.count("embed_dim");
  t.model.dims.n = c.count("n_dim");
  t.model.dims.m = c.count("m_dim");
  t.model.key_dim = c.count("key_dim");
  t.model.value_dim = c.count("value_dim");
  t.model.z_dim = c.count("z_dim");
  t.model.tie_prop_weights = c.flag("tie_weights");
  t.model.prop_identity_init = c.flag("identity_init");
  for (const char* key : {"embed_dim", "n_dim", "m_dim", "key_dim", "value_dim", "z_dim"})
    require(c.count(key) >= 1, std::string(key) + " must be >= 1", key);
  t.epochs = c.count("epochs");
  t.learning_rate = c.real("lr");
  t.beta1 = c.real("beta1");
  t.beta2 = c.real("beta2");
  t.adam_epsilon = c.real("adam_eps");
  t.batch_size = c.count("batch_size");
  t.negative_ratio = c.real("negative_ratio");
  t.seed = c.count("seed");
  const std::string sampling = io::lower(c.get("sampling"));
  if (sampling == "on")
    t.sampling = SamplingMode::On;
  else if (sampling == "off")
    t.sampling = SamplingMode::Off;
  else if (sampling == "auto")
    t.sampling = SamplingMode::Auto;
  else
    throw Error("sampling must be on, off or auto, got '" + c.get("sampling") + "'", "sampling");
  const std::string scope = io::lower(c.get("sample_scope"));
  require(scope == "step" || scope == "batch", "sample_scope must be step or batch", "sample_scope");
  t.sample_scope = scope == "step" ? SampleScope::PerStep : SampleScope::PerBatch;
  t.budget = c.count("budget");
  t.sampling_threshold = c.count("sampling_threshold");
  t.threshold = c.real("threshold");
  t.eval_every = c.count("eval_every");
  t.eval_seed = c.count("eval_seed");
  t.record_wall_time = c.flag("wall_time");
  t.validate();
  return t;
}

inline Dataset load_or_generate(const RunConfig& c) {
  if (!c.get("data").empty()) return read_dataset(c.get("data"));
  return generate(gen_config(c), c.count("eval_seed"));
}

inline json report_json(const EvalReport& r) {
  return {{"roc_auc", r.roc_auc}, {"pr_auc", r.pr_auc},       {"f1", r.f1},
          {"positives", r.positives}, {"negatives", r.negatives}, {"threshold", r.threshold}};
}

inline fs::path prepare_out(const RunConfig& c) {
  const fs::path out = c.get("out");
  require(!out.empty(), "out must name a directory", "out");
  fs::create_directories(out);
  io::write_text(out / "config.txt", c.text());
  return out;
}

inline json cmd_generate(const RunConfig& c) {
  const GenConfig g = gen_config(c);
  const fs::path out = prepare_out(c);
  const Dataset d = generate(g, c.count("eval_seed"));
  write_dataset(d, out);
  json s = {{"command", "generate"}, {"out", out.string()}, {"counts", d.manifest["counts"]}};
  s["oracle_auc"] = d.manifest.value("oracle_auc", json());
  return s;
}

inline json cmd_train(const RunConfig& c) {
  const TrainConfig t = train_config(c, single_k(c));
  const fs::path out = prepare_out(c);
  const auto e = prepare_experiment(load_or_generate(c), t.eval_seed);
  std::string history;
  TrainResult r;
  try {
    r = train_experiment(*e, t, [&](const EpochRecord& rec) {
      history += rec.to_json().dump() + "\n";
      io::write_text(out / "history.jsonl", history);
    });
  } catch (const DivergenceError& err) {
    save_checkpoint(err.last_finite(), out / "model.ckpt");
    throw;
  }
  io::write_text(out / "history.jsonl", history);
  save_checkpoint(r.best, out / "model.ckpt");
  json s = {{"command", "train"},
            {"out", out.string()},
            {"checkpoint", (out / "model.ckpt").string()},
            {"epochs", t.epochs},
            {"best_epoch", r.best_epoch},
            {"sampling", t.sampling_enabled(e->graph.num_nodes())},
            {"config_fingerprint", t.model.fingerprint()}};
  s["val_roc_auc"] = r.history.empty() ? json() : json(r.history[r.best_epoch == 0 ? 0 : r.best_epoch - 1].val_roc_auc);
  return s;
}

inline json cmd_evaluate(const RunConfig& c) {
  const fs::path out = prepare_out(c);
  const auto e = prepare_experiment(load_or_generate(c), c.count("eval_seed"));
  TrainedModel model;
  if (c.get("checkpoint").empty()) {
    model = init_model(train_config(c, single_k(c)).model, e->data.schema, c.count("seed"));
  } else {
    model = load_checkpoint(c.get("checkpoint"));
    require(model.schema == e->data.schema, "checkpoint attribute schema does not match the dataset", "schema");
  }
  const EvalReport r = evaluate_model(model, *e->ctx, e->test, c.real("threshold"));
  json rep = report_json(r);
  rep["split"] = "test";
  rep["config_fingerprint"] = model.config.fingerprint();
  io::write_text(out / "eval_report.json", rep.dump(2) + "\n");
  return {{"command", "evaluate"}, {"out", out.string()}, {"report", rep}};
}

inline json cmd_sweep(const RunConfig& c) {
  std::vector<std::size_t> ks = c.count_list("k");
  if (ks.empty()) ks = kDefaultSweepK;
  std::vector<std::size_t> seeds = c.count_list("seeds");
  if (seeds.empty()) seeds = {c.count("seed")};
  for (std::size_t k : ks) (void)train_config(c, k);  // reject a bad config before any training
  const fs::path out = prepare_out(c);

  std::ostringstream runs, sweep, smooth;
  runs << "k,seed,roc_auc,pr_auc,f1\n";
  sweep << "k,roc_auc,pr_auc,f1\n";
  smooth << "k,seed,plain_cosine,appnp_cosine\n";
  json rows = json::array();
  std::map<std::size_t, std::array<double, 3>> sums;
  for (std::size_t seed : seeds) {
    RunConfig rc = c;
    rc.set("seed", std::to_string(seed));
    const auto e = prepare_experiment(load_or_generate(rc), c.count("eval_seed"));
    for (std::size_t k : ks) {
      const TrainConfig t = train_config(rc, k);
      const TrainResult r = train_experiment(*e, t);
      const EvalReport rep = evaluate_model(r.best, *e->ctx, e->test, t.threshold);
      runs << k << "," << seed << "," << io::format_double(rep.roc_auc) << "," << io::format_double(rep.pr_auc) << ","
           << io::format_double(rep.f1) << "\n";
      auto& s = sums[k];
      s[0] += rep.roc_auc;
      s[1] += rep.pr_auc;
      s[2] += rep.f1;
      if (e->data.truth) {
        const OversmoothingReport o = oversmoothing(*e, predicted_features(*e, r.best), t.model.prop);
        smooth << k << "," << seed << "," << io::format_double(o.plain_cosine) << ","
               << io::format_double(o.appnp_cosine) << "\n";
      }
    }
  }
  const double n = static_cast<double>(seeds.size());
  for (std::size_t k : ks) {
    const auto& s = sums[k];
    sweep << k << "," << io::format_double(s[0] / n) << "," << io::format_double(s[1] / n) << ","
          << io::format_double(s[2] / n) << "\n";
    rows.push_back({{"k", k}, {"roc_auc", s[0] / n}, {"pr_auc", s[1] / n}, {"f1", s[2] / n}});
  }
  io::write_text(out / "sweep.csv", sweep.str());
  io::write_text(out / "sweep_runs.csv", runs.str());
  io::write_text(out / "oversmoothing.csv", smooth.str());
  return {{"command", "sweep-k"}, {"out", out.string()}, {"seeds", seeds}, {"rows", rows}};
}

// Returns the summary and whether the check passed.
inline std::pair<json, bool> cmd_grad_check(const RunConfig& c) {
  const TrainConfig t = train_config(c, single_k(c));
  const fs::path out = prepare_out(c);
  const ModelGradCheck g = check_model_gradients(t.model, c.count("seed"), c.real("fd_step"), c.real("tol"));
  json params = json::array();
  for (std::size_t i = 0; i < g.report.names.size(); ++i)
    params.push_back({{"name", g.report.names[i]},
                      {"rel_error", g.report.rel_error[i]},
                      {"max_entry_error", g.report.max_entry_error[i]},
                      {"excluded", g.report.excluded[i]}});
  json rep = {{"passed", g.report.passed()},
              {"worst", g.report.worst},
              {"tol", g.report.tol},
              {"h", c.real("fd_step")},
              {"init_seed", g.init_seed},
              {"min_abs_preactivation", g.min_abs_preactivation},
              {"nodes", g.num_nodes},
              {"pairs", g.num_pairs},
              {"parameters", params}};
  io::write_text(out / "grad_check.json", rep.dump(2) + "\n");
  return {{{"command", "grad-check"},
           {"out", out.string()},
           {"passed", g.report.passed()},
           {"worst", g.report.worst},
           {"tol", g.report.tol}},
          g.report.passed()};
}

inline json error_json(const std::string& command, const std::string& message, const std::string& field) {
  json e = {{"error", message}, {"command", command}};
  if (!field.empty()) e["field"] = field;
  return e;
}

// Entry point of the hgp tool. Writes one JSON object to `out`; exit status 0
// on success, 1 on a rejected run, 2 on a command-line error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Heterogeneous graph propagation for CTR prediction"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  RunConfig cfg;
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file");
  std::map<std::string, std::string> flags;
  for (const auto& key : cfg.keys()) app.add_option("--" + key, flags[key], cfg.help(key));

  const std::vector<std::string> commands{"generate", "train", "evaluate", "sweep-k", "grad-check"};
  for (const auto& name : commands) app.add_subcommand(name);

  std::string command;
  try {
    app.parse(argc, argv);
    command = app.get_subcommands().front()->get_name();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    out << error_json("", e.what(), "").dump() << "\n";
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (const auto& key : cfg.keys())
      if (app.count("--" + key) > 0) cfg.set(key, flags[key]);
    json summary;
    bool ok = true;
    if (command == "generate")
      summary = cmd_generate(cfg);
    else if (command == "train")
      summary = cmd_train(cfg);
    else if (command == "evaluate")
      summary = cmd_evaluate(cfg);
    else if (command == "sweep-k")
      summary = cmd_sweep(cfg);
    else
      std::tie(summary, ok) = cmd_grad_check(cfg);
    if (!ok) {
      out << error_json(command, "gradient check exceeded tolerance", "tol").dump() << "\n";
      return 1;
    }
    out << summary.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    out << error_json(command, e.what(), e.field()).dump() << "\n";
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    out << error_json(command, e.what(), "").dump() << "\n";
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hgp::cli

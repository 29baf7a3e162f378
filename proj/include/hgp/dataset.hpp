#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hgp/ctr.hpp"
#include "hgp/error.hpp"
#include "hgp/features.hpp"
#include "hgp/hetgraph.hpp"
#include "hgp/metrics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

// Generating probabilities of a synthetic dataset.
struct PlantedTruth {
  std::vector<int> community;  // per global node
  double p_in = 0.0;
  double p_out = 0.0;
};

// Nodes are held in global order: all groups, then users, then items; within
// a type, by ascending external id.
struct Dataset {
  AttributeSchema schema;
  std::vector<NodeType> types;
  std::vector<std::int64_t> external_id;
  AttributeTable attributes;
  std::vector<EdgeSpec> memberships;       // GroupUser
  std::vector<LabeledPair> interactions;   // ItemUser positives with days
  std::optional<PlantedTruth> truth;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t num_nodes() const { return types.size(); }

  std::vector<NodeSpec> node_specs() const {
    std::vector<NodeSpec> out(types.size());
    for (NodeId v = 0; v < types.size(); ++v) out[v] = {v, types[v]};
    return out;
  }
};

// The graph a model sees: all memberships plus the given interactions as
// ItemUser edges. Held-out interactions are left out so they cannot leak.
inline HetGraph build_interaction_graph(const Dataset& d, std::span<const LabeledPair> visible) {
  std::vector<EdgeSpec> edges = d.memberships;
  edges.reserve(edges.size() + visible.size());
  for (const auto& p : visible) edges.push_back({p.item, p.user, EdgeType::ItemUser, p.day});
  const auto nodes = d.node_specs();
  return build_graph(nodes, edges);
}

// Positives labelled 1 followed by ceil(ratio) sampled negatives each.
inline std::vector<LabeledPair> labeled_with_negatives(const HetGraph& g, std::span<const LabeledPair> positives,
                                                       const PairSet& exclude, double ratio, Rng& rng) {
  std::vector<LabeledPair> out(positives.begin(), positives.end());
  for (auto& p : out) p.label = 1;
  auto neg = sample_negatives(g, out, exclude, ratio, rng);
  out.insert(out.end(), neg.begin(), neg.end());
  return out;
}

inline constexpr std::uint64_t kEvalNegativeStream = 0xe7a1;

// Evaluation set for a split: positives plus 1:1 negatives drawn from a fixed
// seed, excluding every known positive.
inline std::vector<LabeledPair> evaluation_pairs(const Dataset& d, const HetGraph& g,
                                                 std::span<const LabeledPair> positives, std::uint64_t eval_seed) {
  const PairSet all = make_pair_set(d.interactions);
  Rng rng = Rng::derive(eval_seed, kEvalNegativeStream);
  return labeled_with_negatives(g, positives, all, 1.0, rng);
}

inline double oracle_score(const PlantedTruth& t, const HetGraph& g, NodeId user, NodeId item) {
  require(user < t.community.size() && user < g.num_nodes() && g.type_of(user) == NodeType::User,
          "oracle_score: unknown user " + std::to_string(user), "user");
  require(item < t.community.size() && item < g.num_nodes() && g.type_of(item) == NodeType::Item,
          "oracle_score: unknown item " + std::to_string(item), "item");
  return t.community[user] == t.community[item] ? t.p_in : t.p_out;
}

inline double oracle_auc(const PlantedTruth& t, const HetGraph& g, std::span<const LabeledPair> labeled) {
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& p : labeled) {
    s.push_back(oracle_score(t, g, p.user, p.item));
    y.push_back(p.label);
  }
  return roc_auc(s, y);
}

// ---------------------------------------------------------------------------
// TSV / JSON files

namespace io {

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::int64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), where + ": expected integer, got '" + s + "'",
          where);
  return v;
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  require(res.ec == std::errc() && res.ptr == s.data() + s.size(), where + ": expected real, got '" + s + "'", where);
  require(std::isfinite(v), where + ": non-finite value", where);
  return v;
}

inline std::string lower(std::string_view s) {
  std::string o(s);
  for (char& c : o) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return o;
}

inline std::string node_file_name(NodeType t) { return "nodes_" + lower(to_string(t)) + ".tsv"; }

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  require(in.good(), "cannot open " + p.string(), p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  require(out.good(), "cannot write " + p.string(), p.string());
  out << text;
  require(out.good(), "write failed for " + p.string(), p.string());
}

inline std::string attribute_header(const AttributeSpec& a) {
  return a.name + (a.kind == AttributeKind::Categorical ? ":cat:" : ":num:") + std::to_string(a.size);
}

inline AttributeSpec parse_attribute_header(const std::string& h, const std::string& where) {
  const auto parts = split(h, ':');
  require(parts.size() == 3 && (parts[1] == "cat" || parts[1] == "num"),
          where + ": attribute column '" + h + "' must look like name:cat:N or name:num:D", where);
  AttributeSpec a;
  a.name = parts[0];
  a.kind = parts[1] == "cat" ? AttributeKind::Categorical : AttributeKind::Numeric;
  const auto size = parse_int(parts[2], where);
  require(size >= 1, where + ": attribute size must be >= 1", where);
  a.size = static_cast<std::size_t>(size);
  return a;
}

}  // namespace io

inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (NodeType t : kNodeTypes) {
    std::ostringstream os;
    os << "node_id";
    for (const auto& a : d.schema.of(t)) os << '\t' << io::attribute_header(a);
    os << '\n';
    for (NodeId v = 0; v < d.num_nodes(); ++v) {
      if (d.types[v] != t) continue;
      os << d.external_id[v];
      for (const auto& val : d.attributes[v]) {
        os << '\t';
        if (const auto* c = std::get_if<std::int64_t>(&val)) {
          os << *c;
        } else {
          const auto& vec = std::get<std::vector<double>>(val);
          for (std::size_t i = 0; i < vec.size(); ++i) os << (i ? "," : "") << io::format_double(vec[i]);
        }
      }
      os << '\n';
    }
    io::write_text(dir / io::node_file_name(t), os.str());
  }

  std::ostringstream es;
  es << "src_type\tsrc_id\tdst_type\tdst_id\tedge_type\ttimestamp\n";
  auto ext = [&](NodeId v) { return d.external_id[v]; };
  for (const auto& e : d.memberships) {
    const NodeId g = d.types[e.u] == NodeType::Group ? e.u : e.v;
    const NodeId u = g == e.u ? e.v : e.u;
    es << "Group\t" << ext(g) << "\tUser\t" << ext(u) << "\tGroupUser\t";
    if (e.timestamp) es << *e.timestamp; else es << '-';
    es << '\n';
  }
  for (const auto& p : d.interactions)
    es << "User\t" << ext(p.user) << "\tItem\t" << ext(p.item) << "\tItemUser\t" << p.day << '\n';
  io::write_text(dir / "edges.tsv", es.str());

  if (d.truth) {
    std::ostringstream ts;
    ts << "node_type\tnode_id\tcommunity\n";
    for (NodeId v = 0; v < d.num_nodes(); ++v)
      ts << to_string(d.types[v]) << '\t' << ext(v) << '\t' << d.truth->community[v] << '\n';
    io::write_text(dir / "truth.tsv", ts.str());
  }
  io::write_text(dir / "manifest.json", d.manifest.dump(2) + "\n");
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), "dataset directory not found: " + dir.string(), dir.string());
  Dataset d;
  // id compaction: per type, ascending external id
  std::array<std::map<std::int64_t, std::vector<AttributeValue>>, kNumNodeTypes> rows;
  for (NodeType t : kNodeTypes) {
    const auto path = dir / io::node_file_name(t);
    const auto lines = io::read_lines(path);
    const std::string fname = path.filename().string();
    require(!lines.empty(), fname + ": missing header", fname);
    const auto header = io::split(lines[0], '\t');
    require(header[0] == "node_id", fname + ": first column must be node_id", fname);
    auto& specs = d.schema.per_type[index_of(t)];
    for (std::size_t c = 1; c < header.size(); ++c) specs.push_back(io::parse_attribute_header(header[c], fname));
    for (std::size_t l = 1; l < lines.size(); ++l) {
      const std::string where = fname + ":" + std::to_string(l + 1);
      const auto cols = io::split(lines[l], '\t');
      require(cols.size() == header.size(), where + ": expected " + std::to_string(header.size()) + " columns", where);
      const auto id = io::parse_int(cols[0], where);
      require(id >= 0, where + ": node ids must be non-negative", where);
      std::vector<AttributeValue> vals;
      for (std::size_t c = 1; c < cols.size(); ++c) {
        const auto& spec = specs[c - 1];
        if (spec.kind == AttributeKind::Categorical) {
          vals.emplace_back(io::parse_int(cols[c], where + " attribute " + spec.name));
        } else {
          std::vector<double> vec;
          for (const auto& part : io::split(cols[c], ','))
            vec.push_back(io::parse_double(part, where + " attribute " + spec.name));
          vals.emplace_back(std::move(vec));
        }
      }
      require(rows[index_of(t)].emplace(id, std::move(vals)).second,
              where + ": duplicate " + std::string(to_string(t)) + " id " + std::to_string(id), where);
    }
  }
  std::array<std::map<std::int64_t, NodeId>, kNumNodeTypes> index;
  for (NodeType t : kNodeTypes)
    for (auto& [id, vals] : rows[index_of(t)]) {
      index[index_of(t)][id] = static_cast<NodeId>(d.types.size());
      d.types.push_back(t);
      d.external_id.push_back(id);
      d.attributes.push_back(std::move(vals));
    }
  auto lookup = [&](NodeType t, std::int64_t id, const std::string& where) {
    const auto& m = index[index_of(t)];
    const auto it = m.find(id);
    require(it != m.end(), where + ": unknown " + std::string(to_string(t)) + " id " + std::to_string(id), where);
    return it->second;
  };

  const auto lines = io::read_lines(dir / "edges.tsv");
  require(!lines.empty(), "edges.tsv: missing header", "edges.tsv");
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const std::string where = "edges.tsv:" + std::to_string(l + 1);
    const auto cols = io::split(lines[l], '\t');
    require(cols.size() == 6, where + ": expected 6 columns", where);
    const NodeType st = parse_node_type(cols[0]);
    const NodeType dt = parse_node_type(cols[2]);
    const NodeId s = lookup(st, io::parse_int(cols[1], where), where);
    const NodeId t = lookup(dt, io::parse_int(cols[3], where), where);
    const EdgeType et = parse_edge_type(cols[4]);
    std::optional<Day> ts;
    if (cols[5] != "-" && !cols[5].empty()) ts = io::parse_int(cols[5], where);
    if (et == EdgeType::GroupUser) {
      d.memberships.push_back({s, t, et, ts});
    } else {
      require(ts.has_value(), where + ": ItemUser rows need a timestamp", where);
      require((st == NodeType::User) != (dt == NodeType::User) &&
                  (st == NodeType::Item || dt == NodeType::Item),
              where + ": ItemUser endpoint types must be User and Item", where);
      const NodeId user = st == NodeType::User ? s : t;
      const NodeId item = st == NodeType::User ? t : s;
      d.interactions.push_back({user, item, 1, *ts});
    }
  }

  if (std::filesystem::exists(dir / "manifest.json")) {
    std::ifstream in(dir / "manifest.json");
    try {
      d.manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("manifest.json: ") + e.what(), "manifest.json");
    }
  }
  if (std::filesystem::exists(dir / "truth.tsv")) {
    PlantedTruth t;
    t.community.assign(d.num_nodes(), -1);
    const auto tl = io::read_lines(dir / "truth.tsv");
    for (std::size_t l = 1; l < tl.size(); ++l) {
      const std::string where = "truth.tsv:" + std::to_string(l + 1);
      const auto cols = io::split(tl[l], '\t');
      require(cols.size() == 3, where + ": expected 3 columns", where);
      const NodeId v = lookup(parse_node_type(cols[0]), io::parse_int(cols[1], where), where);
      t.community[v] = static_cast<int>(io::parse_int(cols[2], where));
    }
    t.p_in = d.manifest.value(nlohmann::json::json_pointer("/config/p_in"), 0.0);
    t.p_out = d.manifest.value(nlohmann::json::json_pointer("/config/p_out"), 0.0);
    d.truth = std::move(t);
  }
  return d;
}

}  // namespace hgp

#pragma once

// Physical nodes, partition plans, hyperconnections and reachability.
//
// Node ids are 0-based and topologically ordered (every hyperconnection goes
// from a lower id to a higher one). The data source is the pseudo-node
// kInputNode (-1); the cloud is always the last id. Labels follow the
// 1-based "n1, n2, ..." convention.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "resilinet/errors.hpp"

namespace resilinet {

inline constexpr int kInputNode = -1;
inline constexpr int kNoNode = -2;
inline constexpr std::size_t kMaxNodes = 64;

inline std::string node_label(int id) { return id == kInputNode ? "i" : "n" + std::to_string(id + 1); }

enum class EdgeKind { Simple, Skip };

struct SkipSpec {
  int src = kInputNode;
  int dst = 0;
  std::optional<int> via;  // bypassed node adjacent to dst; derived when unique

  friend bool operator==(const SkipSpec&, const SkipSpec&) = default;
};

struct PartitionPlan {
  std::string name;
  std::vector<int> layer_counts;  // per node, upstream first; the last node is the cloud
  std::size_t hidden_width = 250;
  std::size_t input_dim = 23;
  std::size_t classes = 12;
  std::vector<std::pair<int, int>> simple_edges;  // empty: plain chain
  std::vector<SkipSpec> skips;

  std::size_t node_count() const { return layer_counts.size(); }
  int total_hidden_layers() const {
    int s = 0;
    for (int c : layer_counts) s += c;
    return s;
  }
};

struct PhysicalNode {
  int id = 0;
  std::vector<std::size_t> hosted_layers;  // output width of each hosted layer
  int depth = 0;
  bool is_cloud = false;
  std::size_t input_dim = 0;

  std::size_t output_dim() const { return hosted_layers.back(); }
  std::string label() const { return node_label(id); }
};

struct Hyperconnection {
  int src = kInputNode;
  int dst = 0;
  EdgeKind kind = EdgeKind::Simple;
  int via = kNoNode;  // Skip only
  int span = 0;       // Skip only: number of bypassed nodes
  std::size_t payload_dim = 0;
  std::size_t dst_dim = 0;

  bool needs_projection() const { return payload_dim != dst_dim; }
};

/// A simple hyperconnection together with the skip hyperconnections that
/// back it up, nearest detour first.
struct InputSlot {
  std::size_t primary = 0;
  std::vector<std::size_t> detours;
};

/// Per-node alive bits. INPUT is implicit and always alive; the cloud bit
/// is forced on by every constructor.
enum class MaskOrigin { FailoutDraw, ScenarioEnum, SimEvent, Manual };

class AliveMask {
public:
  AliveMask() = default;
  AliveMask(std::size_t node_count, std::uint64_t alive_bits, MaskOrigin origin = MaskOrigin::Manual)
      : bits_(alive_bits & full(node_count)), nodes_(node_count), origin_(origin) {
    if (node_count == 0 || node_count > kMaxNodes) throw DimensionError("AliveMask: bad node count");
    bits_ |= cloud_bit();
  }

  static AliveMask all_alive(std::size_t node_count, MaskOrigin origin = MaskOrigin::Manual) {
    return AliveMask(node_count, ~std::uint64_t{0}, origin);
  }

  /// Every node alive except the listed ids.
  static AliveMask with_failed(std::size_t node_count, const std::vector<int>& failed,
                               MaskOrigin origin = MaskOrigin::Manual) {
    std::uint64_t b = full(node_count);
    for (int f : failed) b &= ~(std::uint64_t{1} << f);
    return AliveMask(node_count, b, origin);
  }

  bool alive(int node) const {
    if (node == kInputNode) return true;
    return (bits_ >> node) & 1U;
  }
  void set_alive(int node, bool up) {
    if (node < 0 || static_cast<std::size_t>(node) >= nodes_) throw DimensionError("AliveMask: node out of range");
    if (up)
      bits_ |= std::uint64_t{1} << node;
    else
      bits_ &= ~(std::uint64_t{1} << node);
    bits_ |= cloud_bit();
  }

  std::size_t node_count() const { return nodes_; }
  std::uint64_t bits() const { return bits_; }
  MaskOrigin origin() const { return origin_; }
  std::size_t failed_count() const {
    return nodes_ - static_cast<std::size_t>(std::popcount(bits_));
  }

  std::vector<int> failed_nodes() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes_; ++i)
      if (!alive(static_cast<int>(i))) out.push_back(static_cast<int>(i));
    return out;
  }

  /// "None" or the failing set, e.g. "n1,n3".
  std::string label() const {
    std::string s;
    for (int f : failed_nodes()) {
      if (!s.empty()) s += ",";
      s += node_label(f);
    }
    return s.empty() ? "None" : s;
  }

  friend bool operator==(const AliveMask& a, const AliveMask& b) {
    return a.bits_ == b.bits_ && a.nodes_ == b.nodes_;
  }

private:
  static std::uint64_t full(std::size_t n) {
    return n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1;
  }
  std::uint64_t cloud_bit() const { return nodes_ == 0 ? 0 : std::uint64_t{1} << (nodes_ - 1); }

  std::uint64_t bits_ = 0;
  std::size_t nodes_ = 0;
  MaskOrigin origin_ = MaskOrigin::Manual;
};

/// Per-node failure probabilities, stored deepest-first (cloud first) as in
/// the experiment tables.
struct FailureSetting {
  std::string name = "custom";
  std::vector<double> probs;

  std::size_t node_count() const { return probs.size(); }

  double failure_prob(int node) const {
    if (node == kInputNode) return 0.0;
    return probs.at(probs.size() - 1 - static_cast<std::size_t>(node));
  }
  /// r_i = 1 - p_i; INPUT has r = 1.
  double reliability(int node) const { return 1.0 - failure_prob(node); }

  void validate() const {
    std::vector<std::string> errs;
    if (probs.empty()) errs.emplace_back("failure_setting.probs: empty");
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
        errs.push_back("failure_setting.probs[" + std::to_string(i) + "]: not in [0,1]");
    if (!probs.empty() && probs.front() != 0.0)
      errs.emplace_back("failure_setting.probs[0]: cloud failure probability must be 0");
    if (!errs.empty()) throw ValidationError(errs);
  }

  /// Normal / Poor / Hazardous for 4-node (MLP) and 3-node chains.
  static FailureSetting named(std::string name, std::size_t node_count) {
    std::string key;
    for (char c : name) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    static const std::map<std::pair<std::string, std::size_t>, std::vector<double>> table = {
        {{"normal", 4}, {0.0, 0.01, 0.04, 0.08}},
        {{"poor", 4}, {0.0, 0.05, 0.09, 0.13}},
        {{"hazardous", 4}, {0.0, 0.15, 0.20, 0.22}},
        {{"normal", 3}, {0.0, 0.02, 0.04}},
        {{"poor", 3}, {0.0, 0.05, 0.10}},
        {{"hazardous", 3}, {0.0, 0.15, 0.20}},
    };
    if (key == "none" || key == "nofailure" || key == "no-failure")
      return FailureSetting{"NoFailure", std::vector<double>(node_count, 0.0)};
    auto it = table.find({key, node_count});
    if (it == table.end())
      throw ValidationError("failure_setting: no preset '" + name + "' for " +
                            std::to_string(node_count) + " nodes");
    std::string pretty = key;
    pretty[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(pretty[0])));
    return FailureSetting{pretty, it->second};
  }
};

class Topology {
public:
  const std::string& name() const { return name_; }
  const std::vector<PhysicalNode>& nodes() const { return nodes_; }
  const std::vector<Hyperconnection>& edges() const { return edges_; }
  const PhysicalNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t node_count() const { return nodes_.size(); }
  int cloud() const { return static_cast<int>(nodes_.size()) - 1; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t classes() const { return classes_; }
  const std::vector<InputSlot>& slots(int node) const { return slots_.at(static_cast<std::size_t>(node)); }
  const std::vector<std::size_t>& incoming(int node) const {
    return incoming_.at(static_cast<std::size_t>(node));
  }
  std::size_t output_dim(int src) const {
    return src == kInputNode ? input_dim_ : node(src).output_dim();
  }
  std::vector<std::size_t> skip_edges() const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].kind == EdgeKind::Skip) out.push_back(e);
    return out;
  }

  /// Validates the plan and resolves depths, dimensions and detour slots.
  static Topology from_plan(const PartitionPlan& plan);

private:
  std::string name_;
  std::vector<PhysicalNode> nodes_;
  std::vector<Hyperconnection> edges_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::vector<std::vector<InputSlot>> slots_;
  std::size_t input_dim_ = 0;
  std::size_t classes_ = 0;
};

inline std::vector<std::pair<int, int>> chain_edges(std::size_t node_count) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < static_cast<int>(node_count); ++i) e.emplace_back(i - 1, i);
  return e;
}

/// All span-1 skips of a chain: INPUT->n2, n1->n3, ...
inline std::vector<SkipSpec> chain_skips(std::size_t node_count) {
  std::vector<SkipSpec> s;
  for (int dst = 1; dst < static_cast<int>(node_count); ++dst) s.push_back({dst - 2, dst, std::nullopt});
  return s;
}

inline Topology Topology::from_plan(const PartitionPlan& plan) {
  std::vector<std::string> errs;
  const auto v = plan.layer_counts.size();
  if (v == 0) throw ValidationError("partition: at least one node required");
  if (v > kMaxNodes) throw ValidationError("partition: more than 64 nodes");
  for (std::size_t i = 0; i < v; ++i) {
    const bool cloud = i + 1 == v;
    if (plan.layer_counts[i] < (cloud ? 0 : 1))
      errs.push_back("partition[" + std::to_string(i) + "]: node " + node_label(static_cast<int>(i)) +
                     " hosts no layers");
  }
  if (plan.hidden_width == 0) errs.emplace_back("hidden_width: must be >= 1");
  if (plan.input_dim == 0) errs.emplace_back("input_dim: must be >= 1");
  if (plan.classes < 2) errs.emplace_back("classes: must be >= 2");

  const int nv = static_cast<int>(v);
  const auto simple = plan.simple_edges.empty() ? chain_edges(v) : plan.simple_edges;
  std::set<std::pair<int, int>> seen;
  std::vector<std::vector<int>> parents(v), children(v + 1);  // children index shifted by 1 for INPUT
  for (auto [s, d] : simple) {
    const std::string tag = "simple_edges[" + std::to_string(s) + "," + std::to_string(d) + "]";
    if (s < kInputNode || s >= nv - 1 || d < 0 || d >= nv || s >= d) {
      errs.push_back(tag + ": endpoints out of range or not upstream->downstream");
      continue;
    }
    if (!seen.insert({s, d}).second) {
      errs.push_back(tag + ": duplicate");
      continue;
    }
    parents[static_cast<std::size_t>(d)].push_back(s);
    children[static_cast<std::size_t>(s + 1)].push_back(d);
  }
  if (!errs.empty()) throw ValidationError(errs);

  Topology t;
  t.name_ = plan.name;
  t.input_dim_ = plan.input_dim;
  t.classes_ = plan.classes;
  t.nodes_.resize(v);
  for (int i = 0; i < nv; ++i) {
    auto& n = t.nodes_[static_cast<std::size_t>(i)];
    n.id = i;
    n.is_cloud = i == nv - 1;
    const auto& ps = parents[static_cast<std::size_t>(i)];
    if (ps.empty()) {
      errs.push_back("node " + node_label(i) + ": no incoming simple hyperconnection");
      continue;
    }
    if (!n.is_cloud && children[static_cast<std::size_t>(i + 1)].empty())
      errs.push_back("node " + node_label(i) + ": no outgoing simple hyperconnection");
    const auto depth_of = [&](int p) { return p == kInputNode ? -1 : t.nodes_[static_cast<std::size_t>(p)].depth; };
    const auto dim_of = [&](int p) { return p == kInputNode ? plan.input_dim : plan.hidden_width; };
    n.depth = depth_of(ps.front()) + 1;
    n.input_dim = dim_of(ps.front());
    for (int p : ps) {
      if (depth_of(p) + 1 != n.depth)
        errs.push_back("node " + node_label(i) + ": simple parents at different depths");
      if (dim_of(p) != n.input_dim)
        errs.push_back("node " + node_label(i) + ": simple parents carry different dimensions");
    }
    for (int l = 0; l < plan.layer_counts[static_cast<std::size_t>(i)]; ++l)
      n.hosted_layers.push_back(plan.hidden_width);
    if (n.is_cloud) n.hosted_layers.push_back(plan.classes);
  }
  if (!errs.empty()) throw ValidationError(errs);
  for (int i = 0; i + 1 < nv; ++i)
    if (t.nodes_[static_cast<std::size_t>(i)].depth >= t.nodes_.back().depth)
      errs.push_back("node " + node_label(i) + ": not shallower than the cloud");

  for (auto [s, d] : simple) {
    Hyperconnection h;
    h.src = s;
    h.dst = d;
    h.kind = EdgeKind::Simple;
    h.payload_dim = s == kInputNode ? plan.input_dim : plan.hidden_width;
    h.dst_dim = t.nodes_[static_cast<std::size_t>(d)].input_dim;
    t.edges_.push_back(h);
  }

  // descendants via simple edges, for via resolution
  const auto reaches = [&](int from, int to) {
    std::vector<int> stack{from};
    std::set<int> vis;
    while (!stack.empty()) {
      int c = stack.back();
      stack.pop_back();
      if (c == to) return true;
      if (!vis.insert(c).second) continue;
      for (int ch : children[static_cast<std::size_t>(c + 1)]) stack.push_back(ch);
    }
    return false;
  };

  std::set<std::pair<int, int>> seen_skips;
  for (const auto& sk : plan.skips) {
    const std::string tag = "skips[" + std::to_string(sk.src) + "," + std::to_string(sk.dst) + "]";
    if (sk.src < kInputNode || sk.src >= nv) {
      errs.push_back(tag + ": source out of range");
      continue;
    }
    if (sk.src == nv - 1) {
      errs.push_back(tag + ": the cloud cannot be a skip source");
      continue;
    }
    if (sk.dst < 0 || sk.dst >= nv) {
      errs.push_back(tag + ": destination crosses the cloud");
      continue;
    }
    if (!seen_skips.insert({sk.src, sk.dst}).second) {
      errs.push_back(tag + ": duplicate");
      continue;
    }
    const int src_depth = sk.src == kInputNode ? -1 : t.nodes_[static_cast<std::size_t>(sk.src)].depth;
    const int dst_depth = t.nodes_[static_cast<std::size_t>(sk.dst)].depth;
    const int span = dst_depth - src_depth - 1;
    if (span < 1) {
      errs.push_back(tag + ": span " + std::to_string(span) + " < 1");
      continue;
    }
    std::vector<int> candidates;
    for (int p : parents[static_cast<std::size_t>(sk.dst)])
      if (p != kInputNode && reaches(sk.src, p)) candidates.push_back(p);
    int via = kNoNode;
    if (sk.via) {
      if (std::find(candidates.begin(), candidates.end(), *sk.via) == candidates.end()) {
        errs.push_back(tag + ": via " + node_label(*sk.via) + " is not a bypassed parent of the destination");
        continue;
      }
      via = *sk.via;
    } else if (candidates.size() == 1) {
      via = candidates.front();
    } else {
      errs.push_back(tag + (candidates.empty() ? ": bypasses no node" : ": ambiguous bypassed node, give via"));
      continue;
    }
    Hyperconnection h;
    h.src = sk.src;
    h.dst = sk.dst;
    h.kind = EdgeKind::Skip;
    h.via = via;
    h.span = span;
    h.payload_dim = sk.src == kInputNode ? plan.input_dim : plan.hidden_width;
    h.dst_dim = t.nodes_[static_cast<std::size_t>(sk.dst)].input_dim;
    t.edges_.push_back(h);
  }
  if (!errs.empty()) throw ValidationError(errs);

  t.incoming_.resize(v);
  t.slots_.resize(v);
  for (std::size_t e = 0; e < t.edges_.size(); ++e) {
    const auto& h = t.edges_[e];
    t.incoming_[static_cast<std::size_t>(h.dst)].push_back(e);
    if (h.kind == EdgeKind::Simple) t.slots_[static_cast<std::size_t>(h.dst)].push_back({e, {}});
  }
  for (std::size_t e = 0; e < t.edges_.size(); ++e) {
    const auto& h = t.edges_[e];
    if (h.kind != EdgeKind::Skip) continue;
    for (auto& slot : t.slots_[static_cast<std::size_t>(h.dst)])
      if (t.edges_[slot.primary].src == h.via) slot.detours.push_back(e);
  }
  for (auto& node_slots : t.slots_)
    for (auto& slot : node_slots)
      std::stable_sort(slot.detours.begin(), slot.detours.end(), [&](std::size_t a, std::size_t b) {
        return t.edges_[a].span < t.edges_[b].span;
      });
  return t;
}

/// True iff the cloud can be reached from INPUT through alive nodes, using
/// simple hyperconnections and (when use_skips) skip hyperconnections whose
/// endpoints are both alive.
inline bool reachability(const Topology& topo, const AliveMask& mask, bool use_skips = true) {
  if (mask.node_count() != topo.node_count()) throw DimensionError("reachability: mask size mismatch");
  std::vector<char> present(topo.node_count(), 0);
  const auto has = [&](int src) { return src == kInputNode || present[static_cast<std::size_t>(src)]; };
  for (int n = 0; n < static_cast<int>(topo.node_count()); ++n) {
    if (!mask.alive(n)) continue;
    for (auto e : topo.incoming(n)) {
      const auto& h = topo.edges()[e];
      if (h.kind == EdgeKind::Skip && !use_skips) continue;
      if (has(h.src)) {
        present[static_cast<std::size_t>(n)] = 1;
        break;
      }
    }
  }
  return present.back() != 0;
}

namespace presets {

inline PartitionPlan chain(std::string name, std::vector<int> counts, std::size_t width,
                           std::size_t input_dim, std::size_t classes) {
  PartitionPlan p;
  p.name = std::move(name);
  p.layer_counts = std::move(counts);
  p.hidden_width = width;
  p.input_dim = input_dim;
  p.classes = classes;
  p.skips = chain_skips(p.layer_counts.size());
  return p;
}

/// Ten hidden layers of width 250 over four nodes (1, 2, 3, 4 layers),
/// 23 input features, 12 classes, skips INPUT->n2, n1->n3, n2->n4.
inline PartitionPlan health() { return chain("health", {1, 2, 3, 4}, 250, 23, 12); }

/// Three-node chain with two skips (INPUT->n2, n1->n3).
inline PartitionPlan chain3() { return chain("chain3", {1, 2, 3}, 64, 23, 12); }

inline PartitionPlan health_alt() { return chain("1-2-3-2-3", {1, 2, 3, 2, 3}, 250, 23, 12); }

inline PartitionPlan chain4_alt() { return chain("2-2-4-6", {2, 2, 4, 6}, 250, 23, 12); }

/// (a) the failing node n2 is the only child of n1 and has one child.
inline PartitionPlan config_a() {
  PartitionPlan p = chain("config-a", {1, 1, 1}, 32, 23, 12);
  p.skips = {{0, 2, std::nullopt}};
  return p;
}

/// (b) the failing node n2 shares its parent n1 with n3; the cloud joins n2
/// and n3 with ⊕ and backs n2 up with a skip from n1.
inline PartitionPlan config_b() {
  PartitionPlan p;
  p.name = "config-b";
  p.layer_counts = {1, 1, 1, 1};
  p.hidden_width = 32;
  p.input_dim = 23;
  p.classes = 12;
  p.simple_edges = {{-1, 0}, {0, 1}, {0, 2}, {1, 3}, {2, 3}};
  p.skips = {{0, 3, 1}};
  return p;
}

/// (c) the failing node n2 is n1's only child and feeds two children.
inline PartitionPlan config_c() {
  PartitionPlan p;
  p.name = "config-c";
  p.layer_counts = {1, 1, 1, 1, 1};
  p.hidden_width = 32;
  p.input_dim = 23;
  p.classes = 12;
  p.simple_edges = {{-1, 0}, {0, 1}, {1, 2}, {1, 3}, {2, 4}, {3, 4}};
  p.skips = {{0, 2, std::nullopt}, {0, 3, std::nullopt}};
  return p;
}

}  // namespace presets

inline std::vector<PartitionPlan> canonical_configs() {
  return {presets::config_a(),   presets::config_b(),   presets::config_c(), presets::health(),
          presets::chain3(),     presets::health_alt(), presets::chain4_alt()};
}

inline PartitionPlan preset_plan(const std::string& name) {
  for (auto& p : canonical_configs())
    if (p.name == name) return p;
  throw ValidationError("plan: unknown preset '" + name + "'");
}

}  // namespace resilinet

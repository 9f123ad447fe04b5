#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "resilinet/topology.hpp"

using namespace resilinet;

namespace {

// Oracle: depth-first search over the raw plan edges, independent of the
// Topology adjacency lists.
bool oracle_reaches_cloud(const PartitionPlan& p, std::uint64_t alive_bits, bool skips) {
  const int v = static_cast<int>(p.node_count());
  std::vector<std::pair<int, int>> edges = p.simple_edges;
  if (edges.empty())
    for (int i = 0; i < v; ++i) edges.emplace_back(i - 1, i);
  if (skips)
    for (const auto& s : p.skips) edges.emplace_back(s.src, s.dst);
  auto up = [&](int n) { return n == -1 || n == v - 1 || ((alive_bits >> n) & 1U); };
  std::set<int> seen;
  std::function<bool(int)> dfs = [&](int n) {
    if (n == v - 1) return true;
    if (!seen.insert(n).second) return false;
    for (auto [s, d] : edges)
      if (s == n && up(d) && dfs(d)) return true;
    return false;
  };
  return dfs(-1);
}

std::vector<std::string> violations_of(const PartitionPlan& p) {
  try {
    Topology::from_plan(p);
  } catch (const ValidationError& e) {
    return e.violations();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Presets, HealthShape) {
  auto t = Topology::from_plan(presets::health());
  ASSERT_EQ(t.node_count(), 4u);
  EXPECT_EQ(t.cloud(), 3);
  EXPECT_EQ(t.node(0).hosted_layers.size(), 1u);
  EXPECT_EQ(t.node(1).hosted_layers.size(), 2u);
  EXPECT_EQ(t.node(2).hosted_layers.size(), 3u);
  EXPECT_EQ(t.node(3).hosted_layers.size(), 5u);  // four hidden plus logits
  EXPECT_EQ(t.node(3).hosted_layers.back(), 12u);
  EXPECT_EQ(t.node(0).input_dim, 23u);
  EXPECT_EQ(t.node(1).input_dim, 250u);
  EXPECT_EQ(t.edges().size(), 7u);
  EXPECT_EQ(t.skip_edges().size(), 3u);
  int hidden = 0;
  for (const auto& n : t.nodes()) hidden += static_cast<int>(n.hosted_layers.size());
  EXPECT_EQ(hidden - 1, 10);
}

TEST(Presets, HealthSkipsAndVias) {
  auto t = Topology::from_plan(presets::health());
  std::set<std::tuple<int, int, int>> got;
  for (auto e : t.skip_edges()) {
    const auto& h = t.edges()[e];
    EXPECT_EQ(h.span, 1);
    got.insert({h.src, h.dst, h.via});
  }
  std::set<std::tuple<int, int, int>> want{{-1, 1, 0}, {0, 2, 1}, {1, 3, 2}};
  EXPECT_EQ(got, want);
  // INPUT->n2 carries 23 features into a 250-wide node: needs a projection.
  for (auto e : t.skip_edges())
    EXPECT_EQ(t.edges()[e].needs_projection(), t.edges()[e].src == kInputNode);
}

TEST(Presets, Chain3) {
  auto t = Topology::from_plan(presets::chain3());
  EXPECT_EQ(t.node_count(), 3u);
  EXPECT_EQ(t.skip_edges().size(), 2u);
}

TEST(Presets, CanonicalConfigsAllValid) {
  for (const auto& p : canonical_configs()) {
    EXPECT_NO_THROW(Topology::from_plan(p)) << p.name;
    EXPECT_EQ(preset_plan(p.name).name, p.name);
  }
  EXPECT_THROW(preset_plan("nope"), ValidationError);
}

TEST(Presets, ConfigBSlotHasDetourOnlyForFailingBranch) {
  auto t = Topology::from_plan(presets::config_b());
  const auto& slots = t.slots(3);
  ASSERT_EQ(slots.size(), 2u);
  for (const auto& s : slots) {
    const int src = t.edges()[s.primary].src;
    EXPECT_EQ(s.detours.size(), src == 1 ? 1u : 0u);
  }
}

TEST(Presets, ConfigCHasTwoDetours) {
  auto t = Topology::from_plan(presets::config_c());
  EXPECT_EQ(t.slots(2).front().detours.size(), 1u);
  EXPECT_EQ(t.slots(3).front().detours.size(), 1u);
}

TEST(Validation, CloudAsSkipSource) {
  auto p = presets::health();
  p.skips.push_back({3, 3, std::nullopt});
  EXPECT_TRUE(any_contains(violations_of(p), "cloud cannot be a skip source"));
}

TEST(Validation, SkipDestinationCrossingCloud) {
  auto p = presets::health();
  p.skips.push_back({2, 4, std::nullopt});
  EXPECT_TRUE(any_contains(violations_of(p), "destination crosses the cloud"));
}

TEST(Validation, SpanBelowOne) {
  auto p = presets::health();
  p.skips.push_back({1, 2, std::nullopt});
  EXPECT_TRUE(any_contains(violations_of(p), "span 0 < 1"));
}

TEST(Validation, EmptyNode) {
  auto p = presets::health();
  p.layer_counts[1] = 0;
  EXPECT_TRUE(any_contains(violations_of(p), "hosts no layers"));
}

TEST(Validation, CollectsEveryViolation) {
  auto p = presets::health();
  p.layer_counts[0] = 0;
  p.layer_counts[2] = 0;
  p.classes = 1;
  EXPECT_GE(violations_of(p).size(), 3u);
}

TEST(Validation, AmbiguousViaNeedsExplicitNode) {
  auto p = presets::config_b();
  p.skips = {{0, 3, std::nullopt}};
  EXPECT_TRUE(any_contains(violations_of(p), "ambiguous"));
  p.skips = {{0, 3, 0}};
  EXPECT_TRUE(any_contains(violations_of(p), "not a bypassed parent"));
}

TEST(Reachability, HealthAllEightMasksAgainstOracle) {
  const auto plan = presets::health();
  auto t = Topology::from_plan(plan);
  int reachable = 0;
  for (std::uint64_t b = 0; b < 8; ++b) {
    AliveMask m(4, b);
    const bool got = reachability(t, m);
    EXPECT_EQ(got, oracle_reaches_cloud(plan, b, true)) << m.label();
    EXPECT_EQ(reachability(t, m, false), oracle_reaches_cloud(plan, b, false)) << m.label();
    reachable += got;
  }
  // Two adjacent failures among n1..n3 disconnect the chain: {n1,n2}, {n2,n3}, all three.
  EXPECT_EQ(reachable, 5);
  EXPECT_FALSE(reachability(t, AliveMask::with_failed(4, {0, 1})));
  EXPECT_TRUE(reachability(t, AliveMask::with_failed(4, {0, 2})));
}

TEST(Reachability, MonotoneInAliveSet) {
  for (const auto& plan : canonical_configs()) {
    auto t = Topology::from_plan(plan);
    const auto v = t.node_count();
    const std::uint64_t full = (std::uint64_t{1} << v) - 1;
    for (std::uint64_t a = 0; a <= full; ++a)
      for (std::uint64_t extra = 0; extra <= full; ++extra) {
        const std::uint64_t b = a | extra;
        if (reachability(t, AliveMask(v, a))) EXPECT_TRUE(reachability(t, AliveMask(v, b))) << plan.name;
      }
  }
}

TEST(Reachability, CanonicalConfigsMatchOracle) {
  for (const auto& plan : canonical_configs()) {
    auto t = Topology::from_plan(plan);
    const auto v = t.node_count();
    for (std::uint64_t b = 0; b < (std::uint64_t{1} << v); ++b)
      for (bool sk : {true, false})
        EXPECT_EQ(reachability(t, AliveMask(v, b), sk), oracle_reaches_cloud(plan, b, sk)) << plan.name;
  }
}

TEST(AliveMaskTest, CloudForcedAlive) {
  AliveMask m(4, 0);
  EXPECT_TRUE(m.alive(3));
  m.set_alive(3, false);
  EXPECT_TRUE(m.alive(3));
  EXPECT_TRUE(m.alive(kInputNode));
  EXPECT_EQ(m.failed_count(), 3u);
  EXPECT_EQ(m.label(), "n1,n2,n3");
  EXPECT_EQ(AliveMask::all_alive(4).label(), "None");
  EXPECT_THROW(m.set_alive(4, true), DimensionError);
}

TEST(FailureSettings, PresetsAreDeepestFirst) {
  auto n = FailureSetting::named("Normal", 4);
  EXPECT_DOUBLE_EQ(n.failure_prob(3), 0.0);
  EXPECT_DOUBLE_EQ(n.failure_prob(2), 0.01);
  EXPECT_DOUBLE_EQ(n.failure_prob(1), 0.04);
  EXPECT_DOUBLE_EQ(n.failure_prob(0), 0.08);
  EXPECT_DOUBLE_EQ(n.reliability(0), 0.92);
  EXPECT_DOUBLE_EQ(n.reliability(kInputNode), 1.0);
  auto h = FailureSetting::named("hazardous", 3);
  EXPECT_DOUBLE_EQ(h.failure_prob(0), 0.20);
  EXPECT_DOUBLE_EQ(h.failure_prob(1), 0.15);
  EXPECT_THROW(FailureSetting::named("normal", 5), ValidationError);
  for (const auto* name : {"normal", "poor", "hazardous"})
    for (std::size_t v : {3u, 4u}) EXPECT_NO_THROW(FailureSetting::named(name, v).validate());
}

TEST(FailureSettings, CloudMustNotFail) {
  FailureSetting s{"x", {0.1, 0.2}};
  EXPECT_THROW(s.validate(), ValidationError);
  FailureSetting bad{"x", {0.0, 1.5}};
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Labels, NodeLabels) {
  EXPECT_EQ(node_label(kInputNode), "i");
  EXPECT_EQ(node_label(0), "n1");
  EXPECT_EQ(node_label(2), "n3");
}

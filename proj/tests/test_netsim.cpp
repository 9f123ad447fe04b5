#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "resilinet/netsim.hpp"

using namespace resilinet;

namespace {

SplitDataset small_data(std::size_t per_class = 10) {
  SyntheticSpec spec;
  spec.samples_per_class = per_class;
  auto ds = generate_synthetic(spec);
  normalize_with_train_stats(ds);
  return ds;
}

PartitionPlan small_health() {
  auto p = presets::health();
  p.hidden_width = 8;
  return p;
}

}  // namespace

TEST(Bandwidth, HealthNoFailure) {
  const auto t = Topology::from_plan(presets::health());
  const auto all = AliveMask::all_alive(4);
  // d + 3w along the chain; DFG adds the skips d + 2w.
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::ResiliNet, all), 23u + 3 * 250u);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::ResiliNet, all), 773u);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::Vanilla, all), 773u);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::DFG, all), 1296u);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::ResiliNetPlus, all), 1296u);
  EXPECT_NEAR(bandwidth_savings(t) * 100, 40.35, 0.005);
}

TEST(Bandwidth, DetourUnderFailure) {
  const auto t = Topology::from_plan(presets::health());
  // n2 down: i->n1, n1->n3 (skip), n3->n4.
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::ResiliNet, AliveMask::with_failed(4, {1})), 523u);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::Vanilla, AliveMask::with_failed(4, {1})), 23u);
}

TEST(Bandwidth, Chain3DifferenceIsInputPlusWidth) {
  const auto t = Topology::from_plan(presets::chain3());
  const auto all = AliveMask::all_alive(3);
  EXPECT_EQ(bandwidth_per_inference(t, SchemeKind::DFG, all) - bandwidth_per_inference(t, SchemeKind::ResiliNet, all),
            23u + 64u);
}

TEST(Netsim, AvailabilityMatchesMtbfOverMtbfPlusMttr) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 1);
  auto cfg = SimConfig::uniform(4, 3521, 71);
  cfg.horizon_hours = 1e7;
  cfg.request_rate_per_hour = 0;
  const auto rep = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  const double analytic = 3521.0 / (3521.0 + 71.0);
  EXPECT_NEAR(analytic, 0.98023, 1e-5);
  for (int n = 0; n < 3; ++n) {
    EXPECT_NEAR(rep.availability[static_cast<std::size_t>(n)], analytic, 0.005);
    EXPECT_DOUBLE_EQ(rep.analytic_availability[static_cast<std::size_t>(n)], analytic);
  }
  EXPECT_EQ(rep.availability[3], 1.0);
}

TEST(Netsim, EveryDetectionLatencyWithinOneInterval) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 1);
  auto cfg = SimConfig::uniform(4, 2.0, 0.5);
  cfg.horizon_hours = 2000;
  cfg.request_rate_per_hour = 0;
  cfg.heartbeat_interval_s = 1.0;
  cfg.timeout_intervals = 3.0;
  cfg.record_trace = true;
  const auto rep = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  ASSERT_GT(rep.detections, 100u);
  std::map<int, double> crashed_at;
  std::size_t checked = 0;
  for (const auto& r : rep.trace) {
    if (r.kind == EventKind::Crash) crashed_at[r.node] = r.time;
    if (r.kind == EventKind::Repair) crashed_at.erase(r.node);
    if (r.kind == EventKind::HeartbeatTick && crashed_at.count(r.node)) {
      const double lat_s = (r.time - crashed_at[r.node]) * 3600.0;
      EXPECT_GE(lat_s, 2.0 - 1e-6);
      EXPECT_LE(lat_s, 3.0 + 1e-6);
      crashed_at.erase(r.node);
      ++checked;
    }
  }
  EXPECT_EQ(checked, rep.detections);
  EXPECT_GE(rep.mean_detection_latency_s, 2.0);
  EXPECT_LE(rep.mean_detection_latency_s, 3.0);
}

TEST(Netsim, NoFailuresGivesCleanAccuracy) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 2);
  auto cfg = SimConfig::uniform(4, kNever, 1.0);
  cfg.horizon_hours = static_cast<double>(ds.test.size() * 3);
  const auto rep = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  const double clean = evaluate_scenario(model, AliveMask::all_alive(4), ds.test, Scheme{SchemeKind::ResiliNet});
  EXPECT_EQ(rep.requests, ds.test.size() * 3);
  EXPECT_EQ(rep.crashes, 0u);
  EXPECT_DOUBLE_EQ(rep.accuracy(), clean);
  EXPECT_NEAR(rep.traffic.savings_vs_dfg(), bandwidth_savings(model.topology), 1e-12);
  std::size_t wsum = 0;
  for (const auto& w : rep.windows) wsum += w.requests;
  EXPECT_EQ(wsum, rep.requests);
}

TEST(Netsim, UndetectedCrashesLoseRequests) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 3);
  auto cfg = SimConfig::uniform(4, 0.02, 0.01);
  cfg.horizon_hours = 50;
  cfg.request_rate_per_hour = 3600;
  cfg.timeout_intervals = 5;
  const auto rep = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  EXPECT_GT(rep.requests_lost, 0u);
  EXPECT_LE(rep.requests_lost, rep.requests_undetected);
  EXPECT_LE(rep.requests_undetected, rep.requests);
}

TEST(Netsim, DeterministicForFixedSeed) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 4);
  auto cfg = SimConfig::uniform(4, 5, 1);
  cfg.horizon_hours = 500;
  cfg.request_rate_per_hour = 20;
  cfg.record_trace = true;
  const auto a = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  const auto b = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  EXPECT_EQ(a.availability, b.availability);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(trace_to_lines(a.trace), trace_to_lines(b.trace));
  cfg.seed = 2;
  const auto c = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  EXPECT_NE(trace_to_lines(a.trace), trace_to_lines(c.trace));
}

TEST(Netsim, ZeroHorizonIsEmpty) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 4);
  auto cfg = SimConfig::uniform(4, 5, 1);
  cfg.horizon_hours = 0;
  const auto rep = run_sim(cfg, model, Scheme{SchemeKind::ResiliNet}, ds.test);
  EXPECT_EQ(rep.requests, 0u);
  EXPECT_EQ(rep.crashes, 0u);
}

TEST(Netsim, ValidatesConfig) {
  const auto ds = small_data();
  const auto model = build_model<float>(small_health(), 4);
  auto cfg = SimConfig::uniform(3, 5, 1);
  EXPECT_THROW(run_sim(cfg, model, Scheme{}, ds.test), ValidationError);
  cfg = SimConfig::uniform(4, -1, 1);
  EXPECT_THROW(run_sim(cfg, model, Scheme{}, ds.test), ValidationError);
  cfg = SimConfig::uniform(4, 5, 1);
  cfg.timeout_intervals = 1;
  EXPECT_THROW(run_sim(cfg, model, Scheme{}, ds.test), ValidationError);
}

TEST(EventOrder, SimultaneousEvents) {
  Event repair{1.0, EventKind::Repair, 2, 0, 5};
  Event crash{1.0, EventKind::Crash, 0, 0, 1};
  Event tick{1.0, EventKind::HeartbeatTick, 0, 0, 0};
  Event req{1.0, EventKind::InferenceRequest, 0, 0, 0};
  Event later{1.5, EventKind::Repair, 0, 0, 0};
  EXPECT_TRUE(crash > repair);
  EXPECT_TRUE(tick > crash);
  EXPECT_TRUE(req > tick);
  EXPECT_TRUE(later > req);
}

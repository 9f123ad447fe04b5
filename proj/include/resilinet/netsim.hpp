#pragma once

// Discrete-event simulation of crash/repair dynamics with heartbeat failure
// detection, inference requests routed under the *detected* alive mask, and
// per-hyperconnection traffic accounting.
//
// Time is in hours; heartbeat parameters are in seconds. Each node emits a
// heartbeat every `heartbeat_interval_s` at a fixed random phase. A crash is
// declared `timeout_intervals` intervals after the last heartbeat that got
// out; a repair is noticed at the next heartbeat. Detector decisions are the
// HeartbeatTick events, so no per-second events are simulated.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "resilinet/evaluator.hpp"
#include "resilinet/model.hpp"
#include "resilinet/resilinet.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

inline constexpr double kNever = std::numeric_limits<double>::infinity();

/// Scalars crossing hyperconnections for one forward pass under (scheme,
/// mask): every active edge into a node that is up contributes its payload
/// width.
inline std::size_t bandwidth_per_inference(const Topology& topo, SchemeKind scheme, const AliveMask& mask) {
  const auto r = route(topo, mask, scheme);
  std::size_t total = 0;
  for (const auto& used : r.used)
    for (auto e : used) total += topo.edges()[e].payload_dim;
  return total;
}

template <class T>
std::size_t bandwidth_per_inference(const DistributedModel<T>& model, SchemeKind scheme, const AliveMask& mask) {
  return bandwidth_per_inference(model.topology, scheme, mask);
}

/// (DFG - ResiliNet) / DFG with every node up.
inline double bandwidth_savings(const Topology& topo) {
  const auto all = AliveMask::all_alive(topo.node_count());
  const auto dfg = static_cast<double>(bandwidth_per_inference(topo, SchemeKind::DFG, all));
  const auto res = static_cast<double>(bandwidth_per_inference(topo, SchemeKind::ResiliNet, all));
  return dfg > 0 ? (dfg - res) / dfg : 0.0;
}

struct SimConfig {
  std::vector<double> mtbf_hours;  // per node; the cloud entry is ignored (never fails)
  std::vector<double> mttr_hours;  // per node
  double heartbeat_interval_s = 1.0;
  double timeout_intervals = 3.0;
  double request_rate_per_hour = 1.0;
  double horizon_hours = 1e5;
  std::uint64_t seed = 1;
  std::size_t windows = 10;
  bool record_trace = false;

  /// Same MTBF/MTTR on every compute node.
  static SimConfig uniform(std::size_t node_count, double mtbf, double mttr) {
    SimConfig c;
    c.mtbf_hours.assign(node_count, mtbf);
    c.mttr_hours.assign(node_count, mttr);
    return c;
  }

  void validate(std::size_t node_count) const {
    std::vector<std::string> errs;
    if (mtbf_hours.size() != node_count)
      errs.push_back("sim.mtbf_hours: expected " + std::to_string(node_count) + " entries");
    if (mttr_hours.size() != node_count)
      errs.push_back("sim.mttr_hours: expected " + std::to_string(node_count) + " entries");
    for (std::size_t i = 0; i < mtbf_hours.size(); ++i)
      if (!(mtbf_hours[i] > 0)) errs.push_back("sim.mtbf_hours[" + std::to_string(i) + "]: must be > 0");
    for (std::size_t i = 0; i < mttr_hours.size(); ++i)
      if (!(mttr_hours[i] > 0)) errs.push_back("sim.mttr_hours[" + std::to_string(i) + "]: must be > 0");
    if (!(heartbeat_interval_s > 0)) errs.emplace_back("sim.heartbeat_interval_s: must be > 0");
    if (!(timeout_intervals >= 2)) errs.emplace_back("sim.timeout_intervals: must be >= 2");
    if (!(request_rate_per_hour >= 0)) errs.emplace_back("sim.request_rate_per_hour: must be >= 0");
    if (!(horizon_hours >= 0) || std::isinf(horizon_hours)) errs.emplace_back("sim.horizon_hours: must be finite, >= 0");
    if (windows == 0) errs.emplace_back("sim.windows: must be >= 1");
    if (!errs.empty()) throw ValidationError(errs);
  }
};

/// Processing order at equal times: Repair < Crash < HeartbeatTick < InferenceRequest.
enum class EventKind { Repair = 0, Crash = 1, HeartbeatTick = 2, InferenceRequest = 3 };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Repair: return "repair";
    case EventKind::Crash: return "crash";
    case EventKind::HeartbeatTick: return "heartbeat";
    case EventKind::InferenceRequest: return "request";
  }
  return "?";
}

struct Event {
  double time = 0;
  EventKind kind = EventKind::InferenceRequest;
  int node = -1;               // sample id for requests
  std::uint64_t epoch = 0;     // HeartbeatTick: node epoch it was scheduled in
  std::uint64_t seq = 0;       // insertion order, final tie-break

  bool operator>(const Event& o) const {
    if (time != o.time) return time > o.time;
    if (kind != o.kind) return kind > o.kind;
    if (node != o.node) return node > o.node;
    return seq > o.seq;
  }
};

struct TraceRecord {
  double time = 0;
  EventKind kind = EventKind::InferenceRequest;
  int node = -1;
};

struct TrafficLedger {
  std::vector<double> per_edge;                // scalars, simulated scheme
  std::map<SchemeKind, double> per_scheme;     // scalars, every scheme under the same routing masks

  /// 1 - ResiliNet / DFG over the whole run.
  double savings_vs_dfg() const {
    const auto d = per_scheme.find(SchemeKind::DFG);
    const auto r = per_scheme.find(SchemeKind::ResiliNet);
    if (d == per_scheme.end() || r == per_scheme.end() || d->second <= 0) return 0.0;
    return 1.0 - r->second / d->second;
  }
};

struct StreamWindow {
  double start_hours = 0;
  double end_hours = 0;
  std::size_t requests = 0;
  std::size_t correct = 0;
  double accuracy() const { return requests ? static_cast<double>(correct) / static_cast<double>(requests) : 0.0; }
};

struct SimReport {
  double horizon_hours = 0;
  std::vector<double> availability;           // empirical, per node
  std::vector<double> analytic_availability;  // MTBF / (MTBF + MTTR)
  std::size_t crashes = 0;
  std::size_t detections = 0;
  double mean_detection_latency_s = 0;
  std::size_t requests = 0;
  std::size_t correct = 0;
  std::size_t requests_undetected = 0;  // some node down but still believed up
  std::size_t requests_lost = 0;        // a believed-up dead node carried the payload
  std::vector<StreamWindow> windows;
  TrafficLedger traffic;
  std::vector<TraceRecord> trace;

  double accuracy() const { return requests ? static_cast<double>(correct) / static_cast<double>(requests) : 0.0; }
};

/// Runs the event loop up to config.horizon_hours. Requests arrive every
/// 1/request_rate hours and cycle through the test stream in order. A
/// request whose detected routing sends data into a node that is actually
/// down, or whose detected mask cannot reach the cloud, is answered with a
/// uniformly random label.
template <class T>
SimReport run_sim(const SimConfig& cfg, const DistributedModel<T>& model, Scheme scheme, const Dataset& stream) {
  const auto& topo = model.topology;
  const auto v = topo.node_count();
  cfg.validate(v);
  SimReport rep;
  rep.horizon_hours = cfg.horizon_hours;
  rep.traffic.per_edge.assign(topo.edges().size(), 0.0);
  for (auto k : kAllSchemes) rep.traffic.per_scheme[k] = 0.0;
  for (std::size_t n = 0; n < v; ++n) {
    const bool cloud = n + 1 == v;
    const double mtbf = cloud ? kNever : cfg.mtbf_hours[n];
    rep.analytic_availability.push_back(std::isinf(mtbf) ? 1.0 : mtbf / (mtbf + cfg.mttr_hours[n]));
  }
  if (cfg.horizon_hours == 0) {
    rep.analytic_availability.clear();
    return rep;
  }

  ScenarioEvaluator<T> eval(model, stream, scheme);
  SeededRng rng(cfg.seed, Stream::Sim);
  SeededRng guess_rng = rng.split(1);
  const double interval_h = cfg.heartbeat_interval_s / 3600.0;
  const double timeout_h = cfg.timeout_intervals * interval_h;

  struct NodeState {
    bool up = true;
    bool detected_up = true;
    std::uint64_t epoch = 0;
    double phase_h = 0;
    double last_change = 0;
    double up_time = 0;
    double crashed_at = 0;
    double mtbf = kNever;
    double mttr = 1;
  };
  std::vector<NodeState> st(v);
  std::priority_queue<Event, std::vector<Event>, std::greater<>> q;
  std::uint64_t seq = 0;
  const auto push = [&](double t, EventKind k, int node, std::uint64_t epoch = 0) {
    if (t <= cfg.horizon_hours) q.push(Event{t, k, node, epoch, seq++});
  };

  for (std::size_t n = 0; n < v; ++n) {
    auto& s = st[n];
    s.phase_h = rng.uniform() * interval_h;
    if (n + 1 < v) {
      s.mtbf = cfg.mtbf_hours[n];
      s.mttr = cfg.mttr_hours[n];
      if (!std::isinf(s.mtbf)) push(rng.exponential(s.mtbf), EventKind::Crash, static_cast<int>(n));
    }
  }
  const double req_gap = cfg.request_rate_per_hour > 0 ? 1.0 / cfg.request_rate_per_hour : kNever;
  std::uint64_t next_request = 1;
  if (!std::isinf(req_gap)) push(req_gap, EventKind::InferenceRequest, 0);

  const double win_len = cfg.horizon_hours / static_cast<double>(cfg.windows);
  for (std::size_t w = 0; w < cfg.windows; ++w)
    rep.windows.push_back({win_len * static_cast<double>(w), win_len * static_cast<double>(w + 1), 0, 0});

  struct MaskInfo {
    Routing routing;
    std::vector<double> scheme_traffic;  // indexed like kAllSchemes
  };
  std::map<std::uint64_t, MaskInfo> mask_cache;
  const auto info_for = [&](const AliveMask& m) -> const MaskInfo& {
    auto it = mask_cache.find(m.bits());
    if (it != mask_cache.end()) return it->second;
    MaskInfo info{route(topo, m, scheme.kind), {}};
    for (auto k : kAllSchemes) info.scheme_traffic.push_back(static_cast<double>(bandwidth_per_inference(topo, k, m)));
    return mask_cache.emplace(m.bits(), std::move(info)).first->second;
  };

  double latency_sum_h = 0;
  auto detected = AliveMask::all_alive(v, MaskOrigin::SimEvent);

  while (!q.empty()) {
    const Event ev = q.top();
    q.pop();
    if (cfg.record_trace) rep.trace.push_back({ev.time, ev.kind, ev.node});
    switch (ev.kind) {
      case EventKind::Crash: {
        auto& s = st[static_cast<std::size_t>(ev.node)];
        s.up_time += ev.time - s.last_change;
        s.last_change = ev.time;
        s.up = false;
        s.crashed_at = ev.time;
        ++s.epoch;
        ++rep.crashes;
        push(ev.time + rng.exponential(s.mttr), EventKind::Repair, ev.node);
        // last heartbeat that left before the crash
        const double k = std::floor((ev.time - s.phase_h) / interval_h);
        const double last_hb = s.phase_h + k * interval_h;
        push(last_hb + timeout_h, EventKind::HeartbeatTick, ev.node, s.epoch);
        break;
      }
      case EventKind::Repair: {
        auto& s = st[static_cast<std::size_t>(ev.node)];
        s.last_change = ev.time;
        s.up = true;
        ++s.epoch;
        push(ev.time + rng.exponential(s.mtbf), EventKind::Crash, ev.node);
        const double k = std::ceil((ev.time - s.phase_h) / interval_h);
        push(s.phase_h + k * interval_h, EventKind::HeartbeatTick, ev.node, s.epoch);
        break;
      }
      case EventKind::HeartbeatTick: {
        auto& s = st[static_cast<std::size_t>(ev.node)];
        if (ev.epoch != s.epoch) break;  // superseded by a later crash/repair
        if (!s.up && s.detected_up) {
          s.detected_up = false;
          detected.set_alive(ev.node, false);
          ++rep.detections;
          latency_sum_h += ev.time - s.crashed_at;
        } else if (s.up && !s.detected_up) {
          s.detected_up = true;
          detected.set_alive(ev.node, true);
        }
        break;
      }
      case EventKind::InferenceRequest: {
        const auto sample = static_cast<std::size_t>(ev.node);
        const auto& info = info_for(detected);
        bool lost = false;
        bool undetected = false;
        for (std::size_t n = 0; n + 1 < v; ++n) {
          if (st[n].up || !st[n].detected_up) continue;
          undetected = true;
          if (info.routing.present[n]) lost = true;
        }
        rep.requests_undetected += undetected;
        rep.requests_lost += lost;
        bool ok;
        const auto& corr = eval.correctness(detected);
        if (lost || corr.empty())
          ok = static_cast<ClassLabel>(guess_rng.below(model.classes())) == stream.labels[sample];
        else
          ok = corr[sample] != 0;
        ++rep.requests;
        rep.correct += ok;
        auto w = static_cast<std::size_t>(ev.time / win_len);
        w = std::min(w, cfg.windows - 1);
        ++rep.windows[w].requests;
        rep.windows[w].correct += ok;
        for (std::size_t i = 0; i < std::size(kAllSchemes); ++i)
          rep.traffic.per_scheme[kAllSchemes[i]] += info.scheme_traffic[i];
        for (const auto& used : info.routing.used)
          for (auto e : used) rep.traffic.per_edge[e] += static_cast<double>(topo.edges()[e].payload_dim);
        ++next_request;
        push(req_gap * static_cast<double>(next_request), EventKind::InferenceRequest,
             static_cast<int>((next_request - 1) % stream.size()));
        break;
      }
    }
  }

  for (std::size_t n = 0; n < v; ++n) {
    auto& s = st[n];
    if (s.up) s.up_time += cfg.horizon_hours - s.last_change;
    rep.availability.push_back(s.up_time / cfg.horizon_hours);
  }
  rep.mean_detection_latency_s = rep.detections ? latency_sum_h / static_cast<double>(rep.detections) * 3600.0 : 0.0;
  return rep;
}

inline std::string trace_to_lines(const std::vector<TraceRecord>& trace) {
  std::string out;
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%.9f,%s,%d\n", r.time, to_string(r.kind), r.node);
    out += buf;
  }
  return out;
}

}  // namespace resilinet

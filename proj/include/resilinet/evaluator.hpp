#pragma once

// Exact expected accuracy over every failure scenario of a setting, a Monte
// Carlo cross-check, and the ablation sweeps (failout rate, hyperconnection
// weight scheme, skip-hyperconnection subset).

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "resilinet/dataset.hpp"
#include "resilinet/model.hpp"
#include "resilinet/resilinet.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

inline constexpr std::size_t kMaxEnumeratedNodes = 20;

struct FailureScenario {
  AliveMask mask;
  double probability = 0;
  std::string label;
};

/// Probability of `mask` when node i fails independently with p_i.
inline double scenario_probability(const FailureSetting& setting, const AliveMask& mask) {
  double p = 1.0;
  for (int n = 0; n + 1 < static_cast<int>(setting.node_count()); ++n)
    p *= mask.alive(n) ? 1.0 - setting.failure_prob(n) : setting.failure_prob(n);
  return p;
}

/// All 2^(V-1) alive masks (the cloud never fails) with exact probabilities,
/// most probable first. Ties: fewer failures first, then lower failing ids.
inline std::vector<FailureScenario> enumerate_scenarios(const FailureSetting& setting) {
  setting.validate();
  const auto v = setting.node_count();
  if (v - 1 > kMaxEnumeratedNodes)
    throw CapacityError("enumerate_scenarios: " + std::to_string(v - 1) +
                        " failable nodes exceed the 2^20 guard; use Monte Carlo evaluation");
  const std::uint64_t compute_bits = (std::uint64_t{1} << (v - 1)) - 1;
  std::vector<FailureScenario> out;
  out.reserve(std::size_t{1} << (v - 1));
  for (std::uint64_t alive = 0; alive <= compute_bits; ++alive) {
    AliveMask m(v, alive, MaskOrigin::ScenarioEnum);
    out.push_back({m, scenario_probability(setting, m), m.label()});
  }
  std::stable_sort(out.begin(), out.end(), [](const FailureScenario& a, const FailureScenario& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.mask.failed_count() != b.mask.failed_count()) return a.mask.failed_count() < b.mask.failed_count();
    return a.mask.failed_nodes() < b.mask.failed_nodes();
  });
  return out;
}

/// sum_s p_s * acc_s. The scenario probabilities must form a distribution.
inline double expected_accuracy(const std::vector<FailureScenario>& scenarios, const std::vector<double>& accuracies) {
  if (scenarios.size() != accuracies.size())
    throw ValidationError("expected_accuracy: " + std::to_string(scenarios.size()) + " scenarios but " +
                          std::to_string(accuracies.size()) + " accuracies");
  double psum = 0, e = 0;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (scenarios[i].probability < 0) throw ValidationError("expected_accuracy: negative probability");
    psum += scenarios[i].probability;
    e += scenarios[i].probability * accuracies[i];
  }
  if (std::abs(psum - 1.0) > 1e-9)
    throw ValidationError("expected_accuracy: probabilities sum to " + std::to_string(psum) + ", not 1");
  return e;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
/// written to per-index slots so output order never depends on scheduling.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Per-sample correctness of a model on a fixed test set, memoized by mask.
/// An unreachable mask maps to an empty vector (chance level).
template <class T>
class ScenarioEvaluator {
public:
  ScenarioEvaluator(const DistributedModel<T>& model, const Dataset& test, Scheme scheme)
      : model_(model), test_(test), x_(test.features.template cast<T>()), scheme_(scheme) {
    if (test.size() == 0) throw UsageError("evaluate: empty test set");
    if (test.feature_count() != model.topology.input_dim())
      throw DimensionError("evaluate: test set has " + std::to_string(test.feature_count()) +
                           " features, model expects " + std::to_string(model.topology.input_dim()));
  }

  std::size_t size() const { return test_.size(); }
  std::size_t classes() const { return model_.classes(); }
  const Dataset& test() const { return test_; }
  Scheme scheme() const { return scheme_; }

  const std::vector<char>& correctness(const AliveMask& mask) {
    {
      std::lock_guard lk(mu_);
      auto it = cache_.find(mask.bits());
      if (it != cache_.end()) return it->second;
    }
    std::vector<char> c;
    if (auto pred = predict_labels(model_, mask, scheme_, x_)) {
      c.resize(pred->size());
      for (std::size_t i = 0; i < pred->size(); ++i) c[i] = (*pred)[i] == test_.labels[i];
    }
    std::lock_guard lk(mu_);
    return cache_.emplace(mask.bits(), std::move(c)).first->second;
  }

  /// Fraction correct; exactly 1/C when the cloud is unreachable.
  double accuracy(const AliveMask& mask) {
    const auto& c = correctness(mask);
    if (c.empty()) return 1.0 / static_cast<double>(classes());
    std::size_t k = 0;
    for (char b : c) k += static_cast<std::size_t>(b);
    return static_cast<double>(k) / static_cast<double>(c.size());
  }

private:
  const DistributedModel<T>& model_;
  const Dataset& test_;
  Matrix<T> x_;
  Scheme scheme_;
  std::mutex mu_;
  std::map<std::uint64_t, std::vector<char>> cache_;
};

template <class T>
double evaluate_scenario(const DistributedModel<T>& model, const AliveMask& mask, const Dataset& test, Scheme scheme) {
  ScenarioEvaluator<T> ev(model, test, scheme);
  return ev.accuracy(mask);
}

struct ScenarioResult {
  std::string label;
  double probability = 0;
  double accuracy = 0;
  bool reachable = true;
};

struct EvaluationReport {
  SchemeKind scheme = SchemeKind::ResiliNet;
  FailureSetting setting;
  std::vector<ScenarioResult> scenarios;  // descending probability
  double expected_accuracy = 0;
  double clean_accuracy = 0;
  double chance = 0;
  std::uint64_t seed = 0;
  double elapsed_seconds = 0;
};

/// Exact evaluation over every scenario of `setting`.
template <class T>
EvaluationReport evaluate_exact(const DistributedModel<T>& model, const FailureSetting& setting,
                                const Dataset& test, Scheme scheme, std::size_t workers = 1,
                                std::uint64_t seed = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  if (setting.node_count() != model.node_count())
    throw ValidationError("failure_setting: " + std::to_string(setting.node_count()) + " entries for " +
                          std::to_string(model.node_count()) + " nodes");
  const auto scenarios = enumerate_scenarios(setting);
  ScenarioEvaluator<T> ev(model, test, scheme);
  std::vector<double> acc(scenarios.size());
  parallel_for(scenarios.size(), workers, [&](std::size_t i) { acc[i] = ev.accuracy(scenarios[i].mask); });

  EvaluationReport rep;
  rep.scheme = scheme.kind;
  rep.setting = setting;
  rep.seed = seed;
  rep.chance = 1.0 / static_cast<double>(model.classes());
  rep.expected_accuracy = expected_accuracy(scenarios, acc);
  rep.clean_accuracy = ev.accuracy(AliveMask::all_alive(model.node_count()));
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    rep.scenarios.push_back({scenarios[i].label, scenarios[i].probability, acc[i],
                             route(model.topology, scenarios[i].mask, scheme.kind).cloud_reached()});
  rep.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct MonteCarloEstimate {
  double mean = 0;
  double stderr_ = 0;
  std::size_t draws = 0;
};

/// Each draw samples a failure mask from the setting and a test example
/// uniformly; an unreachable cloud answers with a uniformly random label.
template <class T>
MonteCarloEstimate monte_carlo_accuracy(const DistributedModel<T>& model, const FailureSetting& setting,
                                        Scheme scheme, const Dataset& test, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw UsageError("monte_carlo_accuracy: draws must be >= 1");
  setting.validate();
  if (setting.node_count() != model.node_count()) throw ValidationError("failure_setting: size mismatch");
  ScenarioEvaluator<T> ev(model, test, scheme);
  SeededRng rng(seed, Stream::MonteCarlo);
  const auto v = model.node_count();
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    auto mask = AliveMask::all_alive(v, MaskOrigin::FailoutDraw);
    for (int n = 0; n + 1 < static_cast<int>(v); ++n)
      if (rng.bernoulli(setting.failure_prob(n))) mask.set_alive(n, false);
    const auto idx = static_cast<std::size_t>(rng.below(test.size()));
    const auto& c = ev.correctness(mask);
    if (c.empty())
      hits += static_cast<ClassLabel>(rng.below(model.classes())) == test.labels[idx];
    else
      hits += static_cast<std::size_t>(c[idx]);
  }
  MonteCarloEstimate est;
  est.draws = draws;
  est.mean = static_cast<double>(hits) / static_cast<double>(draws);
  est.stderr_ = std::sqrt(est.mean * (1.0 - est.mean) / static_cast<double>(draws));
  return est;
}

// ---------------------------------------------------------------- sweeps

enum class SweepAxis { FailoutRate, WeightScheme, SkipConfig };

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::FailoutRate: return "failout-rate";
    case SweepAxis::WeightScheme: return "weights";
    case SweepAxis::SkipConfig: return "skip-config";
  }
  return "?";
}

inline SweepAxis parse_axis(const std::string& s) {
  const auto k = lower(s);
  if (k == "failout-rate" || k == "failout" || k == "failoutrate") return SweepAxis::FailoutRate;
  if (k == "weights" || k == "weight-scheme" || k == "weightscheme") return SweepAxis::WeightScheme;
  if (k == "skip-config" || k == "skips" || k == "skipconfig") return SweepAxis::SkipConfig;
  throw ValidationError("axis: unknown '" + s + "' (failout-rate | weights | skip-config)");
}

struct SweepLevel {
  std::string name;         // e.g. "10%", "Reliability", "C3"
  std::string description;  // e.g. present skip sources "n1, i"
  FailoutConfig failout;
  HyperWeightScheme weights;
  std::vector<SkipSpec> skips;
};

/// Skip subsets ordered as the config tables: by subset size, then by a
/// bitmask whose bit k is the k-th skip in descending source depth.
inline std::vector<SweepLevel> skip_config_levels(const PartitionPlan& plan) {
  const auto topo = Topology::from_plan(plan);
  std::vector<std::size_t> order(plan.skips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto depth = [&](int src) { return src == kInputNode ? -1 : topo.node(src).depth; };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const int da = depth(plan.skips[a].src), db = depth(plan.skips[b].src);
    if (da != db) return da > db;
    return plan.skips[a].src > plan.skips[b].src;
  });
  const auto k = plan.skips.size();
  if (k > 16) throw CapacityError("skip-config: too many skips to enumerate");
  std::vector<std::uint32_t> subsets;
  for (std::uint32_t s = 0; s < (1U << k); ++s) subsets.push_back(s);
  std::stable_sort(subsets.begin(), subsets.end(), [](std::uint32_t a, std::uint32_t b) {
    if (std::popcount(a) != std::popcount(b)) return std::popcount(a) < std::popcount(b);
    return a < b;
  });
  std::vector<SweepLevel> out;
  for (std::size_t c = 0; c < subsets.size(); ++c) {
    SweepLevel lvl;
    lvl.name = "C" + std::to_string(c + 1);
    std::vector<int> srcs;
    for (std::size_t b = 0; b < k; ++b)
      if (subsets[c] >> b & 1U) {
        lvl.skips.push_back(plan.skips[order[b]]);
        srcs.push_back(plan.skips[order[b]].src);
      }
    // compute nodes ascending, INPUT last
    std::sort(srcs.begin(), srcs.end(), [](int a, int b) {
      if ((a == kInputNode) != (b == kInputNode)) return b == kInputNode;
      return a < b;
    });
    if (srcs.empty())
      lvl.description = "None";
    else if (srcs.size() == k && k > 1)
      lvl.description = "All";
    else
      for (int s : srcs) lvl.description += (lvl.description.empty() ? "" : ", ") + node_label(s);
    out.push_back(std::move(lvl));
  }
  return out;
}

struct SweepContext {
  PartitionPlan plan;
  SchemeKind scheme = SchemeKind::ResiliNet;
  FailoutConfig failout = FailoutConfig::fixed(0.1);
  HyperWeightScheme weights;
  FailureSetting setting;  // evaluation setting, also feeds reliability weights
  TrainOptions train;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

inline std::vector<SweepLevel> sweep_levels(SweepAxis axis, const SweepContext& ctx) {
  std::vector<SweepLevel> out;
  const auto base = [&] {
    SweepLevel l;
    l.failout = ctx.failout;
    l.weights = ctx.weights;
    l.skips = ctx.plan.skips;
    return l;
  };
  switch (axis) {
    case SweepAxis::FailoutRate: {
      auto l = base();
      l.name = "Failure";
      l.failout = FailoutConfig::match(ctx.setting);
      out.push_back(l);
      for (double r : {0.05, 0.10, 0.30, 0.50}) {
        auto f = base();
        f.failout = FailoutConfig::fixed(r);
        f.name = f.failout.label();
        out.push_back(f);
      }
      break;
    }
    case SweepAxis::WeightScheme:
      for (auto w : {HyperWeightScheme::one(), HyperWeightScheme::reliability(),
                     HyperWeightScheme::relative_reliability(), HyperWeightScheme::uniform(0, 1)}) {
        auto l = base();
        l.weights = w;
        l.name = w.label();
        out.push_back(l);
      }
      break;
    case SweepAxis::SkipConfig:
      for (auto& s : skip_config_levels(ctx.plan)) {
        s.failout = ctx.failout;
        s.weights = ctx.weights;
        out.push_back(std::move(s));
      }
      break;
  }
  return out;
}

struct SweepCell {
  std::string level;
  std::string description;
  std::size_t repeat = 0;
  EvaluationReport report;
};

struct LevelSummary {
  std::string level;
  double mean = 0;
  double stddev = 0;  // across repeats (population)
};

struct AblationGrid {
  SweepAxis axis = SweepAxis::SkipConfig;
  std::vector<std::string> levels;
  std::size_t repeats = 1;
  std::vector<SweepCell> cells;  // level-major, then repeat

  std::vector<LevelSummary> summary() const {
    std::vector<LevelSummary> out;
    for (const auto& lv : levels) {
      std::vector<double> xs;
      for (const auto& c : cells)
        if (c.level == lv) xs.push_back(c.report.expected_accuracy);
      LevelSummary s{lv, 0, 0};
      for (double x : xs) s.mean += x;
      if (!xs.empty()) s.mean /= static_cast<double>(xs.size());
      for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean);
      if (!xs.empty()) s.stddev = std::sqrt(s.stddev / static_cast<double>(xs.size()));
      out.push_back(s);
    }
    return out;
  }

  /// Population standard deviation of the per-level means.
  double stddev_across_levels() const {
    const auto s = summary();
    if (s.empty()) return 0;
    double m = 0;
    for (const auto& l : s) m += l.mean;
    m /= static_cast<double>(s.size());
    double v = 0;
    for (const auto& l : s) v += (l.mean - m) * (l.mean - m);
    return std::sqrt(v / static_cast<double>(s.size()));
  }
};

/// Seed of repeat r; shared by every level so cells are paired.
inline std::uint64_t repeat_seed(std::uint64_t seed, std::size_t repeat) {
  return splitmix64(seed + 0x9e37ULL * static_cast<std::uint64_t>(repeat));
}

/// Trains and evaluates one model per (level, repeat).
template <class T>
AblationGrid sweep(SweepAxis axis, std::size_t repeats, const SweepContext& ctx, const SplitDataset& data) {
  if (repeats == 0) throw ValidationError("repeats: must be >= 1");
  const auto levels = sweep_levels(axis, ctx);
  AblationGrid grid;
  grid.axis = axis;
  grid.repeats = repeats;
  for (const auto& l : levels) grid.levels.push_back(l.name);
  grid.cells.resize(levels.size() * repeats);
  parallel_for(grid.cells.size(), ctx.workers, [&](std::size_t i) {
    const auto& lvl = levels[i / repeats];
    const auto rep = i % repeats;
    const auto seed = repeat_seed(ctx.seed, rep);
    auto plan = ctx.plan;
    plan.skips = lvl.skips;
    auto model = build_model<T>(plan, seed);
    assign_hyperconnection_weights(model, lvl.weights, ctx.setting, seed);
    train(model, data.train, ctx.scheme, lvl.failout, ctx.train, seed);
    auto& cell = grid.cells[i];
    cell.level = lvl.name;
    cell.description = lvl.description;
    cell.repeat = rep;
    cell.report = evaluate_exact(model, ctx.setting, data.test, Scheme{ctx.scheme, false}, 1, seed);
  });
  return grid;
}

}  // namespace resilinet

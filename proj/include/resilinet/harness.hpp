#pragma once

// Run configuration, report envelopes and the binary model artifact used by
// the command-line tool. Configs and reports are JSON; nlohmann's objects
// keep keys sorted, so dumps of equal configs are byte-equal.

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resilinet/dataset.hpp"
#include "resilinet/evaluator.hpp"
#include "resilinet/model.hpp"
#include "resilinet/netsim.hpp"
#include "resilinet/resilinet.hpp"
#include "resilinet/scheme.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kReportSchema = "1.0";
inline constexpr int kReportSchemaMajor = 1;

// ------------------------------------------------------------ field reader

namespace detail {

/// Reads optional keys from one JSON object, recording type errors under a
/// dotted path and flagging keys nobody asked for.
class FieldReader {
public:
  FieldReader(const json& j, std::string prefix, std::vector<std::string>& errs)
      : j_(j), prefix_(std::move(prefix)), errs_(errs) {
    if (!j_.is_object()) errs_.push_back(where("") + "must be an object");
  }

  bool has(const std::string& key) {
    seen_.push_back(key);
    return j_.is_object() && j_.contains(key);
  }
  const json& raw(const std::string& key) { return j_.at(key); }
  std::string where(const std::string& key) const {
    if (key.empty()) return prefix_.empty() ? std::string("config: ") : prefix_ + ": ";
    return (prefix_.empty() ? key : prefix_ + "." + key) + ": ";
  }
  void error(const std::string& key, const std::string& msg) { errs_.push_back(where(key) + msg); }

  void get(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) return error(key, "must be a number");
    out = v.get<double>();
  }
  void get(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number_unsigned()) {
      out = v.get<std::size_t>();
    } else if (v.is_number_integer() && v.get<long long>() >= 0) {
      out = static_cast<std::size_t>(v.get<long long>());
    } else {
      error(key, "must be a nonnegative integer");
    }
  }
  void get_u64(const std::string& key, std::uint64_t& out) {
    std::size_t tmp = static_cast<std::size_t>(out);
    get(key, tmp);
    out = tmp;
  }
  void get(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) return error(key, "must be true or false");
    out = v.get<bool>();
  }
  void get(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_string()) return error(key, "must be a string");
    out = v.get<std::string>();
  }

  void reject_unknown() {
    if (!j_.is_object()) return;
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) error(it.key(), "unknown key");
  }

private:
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& errs_;
  std::vector<std::string> seen_;
};

}  // namespace detail

// ------------------------------------------------------------------- plans

inline json plan_to_json(const PartitionPlan& p) {
  json skips = json::array();
  for (const auto& s : p.skips) {
    json e = {s.src, s.dst};
    if (s.via) e.push_back(*s.via);
    skips.push_back(e);
  }
  json j = {{"name", p.name},
            {"partition", p.layer_counts},
            {"hidden_width", p.hidden_width},
            {"input_dim", p.input_dim},
            {"classes", p.classes},
            {"skips", skips}};
  if (!p.simple_edges.empty()) {
    json se = json::array();
    for (auto [s, d] : p.simple_edges) se.push_back({s, d});
    j["simple_edges"] = se;
  }
  return j;
}

/// A preset name or an inline plan object.
inline PartitionPlan plan_from_json(const json& j) {
  if (j.is_string()) return preset_plan(j.get<std::string>());
  std::vector<std::string> errs;
  detail::FieldReader r(j, "plan", errs);
  PartitionPlan p;
  p.name = "custom";
  r.get("name", p.name);
  if (!r.has("partition") || !r.raw("partition").is_array() || r.raw("partition").empty()) {
    r.error("partition", "required: array of per-node layer counts");
  } else {
    for (const auto& c : r.raw("partition")) {
      if (!c.is_number_integer()) {
        r.error("partition", "entries must be integers");
        break;
      }
      p.layer_counts.push_back(c.get<int>());
    }
  }
  r.get("hidden_width", p.hidden_width);
  r.get("input_dim", p.input_dim);
  r.get("classes", p.classes);
  const auto int_list = [&](const json& e, std::size_t lo, std::size_t hi, const std::string& key) {
    std::vector<int> out;
    if (!e.is_array() || e.size() < lo || e.size() > hi) {
      r.error(key, "each entry must be a list of " + std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                       " integers");
      return out;
    }
    for (const auto& x : e) {
      if (!x.is_number_integer()) {
        r.error(key, "entries must be integers");
        return std::vector<int>{};
      }
      out.push_back(x.get<int>());
    }
    return out;
  };
  if (r.has("skips")) {
    if (!r.raw("skips").is_array()) {
      r.error("skips", "must be a list of [src, dst] pairs");
    } else {
      for (const auto& e : r.raw("skips")) {
        auto v = int_list(e, 2, 3, "skips");
        if (v.empty()) continue;
        SkipSpec s{v[0], v[1], std::nullopt};
        if (v.size() == 3) s.via = v[2];
        p.skips.push_back(s);
      }
    }
  }
  if (r.has("simple_edges")) {
    if (!r.raw("simple_edges").is_array()) {
      r.error("simple_edges", "must be a list of [src, dst] pairs");
    } else {
      for (const auto& e : r.raw("simple_edges")) {
        auto v = int_list(e, 2, 2, "simple_edges");
        if (!v.empty()) p.simple_edges.emplace_back(v[0], v[1]);
      }
    }
  }
  r.reject_unknown();
  if (!errs.empty()) throw ConfigError(errs);
  Topology::from_plan(p);
  return p;
}

// ------------------------------------------------------------------ config

struct DatasetConfig {
  enum class Kind { Synthetic, Csv };
  Kind kind = Kind::Synthetic;
  SyntheticSpec synthetic;
  CsvSpec csv;
  SplitFractions split;
};

struct EvalSection {
  std::string mode = "exact";  // exact | mc
  std::size_t draws = 100000;
};

struct SweepSection {
  SweepAxis axis = SweepAxis::SkipConfig;
  std::size_t repeats = 1;
};

/// Simulation parameters as written in the config; MTBF/MTTR may be a single
/// number applied to every compute node.
struct SimSection {
  std::vector<double> mtbf_hours{3521.0};
  std::vector<double> mttr_hours{71.0};
  double heartbeat_interval_s = 1.0;
  double timeout_intervals = 3.0;
  double request_rate_per_hour = 1.0;
  double horizon_hours = 1e5;
  std::size_t windows = 10;
  std::uint64_t seed = 1;
  bool record_trace = false;

  SimConfig resolve(std::size_t node_count) const {
    SimConfig c;
    const auto expand = [&](const std::vector<double>& v) {
      return v.size() == 1 ? std::vector<double>(node_count, v.front()) : v;
    };
    c.mtbf_hours = expand(mtbf_hours);
    c.mttr_hours = expand(mttr_hours);
    c.heartbeat_interval_s = heartbeat_interval_s;
    c.timeout_intervals = timeout_intervals;
    c.request_rate_per_hour = request_rate_per_hour;
    c.horizon_hours = horizon_hours;
    c.windows = windows;
    c.seed = seed;
    c.record_trace = record_trace;
    c.validate(node_count);
    return c;
  }
};

struct RunConfig {
  json plan = "health";                // preset name or inline plan
  SchemeKind scheme = SchemeKind::ResiliNet;
  json failout;                        // null: 10% for skip schemes, off otherwise
  HyperWeightScheme weights;
  json setting = "Normal";             // preset name or {"name", "probs"}
  bool inference_scaling = false;
  std::size_t epochs = 10;
  std::size_t batch_size = 1024;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  int precision = 32;
  DatasetConfig dataset;
  std::string out_dir = "out";
  std::string model_path;
  EvalSection evaluation;
  SweepSection sweep;
  SimSection sim;

  PartitionPlan resolved_plan() const { return plan_from_json(plan); }

  FailureSetting resolved_setting(std::size_t node_count) const {
    FailureSetting s;
    if (setting.is_string()) {
      s = FailureSetting::named(setting.get<std::string>(), node_count);
    } else {
      s.name = setting.value("name", std::string("custom"));
      s.probs = setting.at("probs").get<std::vector<double>>();
    }
    s.validate();
    if (s.node_count() != node_count)
      throw ConfigError("setting: " + std::to_string(s.node_count()) + " probabilities for " +
                        std::to_string(node_count) + " nodes");
    return s;
  }

  FailoutConfig resolved_failout(std::size_t node_count) const {
    if (failout.is_null())
      return scheme == SchemeKind::ResiliNet || scheme == SchemeKind::ResiliNetPlus ? FailoutConfig::fixed(0.1)
                                                                                    : FailoutConfig::off();
    const auto mode = lower(failout.value("mode", std::string("fixed")));
    if (mode == "off") return FailoutConfig::off();
    if (mode == "match") return FailoutConfig::match(resolved_setting(node_count));
    return FailoutConfig::fixed(failout.value("rate", 0.1));
  }

  TrainOptions train_options() const {
    TrainOptions o;
    o.epochs = epochs;
    o.batch_size = batch_size;
    o.optimizer = optimizer;
    return o;
  }
};

inline json failout_to_json(const FailoutConfig& f) {
  switch (f.mode) {
    case FailoutMode::Off: return {{"mode", "off"}};
    case FailoutMode::Fixed: return {{"mode", "fixed"}, {"rate", f.rate}};
    case FailoutMode::MatchFailure: return {{"mode", "match"}};
  }
  return nullptr;
}

/// Canonical form: every field present, failout resolved.
inline json to_json(const RunConfig& c) {
  json ds;
  if (c.dataset.kind == DatasetConfig::Kind::Synthetic) {
    const auto& s = c.dataset.synthetic;
    ds = {{"kind", "synthetic"},        {"features", s.features}, {"classes", s.classes},
          {"samples_per_class", s.samples_per_class}, {"spread", s.spread},
          {"center_scale", s.center_scale}, {"seed", s.seed}};
  } else {
    const auto& s = c.dataset.csv;
    ds = {{"kind", "csv"}, {"path", s.path}, {"label_column", s.label_column}, {"drop_labels", s.drop_labels},
          {"seed", s.seed}};
  }
  ds["split"] = {{"train", c.dataset.split.train}, {"val", c.dataset.split.val}, {"test", c.dataset.split.test}};

  const auto scalar_or_list = [](const std::vector<double>& v) { return v.size() == 1 ? json(v.front()) : json(v); };
  const auto node_count = plan_from_json(c.plan).node_count();
  return {{"plan", c.plan},
          {"scheme", to_string(c.scheme)},
          {"failout", failout_to_json(c.resolved_failout(node_count))},
          {"weights", c.weights.label()},
          {"setting", c.setting},
          {"inference_scaling", c.inference_scaling},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"optimizer",
           {{"kind", to_string(c.optimizer.kind)},
            {"learning_rate", c.optimizer.learning_rate},
            {"momentum", c.optimizer.momentum},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon}}},
          {"seed", c.seed},
          {"precision", c.precision},
          {"dataset", ds},
          {"out_dir", c.out_dir},
          {"model_path", c.model_path},
          {"evaluation", {{"mode", c.evaluation.mode}, {"draws", c.evaluation.draws}}},
          {"sweep", {{"axis", to_string(c.sweep.axis)}, {"repeats", c.sweep.repeats}}},
          {"sim",
           {{"mtbf_hours", scalar_or_list(c.sim.mtbf_hours)},
            {"mttr_hours", scalar_or_list(c.sim.mttr_hours)},
            {"heartbeat_interval_s", c.sim.heartbeat_interval_s},
            {"timeout_intervals", c.sim.timeout_intervals},
            {"request_rate_per_hour", c.sim.request_rate_per_hour},
            {"horizon_hours", c.sim.horizon_hours},
            {"windows", c.sim.windows},
            {"seed", c.sim.seed},
            {"record_trace", c.sim.record_trace}}}};
}

namespace detail {

inline void read_hours(FieldReader& r, const std::string& key, std::vector<double>& out) {
  if (!r.has(key)) return;
  const auto& v = r.raw(key);
  if (v.is_number()) {
    out = {v.get<double>()};
  } else if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) {
    out = v.get<std::vector<double>>();
  } else {
    r.error(key, "must be a number or a list of numbers");
  }
}

}  // namespace detail

/// Parses a config object, collecting every field-level problem into one
/// ConfigError. A report file is accepted too; its echoed config is used.
inline RunConfig config_from_json(const json& in) {
  const json& j = in.is_object() && in.contains("schema_version") && in.contains("config") ? in.at("config") : in;
  std::vector<std::string> errs;
  RunConfig c;
  detail::FieldReader r(j, "", errs);

  if (r.has("plan")) {
    c.plan = r.raw("plan");
    try {
      plan_from_json(c.plan);
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) errs.push_back(v.rfind("plan", 0) == 0 ? v : "plan: " + v);
    }
  }
  std::string s;
  if (r.has("scheme")) {
    r.get("scheme", s);
    try {
      c.scheme = parse_scheme(s);
    } catch (const ValidationError&) {
      r.error("scheme", "unknown '" + s + "' (ResiliNet | ResiliNet+ | DFG | Vanilla)");
    }
  }
  if (r.has("failout")) {
    const auto& f = r.raw("failout");
    std::vector<std::string> ferrs;
    detail::FieldReader fr(f, "failout", ferrs);
    std::string mode = "fixed";
    double rate = 0.1;
    fr.get("mode", mode);
    fr.get("rate", rate);
    fr.reject_unknown();
    mode = lower(mode);
    if (mode != "fixed" && mode != "off" && mode != "match") fr.error("mode", "must be fixed, off or match");
    if (!(rate >= 0 && rate < 1)) fr.error("rate", "must be in [0, 1)");
    errs.insert(errs.end(), ferrs.begin(), ferrs.end());
    if (ferrs.empty()) {
      c.failout = {{"mode", mode}};
      if (mode == "fixed") c.failout["rate"] = rate;
    }
  }
  if (r.has("weights")) {
    r.get("weights", s);
    try {
      c.weights = HyperWeightScheme::parse(s);
    } catch (const ValidationError&) {
      r.error("weights", "unknown '" + s + "' (One | Reliability | RelativeReliability | UniformRandom(lo,hi))");
    }
  }
  if (r.has("setting")) {
    const auto& v = r.raw("setting");
    if (v.is_string()) {
      const auto k = lower(v.get<std::string>());
      if (k != "normal" && k != "poor" && k != "hazardous" && k != "none" && k != "nofailure" && k != "no-failure")
        r.error("setting", "unknown preset '" + v.get<std::string>() + "' (Normal | Poor | Hazardous | None)");
      c.setting = v;
    } else if (v.is_object() && v.contains("probs") && v.at("probs").is_array()) {
      c.setting = v;
    } else {
      r.error("setting", "must be a preset name or {\"name\", \"probs\"}");
    }
  }
  r.get("inference_scaling", c.inference_scaling);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  if (c.batch_size < 1) r.error("batch_size", "must be >= 1");
  if (r.has("optimizer")) {
    detail::FieldReader o(r.raw("optimizer"), "optimizer", errs);
    std::string kind = to_string(c.optimizer.kind);
    o.get("kind", kind);
    kind = lower(kind);
    if (kind == "adam")
      c.optimizer.kind = OptimizerKind::Adam;
    else if (kind == "sgd")
      c.optimizer.kind = OptimizerKind::SgdMomentum;
    else
      o.error("kind", "must be adam or sgd");
    o.get("learning_rate", c.optimizer.learning_rate);
    o.get("momentum", c.optimizer.momentum);
    o.get("beta1", c.optimizer.beta1);
    o.get("beta2", c.optimizer.beta2);
    o.get("epsilon", c.optimizer.epsilon);
    if (!(c.optimizer.learning_rate > 0)) o.error("learning_rate", "must be > 0");
    o.reject_unknown();
  }
  r.get_u64("seed", c.seed);
  std::size_t prec = 32;
  r.get("precision", prec);
  if (prec != 32 && prec != 64) r.error("precision", "must be 32 or 64");
  c.precision = static_cast<int>(prec);

  if (r.has("dataset")) {
    detail::FieldReader d(r.raw("dataset"), "dataset", errs);
    std::string kind = "synthetic";
    d.get("kind", kind);
    kind = lower(kind);
    if (kind == "synthetic") {
      auto& sp = c.dataset.synthetic;
      d.get("features", sp.features);
      d.get("classes", sp.classes);
      d.get("samples_per_class", sp.samples_per_class);
      d.get("spread", sp.spread);
      d.get("center_scale", sp.center_scale);
      d.get_u64("seed", sp.seed);
      if (sp.features < 1) d.error("features", "must be >= 1");
      if (sp.classes < 2) d.error("classes", "must be >= 2");
      if (sp.samples_per_class < 1) d.error("samples_per_class", "must be >= 1");
    } else if (kind == "csv") {
      c.dataset.kind = DatasetConfig::Kind::Csv;
      auto& cs = c.dataset.csv;
      d.get("path", cs.path);
      d.get("label_column", cs.label_column);
      d.get_u64("seed", cs.seed);
      if (d.has("drop_labels")) {
        const auto& v = d.raw("drop_labels");
        if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_integer(); }))
          cs.drop_labels = v.get<std::vector<long>>();
        else
          d.error("drop_labels", "must be a list of integers");
      }
      if (cs.path.empty()) d.error("path", "required for csv datasets");
    } else {
      d.error("kind", "must be synthetic or csv");
    }
    if (d.has("split")) {
      detail::FieldReader sp(d.raw("split"), "dataset.split", errs);
      sp.get("train", c.dataset.split.train);
      sp.get("val", c.dataset.split.val);
      sp.get("test", c.dataset.split.test);
      sp.reject_unknown();
      try {
        c.dataset.split.validate();
      } catch (const ValidationError&) {
        errs.emplace_back("dataset.split: fractions must be nonnegative and sum to 1");
      }
    }
    d.reject_unknown();
  }
  r.get("out_dir", c.out_dir);
  r.get("model_path", c.model_path);
  if (r.has("evaluation")) {
    detail::FieldReader e(r.raw("evaluation"), "evaluation", errs);
    e.get("mode", c.evaluation.mode);
    e.get("draws", c.evaluation.draws);
    c.evaluation.mode = lower(c.evaluation.mode);
    if (c.evaluation.mode != "exact" && c.evaluation.mode != "mc") e.error("mode", "must be exact or mc");
    if (c.evaluation.draws < 1) e.error("draws", "must be >= 1");
    e.reject_unknown();
  }
  if (r.has("sweep")) {
    detail::FieldReader w(r.raw("sweep"), "sweep", errs);
    std::string axis = to_string(c.sweep.axis);
    w.get("axis", axis);
    try {
      c.sweep.axis = parse_axis(axis);
    } catch (const ValidationError&) {
      w.error("axis", "unknown '" + axis + "' (failout-rate | weights | skip-config)");
    }
    w.get("repeats", c.sweep.repeats);
    if (c.sweep.repeats < 1) w.error("repeats", "must be >= 1");
    w.reject_unknown();
  }
  if (r.has("sim")) {
    detail::FieldReader m(r.raw("sim"), "sim", errs);
    detail::read_hours(m, "mtbf_hours", c.sim.mtbf_hours);
    detail::read_hours(m, "mttr_hours", c.sim.mttr_hours);
    m.get("heartbeat_interval_s", c.sim.heartbeat_interval_s);
    m.get("timeout_intervals", c.sim.timeout_intervals);
    m.get("request_rate_per_hour", c.sim.request_rate_per_hour);
    m.get("horizon_hours", c.sim.horizon_hours);
    m.get("windows", c.sim.windows);
    m.get_u64("seed", c.sim.seed);
    m.get("record_trace", c.sim.record_trace);
    m.reject_unknown();
  }
  r.reject_unknown();
  if (!errs.empty()) throw ConfigError(errs);

  // Cross-field checks need the resolved plan.
  const auto plan = c.resolved_plan();
  try {
    if (c.dataset.kind == DatasetConfig::Kind::Synthetic) {
      if (c.dataset.synthetic.features != plan.input_dim)
        errs.push_back("dataset.features: " + std::to_string(c.dataset.synthetic.features) +
                       " does not match plan input_dim " + std::to_string(plan.input_dim));
      if (c.dataset.synthetic.classes != plan.classes)
        errs.push_back("dataset.classes: " + std::to_string(c.dataset.synthetic.classes) +
                       " does not match plan classes " + std::to_string(plan.classes));
    }
    const auto needs_setting = c.weights.kind == HyperWeightScheme::Kind::Reliability ||
                               c.weights.kind == HyperWeightScheme::Kind::RelativeReliability ||
                               c.inference_scaling ||
                               (c.failout.is_object() && c.failout.value("mode", "") == "match");
    if (needs_setting || !c.setting.is_string()) c.resolved_setting(plan.node_count());
    check_training_config(c.scheme, c.resolved_failout(plan.node_count()), plan.node_count());
  } catch (const ValidationError& e) {
    for (const auto& v : e.violations()) errs.push_back(v);
  }
  if (!errs.empty()) throw ConfigError(errs);
  return c;
}

inline json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(what + ": cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": '" + path + "' is not valid JSON (" + e.what() + ")");
  }
}

inline RunConfig load_config(const std::string& path) { return config_from_json(read_json_file(path, "config")); }

// ----------------------------------------------------------------- datasets

/// Train/val/test splits for the config; synthetic data is z-scored with
/// train statistics like CSV data.
inline SplitDataset load_dataset(const DatasetConfig& d) {
  if (d.kind == DatasetConfig::Kind::Csv) return load_csv(d.csv, d.split);
  auto ds = generate_synthetic(d.synthetic, d.split);
  normalize_with_train_stats(ds);
  return ds;
}

// ------------------------------------------------------------------ reports

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Envelope shared by every report. `timing` holds wall-clock data and is
/// the only part, with `timestamp`, that varies between identical runs.
inline json make_report(const std::string& kind, const json& config, json results, std::uint64_t seed,
                        json timing = json::object()) {
  return {{"schema_version", kReportSchema},
          {"kind", kind},
          {"tool", {{"name", "resilinet"}, {"version", kToolVersion}}},
          {"config", config},
          {"results", std::move(results)},
          {"seed", seed},
          {"timestamp", utc_timestamp()},
          {"timing", std::move(timing)}};
}

/// Rejects reports written under an unknown major schema version.
inline void check_report_schema(const json& report) {
  if (!report.is_object() || !report.contains("schema_version") || !report.at("schema_version").is_string())
    throw ArtifactError("report: missing schema_version");
  const auto v = report.at("schema_version").get<std::string>();
  const auto major = std::atoi(v.substr(0, v.find('.')).c_str());
  if (major != kReportSchemaMajor)
    throw ArtifactError("report: unsupported schema_version " + v + " (expected " +
                        std::to_string(kReportSchemaMajor) + ".x)");
}

inline json setting_to_json(const FailureSetting& s) { return {{"name", s.name}, {"probs", s.probs}}; }

inline json to_json(const EvaluationReport& r) {
  json rows = json::array();
  for (const auto& s : r.scenarios)
    rows.push_back({{"failing", s.label}, {"probability", s.probability}, {"accuracy", s.accuracy},
                    {"reachable", s.reachable}});
  return {{"scheme", to_string(r.scheme)},
          {"setting", setting_to_json(r.setting)},
          {"expected_accuracy", r.expected_accuracy},
          {"clean_accuracy", r.clean_accuracy},
          {"chance", r.chance},
          {"scenarios", rows}};
}

inline json to_json(const TrainHistory& h) {
  json eps = json::array();
  for (const auto& e : h.epochs)
    eps.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}, {"batches", e.batches},
                   {"skipped_batches", e.skipped_batches}});
  return eps;
}

inline json to_json(const AblationGrid& g) {
  json cells = json::array();
  for (const auto& c : g.cells) {
    cells.push_back({{"level", c.level},
                     {"description", c.description},
                     {"repeat", c.repeat},
                     {"expected_accuracy", c.report.expected_accuracy},
                     {"clean_accuracy", c.report.clean_accuracy},
                     {"scenarios", to_json(c.report)["scenarios"]}});
  }
  json summary = json::array();
  for (const auto& s : g.summary()) summary.push_back({{"level", s.level}, {"mean", s.mean}, {"stddev", s.stddev}});
  return {{"axis", to_string(g.axis)},
          {"levels", g.levels},
          {"repeats", g.repeats},
          {"cells", cells},
          {"summary", summary},
          {"stddev_across_levels", g.stddev_across_levels()}};
}

inline json to_json(const SimReport& r) {
  json windows = json::array();
  for (const auto& w : r.windows)
    windows.push_back({{"start_hours", w.start_hours}, {"end_hours", w.end_hours}, {"requests", w.requests},
                       {"correct", w.correct}, {"accuracy", w.accuracy()}});
  json per_scheme = json::object();
  for (const auto& [k, v] : r.traffic.per_scheme) per_scheme[to_string(k)] = v;
  return {{"horizon_hours", r.horizon_hours},
          {"availability", r.availability},
          {"analytic_availability", r.analytic_availability},
          {"crashes", r.crashes},
          {"detections", r.detections},
          {"mean_detection_latency_s", r.mean_detection_latency_s},
          {"requests", r.requests},
          {"correct", r.correct},
          {"accuracy", r.accuracy()},
          {"requests_undetected", r.requests_undetected},
          {"requests_lost", r.requests_lost},
          {"windows", windows},
          {"traffic", {{"per_edge", r.traffic.per_edge}, {"per_scheme", per_scheme},
                       {"savings_vs_dfg", r.traffic.savings_vs_dfg()}}}};
}

/// One row per sweep cell: level, repeat, expected and clean accuracy, then
/// the accuracy of every scenario in report order. The weights axis appends
/// the standard deviation across levels.
inline std::string sweep_csv(const AblationGrid& g) {
  std::ostringstream out;
  out.precision(17);
  out << "axis_level,description,repeat,expected_accuracy,clean_accuracy";
  if (!g.cells.empty())
    for (const auto& s : g.cells.front().report.scenarios) out << ",acc[" << s.label << "]";
  out << "\n";
  for (const auto& c : g.cells) {
    out << c.level << ",\"" << c.description << "\"," << c.repeat << "," << c.report.expected_accuracy << ","
        << c.report.clean_accuracy;
    for (const auto& s : c.report.scenarios) out << "," << s.accuracy;
    out << "\n";
  }
  if (g.axis == SweepAxis::WeightScheme) out << "stddev_across_levels,,," << g.stddev_across_levels() << ",\n";
  return out.str();
}

// --------------------------------------------------------- model artifact
//
// Layout (host byte order):
//   "RSNMODEL" | u32 format version | u32 scalar bytes | u64 metadata length
//   | metadata JSON | every node's layers (weights row-major, then bias) in
//   node order | every projection in edge order | u64 FNV-1a of all
//   preceding bytes.

inline constexpr char kArtifactMagic[8] = {'R', 'S', 'N', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kArtifactVersion = 1;

inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

template <class V>
void append_pod(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
void append_layer(std::string& out, const DenseLayer<T>& l) {
  out.append(reinterpret_cast<const char*>(l.weights.data()), sizeof(T) * static_cast<std::size_t>(l.weights.size()));
  out.append(reinterpret_cast<const char*>(l.bias.data()), sizeof(T) * static_cast<std::size_t>(l.bias.size()));
}

class ByteReader {
public:
  ByteReader(const std::string& s, std::size_t end) : s_(s), end_(end) {}
  void read(void* dst, std::size_t n) {
    if (pos_ + n > end_) throw ArtifactError("model artifact: truncated payload");
    std::memcpy(dst, s_.data() + pos_, n);
    pos_ += n;
  }
  template <class V>
  V pod() {
    V v;
    read(&v, sizeof v);
    return v;
  }
  std::size_t pos() const { return pos_; }

private:
  const std::string& s_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

template <class T>
void read_layer(ByteReader& r, DenseLayer<T>& l) {
  r.read(l.weights.data(), sizeof(T) * static_cast<std::size_t>(l.weights.size()));
  r.read(l.bias.data(), sizeof(T) * static_cast<std::size_t>(l.bias.size()));
}

}  // namespace detail

/// Metadata written next to the weights: enough to rebuild the model and to
/// echo how it was trained.
template <class T>
json model_metadata(const DistributedModel<T>& m, const json& config) {
  return {{"plan", plan_to_json(m.plan)},
          {"scheme", to_string(m.scheme)},
          {"weights", m.weight_scheme.label()},
          {"edge_weights", m.edge_weights},
          {"inference_scaling", m.inference_scaling},
          {"survival", m.survival},
          {"parameter_count", m.parameter_count()},
          {"config", config}};
}

template <class T>
std::string serialize_model(const DistributedModel<T>& m, const json& config) {
  const std::string meta = model_metadata(m, config).dump();
  std::string out(kArtifactMagic, sizeof kArtifactMagic);
  detail::append_pod(out, kArtifactVersion);
  detail::append_pod(out, static_cast<std::uint32_t>(sizeof(T)));
  detail::append_pod(out, static_cast<std::uint64_t>(meta.size()));
  out += meta;
  for (const auto& st : m.stacks)
    for (const auto& l : st.layers()) detail::append_layer(out, l);
  for (const auto& p : m.projections)
    if (p) detail::append_layer(out, p->layers()[0]);
  detail::append_pod(out, fnv1a64(out.data(), out.size()));
  return out;
}

struct ArtifactHeader {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  json metadata;
  std::size_t payload_offset = 0;  // first weight byte
};

/// Validates magic, checksum and metadata; the weights are not read.
inline ArtifactHeader read_artifact_header(const std::string& bytes) {
  constexpr std::size_t fixed = sizeof kArtifactMagic + 4 + 4 + 8;
  if (bytes.size() < fixed + 8) throw ArtifactError("model artifact: file too short");
  if (std::memcmp(bytes.data(), kArtifactMagic, sizeof kArtifactMagic) != 0)
    throw ArtifactError("model artifact: bad magic, not a resilinet model");
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8)) throw ArtifactError("model artifact: checksum mismatch");
  detail::ByteReader r(bytes, bytes.size() - 8);
  char magic[8];
  r.read(magic, 8);
  ArtifactHeader h;
  h.version = r.pod<std::uint32_t>();
  if (h.version != kArtifactVersion)
    throw ArtifactError("model artifact: unsupported format version " + std::to_string(h.version));
  h.scalar_bytes = r.pod<std::uint32_t>();
  if (h.scalar_bytes != 4 && h.scalar_bytes != 8) throw ArtifactError("model artifact: bad scalar width");
  const auto len = r.pod<std::uint64_t>();
  if (len > bytes.size()) throw ArtifactError("model artifact: truncated metadata");
  std::string meta(len, '\0');
  r.read(meta.data(), len);
  try {
    h.metadata = json::parse(meta);
  } catch (const json::parse_error&) {
    throw ArtifactError("model artifact: corrupt metadata");
  }
  h.payload_offset = r.pos();
  return h;
}

template <class T>
DistributedModel<T> deserialize_model(const std::string& bytes) {
  const auto h = read_artifact_header(bytes);
  if (h.scalar_bytes != sizeof(T))
    throw ArtifactError("model artifact: stored with " + std::to_string(8 * h.scalar_bytes) + "-bit scalars");
  DistributedModel<T> m;
  try {
    const auto& md = h.metadata;
    m = build_model<T>(plan_from_json(md.at("plan")), 0);
    m.scheme = parse_scheme(md.at("scheme").get<std::string>());
    m.weight_scheme = HyperWeightScheme::parse(md.at("weights").get<std::string>());
    m.edge_weights = md.at("edge_weights").get<std::vector<double>>();
    m.inference_scaling = md.at("inference_scaling").get<bool>();
    m.survival = md.at("survival").get<std::vector<double>>();
  } catch (const ArtifactError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArtifactError(std::string("model artifact: inconsistent metadata (") + e.what() + ")");
  }
  const auto ne = m.topology.edges().size();
  if (m.edge_weights.size() != ne || m.survival.size() != ne)
    throw ArtifactError("model artifact: edge weight count does not match the plan");

  detail::ByteReader r(bytes, bytes.size() - 8);
  std::vector<char> header(h.payload_offset);
  r.read(header.data(), header.size());
  for (auto& st : m.stacks)
    for (auto& l : st.layers()) detail::read_layer(r, l);
  for (auto& p : m.projections)
    if (p) detail::read_layer(r, p->layers()[0]);
  if (r.pos() != bytes.size() - 8) throw ArtifactError("model artifact: trailing bytes after weights");
  return m;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("model_path: cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("out_dir: cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- commands
//
// Each command returns its report; the CLI owns files and exit codes.

template <class T>
struct TrainOutcome {
  DistributedModel<T> model;
  json report;
};

template <class T>
TrainOutcome<T> run_train(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto plan = cfg.resolved_plan();
  const auto data = load_dataset(cfg.dataset);
  auto model = build_model<T>(plan, cfg.seed);
  const auto v = plan.node_count();
  const bool needs_setting = cfg.weights.kind == HyperWeightScheme::Kind::Reliability ||
                             cfg.weights.kind == HyperWeightScheme::Kind::RelativeReliability ||
                             cfg.inference_scaling;
  const auto setting = needs_setting ? cfg.resolved_setting(v) : FailureSetting::named("none", v);
  assign_hyperconnection_weights(model, cfg.weights, setting, cfg.seed);
  const auto hist = train(model, data.train, cfg.scheme, cfg.resolved_failout(v), cfg.train_options(), cfg.seed);
  if (cfg.inference_scaling) inference_scaling_mode(model, setting, true);
  const Scheme scheme{cfg.scheme, false};
  const auto all = AliveMask::all_alive(v);
  json results = {{"history", to_json(hist)},
                  {"parameter_count", model.parameter_count()},
                  {"train_size", data.train.size()},
                  {"val_size", data.val.size()},
                  {"test_size", data.test.size()}};
  if (data.val.size() > 0) results["val_clean_accuracy"] = evaluate_scenario(model, all, data.val, scheme);
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), make_report("train", to_json(cfg), results, cfg.seed, {{"elapsed_seconds", secs}})};
}

template <class T>
json run_evaluate(const RunConfig& cfg, const DistributedModel<T>& model, std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(cfg.dataset);
  const auto setting = cfg.resolved_setting(model.node_count());
  const Scheme scheme{model.scheme, cfg.inference_scaling};
  json results;
  if (cfg.evaluation.mode == "mc") {
    const auto est = monte_carlo_accuracy(model, setting, scheme, data.test, cfg.evaluation.draws, cfg.seed);
    results = {{"mode", "mc"},
               {"scheme", to_string(model.scheme)},
               {"setting", setting_to_json(setting)},
               {"mean", est.mean},
               {"stderr", est.stderr_},
               {"draws", est.draws}};
  } else {
    results = to_json(evaluate_exact(model, setting, data.test, scheme, workers, cfg.seed));
    results["mode"] = "exact";
  }
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return make_report("evaluate", to_json(cfg), results, cfg.seed, {{"elapsed_seconds", secs}, {"workers", workers}});
}

template <class T>
std::pair<json, std::string> run_sweep(const RunConfig& cfg, std::size_t workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(cfg.dataset);
  SweepContext ctx;
  ctx.plan = cfg.resolved_plan();
  ctx.scheme = cfg.scheme;
  ctx.failout = cfg.resolved_failout(ctx.plan.node_count());
  ctx.weights = cfg.weights;
  ctx.setting = cfg.resolved_setting(ctx.plan.node_count());
  ctx.train = cfg.train_options();
  ctx.seed = cfg.seed;
  ctx.workers = workers;
  const auto grid = sweep<T>(cfg.sweep.axis, cfg.sweep.repeats, ctx, data);
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {make_report("sweep", to_json(cfg), to_json(grid), cfg.seed, {{"elapsed_seconds", secs}, {"workers", workers}}),
          sweep_csv(grid)};
}

template <class T>
json run_simulate(const RunConfig& cfg, const DistributedModel<T>& model) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = load_dataset(cfg.dataset);
  const auto sim = cfg.sim.resolve(model.node_count());
  const auto rep = run_sim(sim, model, Scheme{model.scheme, cfg.inference_scaling}, data.test);
  auto results = to_json(rep);
  if (sim.record_trace) results["trace"] = trace_to_lines(rep.trace);
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return make_report("simulate", to_json(cfg), results, sim.seed, {{"elapsed_seconds", secs}});
}

inline json run_bandwidth(const PartitionPlan& plan) {
  const auto topo = Topology::from_plan(plan);
  const auto all = AliveMask::all_alive(topo.node_count());
  json per_scheme = json::object();
  for (auto k : kAllSchemes) per_scheme[to_string(k)] = bandwidth_per_inference(topo, k, all);
  json edges = json::array();
  for (const auto& e : topo.edges())
    edges.push_back({{"src", node_label(e.src)}, {"dst", node_label(e.dst)},
                     {"kind", e.kind == EdgeKind::Skip ? "skip" : "simple"}, {"scalars", e.payload_dim}});
  return {{"plan", plan.name}, {"scalars_per_inference", per_scheme}, {"edges", edges},
          {"savings_vs_dfg", bandwidth_savings(topo)}};
}

}  // namespace resilinet

// resilinet: train, evaluate, sweep, simulate, bandwidth, gen-data.
//
// Exit codes: 0 success, 2 config or user error, 3 corrupt artifact or data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "resilinet/harness.hpp"

namespace fs = std::filesystem;
using namespace resilinet;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t workers = 1;
  std::optional<int> precision;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run config (JSON); a report file also works");
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_option("--out", f.out, "Output directory (default: config out_dir)");
  cmd->add_option("--workers", f.workers, "Threads for scenario evaluation and sweep cells")->check(CLI::PositiveNumber);
  cmd->add_option("--precision", f.precision, "Scalar width")->check(CLI::IsMember({32, 64}));
}

/// Config from --config (or `fallback` when absent), then flag overrides,
/// re-validated so the echoed config is always loadable.
RunConfig resolve_config(const CommonFlags& f, const json& fallback = json::object()) {
  json j = f.config.empty() ? fallback : read_json_file(f.config, "config");
  if (j.is_object() && j.contains("schema_version") && j.contains("config")) j = j.at("config");
  if (f.seed) j["seed"] = *f.seed;
  if (f.precision) j["precision"] = *f.precision;
  if (!f.out.empty()) j["out_dir"] = f.out;
  return config_from_json(j);
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path p(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("out_dir: cannot create '" + p.string() + "': " + ec.message());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("out_dir: cannot write '" + path.string() + "'");
  out << text;
}

void write_report(const fs::path& path, const json& report) {
  write_text(path, report.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
}

template <class F>
auto with_precision(int bits, F&& f) {
  if (bits == 64) return f(double{});
  return f(float{});
}

double num(const json& j) { return j.get<double>(); }

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * x);
  return buf;
}

void print_evaluation(const json& r) {
  if (r.at("mode") == "mc") {
    std::cout << "Monte Carlo accuracy " << pct(r.at("mean").get<double>()) << "% +- "
              << pct(r.at("stderr").get<double>()) << " (" << r.at("draws") << " draws)\n";
    return;
  }
  std::printf("%-12s %10s %10s\n", "Failing", "Prob. (%)", "Acc. (%)");
  for (const auto& s : r.at("scenarios"))
    std::printf("%-12s %10.3f %10s\n", s.at("failing").get<std::string>().c_str(),
                100.0 * s.at("probability").get<double>(), pct(s.at("accuracy").get<double>()).c_str());
  std::printf("%-12s %10s %10s\n", "Average", "", pct(r.at("expected_accuracy").get<double>()).c_str());
}

// ---------------------------------------------------------------- commands

int cmd_train(const CommonFlags& f) {
  const auto cfg = resolve_config(f);
  const auto dir = out_dir(cfg);
  return with_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    auto out = run_train<T>(cfg);
    write_file_bytes((dir / "model.rsn").string(), serialize_model(out.model, out.report["config"]));
    std::cout << "wrote " << (dir / "model.rsn").string() << "\n";
    write_report(dir / "train_report.json", out.report);
    const auto& hist = out.report["results"]["history"];
    if (!hist.empty())
      std::cout << "final epoch loss " << num(hist.back()["loss"]) << ", train accuracy "
                << pct(num(hist.back()["accuracy"])) << "%\n";
    return 0;
  });
}

struct ModelFlags {
  std::string model;
  std::string setting;
  std::string mode;
  std::optional<std::size_t> draws;
  std::string sim;
};

/// Reads the artifact; its embedded training config is the default config.
std::pair<std::string, ArtifactHeader> open_artifact(const CommonFlags& f, const ModelFlags& m, RunConfig& cfg) {
  std::string path = m.model;
  json base = json::object();
  if (path.empty() && !f.config.empty()) {
    const auto c = resolve_config(f);
    path = c.model_path;
  }
  if (path.empty()) throw ConfigError("model_path: give --model or set model_path in the config");
  auto bytes = read_file_bytes(path);
  auto header = read_artifact_header(bytes);
  if (header.metadata.contains("config")) base = header.metadata.at("config");
  json j = f.config.empty() ? base : read_json_file(f.config, "config");
  if (j.is_object() && j.contains("schema_version") && j.contains("config")) j = j.at("config");
  j["model_path"] = path;
  j["precision"] = static_cast<int>(8 * header.scalar_bytes);
  if (f.precision && *f.precision != static_cast<int>(8 * header.scalar_bytes))
    throw ConfigError("precision: model was stored with " + std::to_string(8 * header.scalar_bytes) + "-bit scalars");
  if (f.seed) j["seed"] = *f.seed;
  if (!f.out.empty()) j["out_dir"] = f.out;
  if (!m.setting.empty()) j["setting"] = m.setting;
  if (!m.mode.empty()) j["evaluation"]["mode"] = m.mode;
  if (m.draws) j["evaluation"]["draws"] = *m.draws;
  if (!m.sim.empty()) {
    auto sim = read_json_file(m.sim, "sim");
    if (sim.is_object() && sim.contains("sim")) sim = sim.at("sim");
    if (f.seed) sim["seed"] = *f.seed;
    j["sim"] = sim;
  } else if (f.seed && j.contains("sim")) {
    j["sim"]["seed"] = *f.seed;
  }
  // The artifact fixes the scheme; failout is a training-only setting.
  if (header.metadata.contains("scheme")) j["scheme"] = header.metadata.at("scheme");
  cfg = config_from_json(j);
  return {std::move(bytes), std::move(header)};
}

int cmd_evaluate(const CommonFlags& f, const ModelFlags& m) {
  RunConfig cfg;
  const auto [bytes, header] = open_artifact(f, m, cfg);
  const auto dir = out_dir(cfg);
  return with_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto model = deserialize_model<T>(bytes);
    const auto report = run_evaluate(cfg, model, f.workers);
    print_evaluation(report["results"]);
    write_report(dir / "evaluate_report.json", report);
    return 0;
  });
}

int cmd_simulate(const CommonFlags& f, const ModelFlags& m) {
  RunConfig cfg;
  const auto [bytes, header] = open_artifact(f, m, cfg);
  const auto dir = out_dir(cfg);
  return with_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto model = deserialize_model<T>(bytes);
    const auto report = run_simulate(cfg, model);
    const auto& r = report["results"];
    std::cout << "requests " << r["requests"] << ", accuracy " << pct(num(r["accuracy"])) << "%, crashes "
              << r["crashes"] << ", mean detection latency " << num(r["mean_detection_latency_s"]) << " s\n";
    for (std::size_t n = 0; n < r["availability"].size(); ++n)
      std::cout << "  " << node_label(static_cast<int>(n)) << " availability " << num(r["availability"][n])
                << " (analytic " << num(r["analytic_availability"][n]) << ")\n";
    write_report(dir / "simulate_report.json", report);
    return 0;
  });
}

int cmd_sweep(const CommonFlags& f, const std::string& axis, std::optional<std::size_t> repeats) {
  json j = f.config.empty() ? json::object() : read_json_file(f.config, "config");
  if (j.is_object() && j.contains("schema_version") && j.contains("config")) j = j.at("config");
  if (!axis.empty()) j["sweep"]["axis"] = axis;
  if (repeats) j["sweep"]["repeats"] = *repeats;
  CommonFlags g = f;
  g.config.clear();
  const auto cfg = resolve_config(g, j);
  const auto dir = out_dir(cfg);
  return with_precision(cfg.precision, [&](auto tag) {
    using T = decltype(tag);
    const auto [report, csv] = run_sweep<T>(cfg, f.workers);
    for (const auto& s : report["results"]["summary"])
      std::printf("%-22s %8s%% +- %s\n", std::string(s["level"]).c_str(), pct(num(s["mean"])).c_str(),
                  pct(num(s["stddev"])).c_str());
    std::cout << "stddev across levels " << pct(num(report["results"]["stddev_across_levels"])) << " pp\n";
    write_text(dir / "sweep.csv", csv);
    std::cout << "wrote " << (dir / "sweep.csv").string() << "\n";
    write_report(dir / "sweep_report.json", report);
    return 0;
  });
}

int cmd_bandwidth(const CommonFlags& f, const std::string& plan_arg) {
  json plan_json;
  if (!plan_arg.empty()) {
    plan_json = fs::exists(plan_arg) ? read_json_file(plan_arg, "plan") : json(plan_arg);
    if (plan_json.is_object() && plan_json.contains("plan")) plan_json = plan_json.at("plan");
  } else {
    plan_json = resolve_config(f).plan;
  }
  const auto plan = plan_from_json(plan_json);
  const auto r = run_bandwidth(plan);
  std::printf("%-12s %10s\n", "Scheme", "Scalars");
  for (auto k : kAllSchemes)
    std::printf("%-12s %10zu\n", to_string(k).c_str(), r["scalars_per_inference"][to_string(k)].get<std::size_t>());
  std::printf("ResiliNet saves %s%% of DFG traffic\n", pct(num(r["savings_vs_dfg"])).c_str());
  if (!f.out.empty()) {
    RunConfig cfg;
    cfg.out_dir = f.out;
    write_report(out_dir(cfg) / "bandwidth_report.json",
                 make_report("bandwidth", json{{"plan", plan_json}}, r, 0));
  }
  return 0;
}

struct DataFlags {
  std::optional<std::size_t> features, classes, samples_per_class;
  std::optional<double> spread;
};

int cmd_gen_data(const CommonFlags& f, const DataFlags& d) {
  json j = f.config.empty() ? json::object() : read_json_file(f.config, "config");
  if (j.is_object() && j.contains("schema_version") && j.contains("config")) j = j.at("config");
  auto& ds = j["dataset"];
  if (!ds.contains("kind")) ds["kind"] = "synthetic";
  if (d.features) {
    ds["features"] = *d.features;
    j["plan"] = plan_to_json([&] {
      auto p = plan_from_json(j.value("plan", json("health")));
      p.input_dim = *d.features;
      return p;
    }());
  }
  if (d.classes) {
    ds["classes"] = *d.classes;
    auto p = plan_from_json(j.value("plan", json("health")));
    p.classes = *d.classes;
    j["plan"] = plan_to_json(p);
  }
  if (d.samples_per_class) ds["samples_per_class"] = *d.samples_per_class;
  if (d.spread) ds["spread"] = *d.spread;
  if (f.seed) ds["seed"] = *f.seed;
  CommonFlags g = f;
  g.config.clear();
  g.seed.reset();
  const auto cfg = resolve_config(g, j);
  if (cfg.dataset.kind != DatasetConfig::Kind::Synthetic) throw ConfigError("dataset.kind: gen-data needs synthetic");
  const auto split = generate_synthetic(cfg.dataset.synthetic, cfg.dataset.split);
  Dataset merged;
  merged.classes = split.train.classes;
  const auto rows = split.train.size() + split.val.size() + split.test.size();
  merged.features.resize(static_cast<Eigen::Index>(rows), split.train.features.cols());
  Eigen::Index r = 0;
  for (const Dataset* part : {&split.train, &split.val, &split.test})
    for (std::size_t i = 0; i < part->size(); ++i, ++r) {
      merged.features.row(r) = part->features.row(static_cast<Eigen::Index>(i));
      merged.labels.push_back(part->labels[i]);
    }
  const auto path = out_dir(cfg) / "data.csv";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("out_dir: cannot write '" + path.string() + "'");
  write_csv(merged, out);
  std::cout << "wrote " << path.string() << " (" << rows << " rows, " << merged.classes << " classes)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure-resilient distributed inference: training, evaluation and simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  CommonFlags common;
  ModelFlags model;
  DataFlags data;
  std::string axis, plan;
  std::optional<std::size_t> repeats;

  auto* train = app.add_subcommand("train", "Train a model and write model.rsn plus train_report.json");
  add_common(train, common);

  auto* evaluate = app.add_subcommand("evaluate", "Expected accuracy over all failure scenarios");
  add_common(evaluate, common);
  evaluate->add_option("--model", model.model, "Model artifact");
  evaluate->add_option("--setting", model.setting, "Failure setting: Normal | Poor | Hazardous | None");
  evaluate->add_option("--mode", model.mode, "exact | mc")->check(CLI::IsMember({"exact", "mc"}));
  evaluate->add_option("--draws", model.draws, "Monte Carlo draws");

  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep over one axis");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("--axis", axis, "failout-rate | weights | skip-config");
  sweep_cmd->add_option("--repeats", repeats, "Seeds per level")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Crash/repair simulation with heartbeat detection");
  add_common(simulate, common);
  simulate->add_option("--model", model.model, "Model artifact");
  simulate->add_option("--sim", model.sim, "Simulation parameters (e.g. presets/normal.sim)");

  auto* bandwidth = app.add_subcommand("bandwidth", "Scalars per inference for each scheme");
  add_common(bandwidth, common);
  bandwidth->add_option("--plan", plan, "Preset name or plan file");

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic Gaussian-blob dataset as CSV");
  add_common(gen, common);
  gen->add_option("--features", data.features, "Feature columns");
  gen->add_option("--classes", data.classes, "Class count");
  gen->add_option("--samples-per-class", data.samples_per_class, "Rows per class");
  gen->add_option("--spread", data.spread, "Per-feature noise standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(common);
    if (*evaluate) return cmd_evaluate(common, model);
    if (*sweep_cmd) return cmd_sweep(common, axis, repeats);
    if (*simulate) return cmd_simulate(common, model);
    if (*bandwidth) return cmd_bandwidth(common, plan);
    if (*gen) return cmd_gen_data(common, data);
  } catch (const ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: invalid configuration\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

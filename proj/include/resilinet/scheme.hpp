#pragma once

#include <cctype>
#include <cmath>
#include <string>

#include "resilinet/errors.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

enum class SchemeKind { Vanilla, DFG, ResiliNet, ResiliNetPlus };

struct Scheme {
  SchemeKind kind = SchemeKind::ResiliNet;
  /// Multiply hyperconnection weights by the source's survival probability
  /// at inference. Off by default.
  bool inference_scaling = false;

  bool uses_skips() const { return kind != SchemeKind::Vanilla; }
  /// Skips carry traffic even when the bypassed node is up.
  bool skips_always_active() const {
    return kind == SchemeKind::DFG || kind == SchemeKind::ResiliNetPlus;
  }
};

inline std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::Vanilla: return "Vanilla";
    case SchemeKind::DFG: return "DFG";
    case SchemeKind::ResiliNet: return "ResiliNet";
    case SchemeKind::ResiliNetPlus: return "ResiliNet+";
  }
  return "?";
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline SchemeKind parse_scheme(const std::string& name) {
  const auto k = lower(name);
  if (k == "vanilla") return SchemeKind::Vanilla;
  if (k == "dfg") return SchemeKind::DFG;
  if (k == "resilinet") return SchemeKind::ResiliNet;
  if (k == "resilinet+" || k == "resilinetplus" || k == "resilinet-plus") return SchemeKind::ResiliNetPlus;
  throw ValidationError("scheme: unknown '" + name + "'");
}

inline constexpr SchemeKind kAllSchemes[] = {SchemeKind::ResiliNetPlus, SchemeKind::ResiliNet,
                                             SchemeKind::DFG, SchemeKind::Vanilla};

enum class FailoutMode { Off, Fixed, MatchFailure };

/// Training-time node drop policy. A fresh mask is drawn for every batch.
struct FailoutConfig {
  FailoutMode mode = FailoutMode::Off;
  double rate = 0.0;         // Fixed
  FailureSetting setting;    // MatchFailure

  static FailoutConfig off() { return {}; }
  static FailoutConfig fixed(double r) { return {FailoutMode::Fixed, r, {}}; }
  static FailoutConfig match(FailureSetting s) { return {FailoutMode::MatchFailure, 0.0, std::move(s)}; }

  bool enabled() const { return mode != FailoutMode::Off; }

  void validate(std::size_t node_count) const {
    if (mode == FailoutMode::Fixed && !(rate >= 0.0 && rate <= 1.0))
      throw ConfigError("failout.rate: not in [0,1]");
    if (mode == FailoutMode::MatchFailure) {
      setting.validate();
      if (setting.node_count() != node_count)
        throw ConfigError("failout.setting: has " + std::to_string(setting.node_count()) +
                          " entries for " + std::to_string(node_count) + " nodes");
    }
  }

  /// Drop probability for a compute node.
  double drop_prob(int node) const {
    switch (mode) {
      case FailoutMode::Off: return 0.0;
      case FailoutMode::Fixed: return rate;
      case FailoutMode::MatchFailure: return setting.failure_prob(node);
    }
    return 0.0;
  }

  std::string label() const {
    switch (mode) {
      case FailoutMode::Off: return "off";
      case FailoutMode::Fixed: {
        const double pct = rate * 100.0;
        const auto rounded = static_cast<long long>(pct + 0.5);
        if (std::abs(pct - static_cast<double>(rounded)) < 1e-9) return std::to_string(rounded) + "%";
        return std::to_string(pct) + "%";
      }
      case FailoutMode::MatchFailure: return "Failure";
    }
    return "?";
  }
};

struct HyperWeightScheme {
  enum class Kind { One, Reliability, RelativeReliability, UniformRandom };
  Kind kind = Kind::One;
  double lo = 0.0;
  double hi = 1.0;

  static HyperWeightScheme one() { return {}; }
  static HyperWeightScheme reliability() { return {Kind::Reliability, 0, 1}; }
  static HyperWeightScheme relative_reliability() { return {Kind::RelativeReliability, 0, 1}; }
  static HyperWeightScheme uniform(double lo, double hi) {
    if (lo > hi) throw ValidationError("weights: uniform lo > hi");
    return {Kind::UniformRandom, lo, hi};
  }

  std::string label() const {
    switch (kind) {
      case Kind::One: return "One";
      case Kind::Reliability: return "Reliability";
      case Kind::RelativeReliability: return "RelativeReliability";
      case Kind::UniformRandom: {
        auto fmt = [](double x) {
          std::string s = std::to_string(x);
          while (s.size() > 1 && s.back() == '0') s.pop_back();
          if (!s.empty() && s.back() == '.') s.pop_back();
          return s;
        };
        return "UniformRandom(" + fmt(lo) + "," + fmt(hi) + ")";
      }
    }
    return "?";
  }

  static HyperWeightScheme parse(const std::string& name) {
    const auto k = lower(name);
    if (k == "one" || k == "1") return one();
    if (k == "reliability") return reliability();
    if (k == "relativereliability" || k == "relative-reliability" || k == "relative_reliability")
      return relative_reliability();
    if (k == "uniformrandom" || k == "uniform" || k == "uniformrandom(0,1)") return uniform(0, 1);
    if (k.rfind("uniformrandom(", 0) == 0 && k.back() == ')') {
      const auto inner = k.substr(14, k.size() - 15);
      const auto comma = inner.find(',');
      if (comma != std::string::npos) {
        try {
          return uniform(std::stod(inner.substr(0, comma)), std::stod(inner.substr(comma + 1)));
        } catch (const std::logic_error&) {
        }
      }
    }
    throw ValidationError("weights: unknown scheme '" + name + "'");
  }
};

}  // namespace resilinet

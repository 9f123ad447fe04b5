#pragma once

// Routing through the distributed graph under an alive mask, failout
// training, and hyperconnection weight schemes.
//
// A dead node emits Absent (std::nullopt). Under the selective join ⊙ a
// hyperconnection slot takes its primary input when present, otherwise the
// nearest present detour. Under the additive join ⊕ all present inputs are
// summed and Absent acts as zero. The node input is always the ⊕ of its
// slots, which covers multi-parent joins.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include "resilinet/dataset.hpp"
#include "resilinet/model.hpp"
#include "resilinet/nn_core.hpp"
#include "resilinet/rng.hpp"
#include "resilinet/scheme.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

enum class JoinOp { Select, Sum };

template <class T>
std::optional<Matrix<T>> combine_inputs(const std::optional<Matrix<T>>& primary,
                                        const std::optional<Matrix<T>>& detour, JoinOp op) {
  if (primary && detour && (primary->rows() != detour->rows() || primary->cols() != detour->cols()))
    throw DimensionError("combine_inputs: operands differ in shape");
  if (op == JoinOp::Select) return primary ? primary : detour;
  if (!primary) return detour;
  if (!detour) return primary;
  return Matrix<T>(*primary + *detour);
}

/// b_i ~ Bernoulli(1 - f_i) for every compute node; the cloud stays alive.
/// One draw per non-cloud node in id order, so the stream advances by the
/// same amount for every mask.
inline AliveMask sample_failout_mask(const FailoutConfig& cfg, std::size_t node_count, SeededRng& rng) {
  auto mask = AliveMask::all_alive(node_count, MaskOrigin::FailoutDraw);
  if (!cfg.enabled()) return mask;
  for (int n = 0; n + 1 < static_cast<int>(node_count); ++n)
    if (rng.bernoulli(cfg.drop_prob(n))) mask.set_alive(n, false);
  return mask;
}

/// Hyperconnections feeding `node` that carry data under `scheme`, given
/// which sources currently have output.
template <class Present>
std::vector<std::size_t> active_edges(const Topology& topo, SchemeKind scheme, int node, Present&& present) {
  std::vector<std::size_t> out;
  const auto& edges = topo.edges();
  switch (scheme) {
    case SchemeKind::Vanilla:
      for (const auto& slot : topo.slots(node))
        if (present(edges[slot.primary].src)) out.push_back(slot.primary);
      break;
    case SchemeKind::ResiliNet:
      for (const auto& slot : topo.slots(node)) {
        if (present(edges[slot.primary].src)) {
          out.push_back(slot.primary);
          continue;
        }
        for (auto d : slot.detours)
          if (present(edges[d].src)) {
            out.push_back(d);
            break;
          }
      }
      break;
    case SchemeKind::DFG:
    case SchemeKind::ResiliNetPlus:
      for (auto e : topo.incoming(node))
        if (present(edges[e].src)) out.push_back(e);
      break;
  }
  return out;
}

/// Which nodes produce output under (mask, scheme), plus the active
/// hyperconnections into each. Depends only on the mask, not on data.
struct Routing {
  std::vector<char> present;                  // per node
  std::vector<std::vector<std::size_t>> used;  // per node, active incoming edges

  bool cloud_reached() const { return !present.empty() && present.back(); }
};

inline Routing route(const Topology& topo, const AliveMask& mask, SchemeKind scheme) {
  if (mask.node_count() != topo.node_count()) throw DimensionError("route: mask size mismatch");
  Routing r;
  r.present.assign(topo.node_count(), 0);
  r.used.resize(topo.node_count());
  const auto has = [&](int src) { return src == kInputNode || r.present[static_cast<std::size_t>(src)]; };
  for (int n = 0; n < static_cast<int>(topo.node_count()); ++n) {
    if (!mask.alive(n)) continue;
    r.used[static_cast<std::size_t>(n)] = active_edges(topo, scheme, n, has);
    r.present[static_cast<std::size_t>(n)] = !r.used[static_cast<std::size_t>(n)].empty();
  }
  return r;
}

namespace detail {

// Weighted sum of the active payloads into `node`. A mutable model caches
// projection activations for backward; a const model only predicts.
template <class Model, class T>
Matrix<T> node_input(Model& model, const Routing& r, int node, const Matrix<T>& x,
                     const std::vector<Matrix<T>>& outputs, bool scaled) {
  Matrix<T> acc;
  bool first = true;
  for (auto e : r.used[static_cast<std::size_t>(node)]) {
    const auto& h = model.topology.edges()[e];
    const Matrix<T>& src = h.src == kInputNode ? x : outputs[static_cast<std::size_t>(h.src)];
    Matrix<T> payload;
    auto& proj = model.projections[e];
    if (!proj)
      payload = src;
    else if constexpr (std::is_const_v<Model>)
      payload = proj->predict(src);
    else
      payload = proj->forward(src);
    double wd = model.edge_weights[e];
    if (scaled) wd *= model.survival[e];
    const T w = static_cast<T>(wd);
    if (first) {
      acc = w == T(1) ? std::move(payload) : Matrix<T>(w * payload);
      first = false;
    } else {
      acc += w * payload;
    }
  }
  return acc;
}

}  // namespace detail

/// Class scores for batch x, or Absent when no information reaches the cloud.
template <class T>
std::optional<Matrix<T>> gated_forward(const DistributedModel<T>& model, const AliveMask& mask, Scheme scheme,
                                       const Matrix<T>& x) {
  const auto r = route(model.topology, mask, scheme.kind);
  if (!r.cloud_reached()) return std::nullopt;
  const bool scaled = scheme.inference_scaling || model.inference_scaling;
  std::vector<Matrix<T>> outputs(model.node_count());
  for (int n = 0; n < static_cast<int>(model.node_count()); ++n) {
    if (!r.present[static_cast<std::size_t>(n)]) continue;
    auto in = detail::node_input(model, r, n, x, outputs, scaled);
    outputs[static_cast<std::size_t>(n)] = model.stacks[static_cast<std::size_t>(n)].predict(in);
  }
  return std::move(outputs.back());
}

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 1024;
  OptimizerConfig optimizer;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0;
  double accuracy = 0;
  std::size_t batches = 0;
  std::size_t skipped_batches = 0;  // failout left the cloud unreachable
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

/// Rejects scheme/failout pairs with no meaning: Vanilla has no detour to
/// train and DFG is failout-free by definition.
inline void check_training_config(SchemeKind scheme, const FailoutConfig& failout, std::size_t node_count) {
  if (failout.enabled() && scheme == SchemeKind::Vanilla)
    throw ConfigError("failout: Vanilla has no skip hyperconnections; failout must be off");
  if (failout.enabled() && scheme == SchemeKind::DFG)
    throw ConfigError("failout: DFG trains without failout; failout must be off");
  failout.validate(node_count);
}

/// One optimizer step on a batch under `mask`. Returns the batch loss and
/// correct count, or nullopt when the cloud is unreachable (no update).
/// Only parameters on nodes that received gradient, and projections on
/// active hyperconnections, are stepped.
template <class T>
std::optional<std::pair<double, std::size_t>> train_step(DistributedModel<T>& model, Optimizer<T>& opt,
                                                         const AliveMask& mask, SchemeKind scheme,
                                                         const Matrix<T>& x, std::span<const ClassLabel> y) {
  const auto& topo = model.topology;
  const auto r = route(topo, mask, scheme);
  if (!r.cloud_reached()) return std::nullopt;
  const auto v = model.node_count();
  std::vector<Matrix<T>> outputs(v);
  for (int n = 0; n < static_cast<int>(v); ++n) {
    if (!r.present[static_cast<std::size_t>(n)]) continue;
    auto in = detail::node_input(model, r, n, x, outputs, false);
    outputs[static_cast<std::size_t>(n)] = model.stacks[static_cast<std::size_t>(n)].forward(in);
  }
  const auto loss = softmax_cross_entropy<T>(outputs.back(), y);
  const auto pred = argmax_rows(outputs.back());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];

  std::vector<std::optional<Matrix<T>>> grad_out(v);
  grad_out.back() = loss.dlogits;
  std::vector<std::vector<LayerGrad<T>>> node_grads(v);
  std::vector<std::vector<LayerGrad<T>>> proj_grads(topo.edges().size());
  for (int n = static_cast<int>(v) - 1; n >= 0; --n) {
    auto& g = grad_out[static_cast<std::size_t>(n)];
    if (!g) continue;
    Matrix<T> dx = model.stacks[static_cast<std::size_t>(n)].backward(*g, node_grads[static_cast<std::size_t>(n)]);
    for (auto e : r.used[static_cast<std::size_t>(n)]) {
      const auto& h = topo.edges()[e];
      Matrix<T> d = static_cast<T>(model.effective_weight(e, true)) * dx;
      if (auto& proj = model.projections[e]) d = proj->backward(d, proj_grads[e]);
      if (h.src == kInputNode) continue;
      auto& dst = grad_out[static_cast<std::size_t>(h.src)];
      if (dst)
        *dst += d;
      else
        dst = std::move(d);
    }
  }
  for (auto& st : model.stacks) st.clear_cache();
  for (auto& p : model.projections)
    if (p) p->clear_cache();

  for (int n = 0; n < static_cast<int>(v); ++n) {
    auto& grads = node_grads[static_cast<std::size_t>(n)];
    auto& layers = model.stacks[static_cast<std::size_t>(n)].layers();
    if (grads.size() != layers.size()) continue;
    for (std::size_t k = 0; k < layers.size(); ++k) opt.step_layer(model.layer_slot(n, k), layers[k], grads[k]);
  }
  for (std::size_t e = 0; e < proj_grads.size(); ++e) {
    if (!model.projections[e] || proj_grads[e].empty()) continue;
    opt.step_layer(model.projection_slot(e), model.projections[e]->layers()[0], proj_grads[e][0]);
  }
  return std::make_pair(static_cast<double>(loss.loss), correct);
}

/// Minibatch training. Every epoch reshuffles (Shuffle stream); every batch
/// draws a fresh failout mask (Failout stream) when failout is on.
template <class T>
TrainHistory train(DistributedModel<T>& model, const Dataset& data, SchemeKind scheme,
                   const FailoutConfig& failout, const TrainOptions& opts, std::uint64_t seed) {
  if (data.size() == 0) throw UsageError("train: empty dataset");
  if (opts.batch_size == 0) throw ConfigError("batch_size: must be >= 1");
  if (data.feature_count() != model.topology.input_dim())
    throw DimensionError("train: dataset has " + std::to_string(data.feature_count()) +
                         " features, model expects " + std::to_string(model.topology.input_dim()));
  check_training_config(scheme, failout, model.node_count());
  model.scheme = scheme;

  SeededRng shuffle_rng(seed, Stream::Shuffle);
  SeededRng failout_rng(seed, Stream::Failout);
  Optimizer<T> opt(opts.optimizer);
  const Matrix<T> xs = data.features.template cast<T>();
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory hist;
  for (std::size_t ep = 0; ep < opts.epochs; ++ep) {
    shuffle_rng.shuffle(order.begin(), order.end());
    EpochStats st;
    st.epoch = ep + 1;
    double loss_sum = 0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const auto end = std::min(order.size(), start + opts.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      Matrix<T> xb(b, xs.cols());
      std::vector<ClassLabel> yb(static_cast<std::size_t>(b));
      for (Eigen::Index i = 0; i < b; ++i) {
        xb.row(i) = xs.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(i)]));
        yb[static_cast<std::size_t>(i)] = data.labels[order[start + static_cast<std::size_t>(i)]];
      }
      const auto mask = sample_failout_mask(failout, model.node_count(), failout_rng);
      ++st.batches;
      const auto res = train_step(model, opt, mask, scheme, xb, yb);
      if (!res) {
        ++st.skipped_batches;
        continue;
      }
      loss_sum += res->first * static_cast<double>(b);
      correct += res->second;
      seen += static_cast<std::size_t>(b);
    }
    st.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    st.accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    hist.epochs.push_back(st);
  }
  return hist;
}

/// Sets the fixed scalar weight of every hyperconnection.
///   One:                 w = 1
///   Reliability:         w_ij = r_i
///   RelativeReliability: w_ij = r_i / sum_{k in H_j} r_k   (H_j: all edges into j)
///   UniformRandom(lo,hi): w ~ U(lo, hi), HyperWeights stream
template <class T>
void assign_hyperconnection_weights(DistributedModel<T>& model, const HyperWeightScheme& ws,
                                    const FailureSetting& setting, std::uint64_t seed) {
  const auto& topo = model.topology;
  if (ws.kind == HyperWeightScheme::Kind::Reliability || ws.kind == HyperWeightScheme::Kind::RelativeReliability) {
    setting.validate();
    if (setting.node_count() != topo.node_count())
      throw ValidationError("failure_setting: size does not match the topology");
  }
  SeededRng rng(seed, Stream::HyperWeights);
  const auto& edges = topo.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    switch (ws.kind) {
      case HyperWeightScheme::Kind::One: model.edge_weights[e] = 1.0; break;
      case HyperWeightScheme::Kind::Reliability: model.edge_weights[e] = setting.reliability(edges[e].src); break;
      case HyperWeightScheme::Kind::RelativeReliability: {
        double denom = 0;
        for (auto k : topo.incoming(edges[e].dst)) denom += setting.reliability(edges[k].src);
        model.edge_weights[e] = denom > 0 ? setting.reliability(edges[e].src) / denom : 0.0;
        break;
      }
      case HyperWeightScheme::Kind::UniformRandom: model.edge_weights[e] = rng.uniform(ws.lo, ws.hi); break;
    }
  }
  model.weight_scheme = ws;
}

/// When on, inference multiplies each hyperconnection weight by its source's
/// survival probability. Training always uses the unscaled weights.
template <class T>
void inference_scaling_mode(DistributedModel<T>& model, const FailureSetting& setting, bool on) {
  if (on) {
    setting.validate();
    if (setting.node_count() != model.node_count())
      throw ValidationError("failure_setting: size does not match the topology");
    for (std::size_t e = 0; e < model.topology.edges().size(); ++e)
      model.survival[e] = setting.reliability(model.topology.edges()[e].src);
  } else {
    model.survival.assign(model.topology.edges().size(), 1.0);
  }
  model.inference_scaling = on;
}

/// Predicted labels under a mask, or nullopt when the cloud is unreachable.
/// Evaluated in chunks to bound memory.
template <class T>
std::optional<std::vector<ClassLabel>> predict_labels(const DistributedModel<T>& model, const AliveMask& mask,
                                                      Scheme scheme, const Matrix<T>& x,
                                                      std::size_t chunk = 4096) {
  if (!route(model.topology, mask, scheme.kind).cloud_reached()) return std::nullopt;
  std::vector<ClassLabel> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index s = 0; s < x.rows(); s += static_cast<Eigen::Index>(chunk)) {
    const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(chunk), x.rows() - s);
    const Matrix<T> xb = x.middleRows(s, n);
    auto scores = gated_forward(model, mask, scheme, xb);
    auto p = argmax_rows(*scores);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace resilinet

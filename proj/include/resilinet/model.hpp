#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "resilinet/nn_core.hpp"
#include "resilinet/scheme.hpp"
#include "resilinet/topology.hpp"

namespace resilinet {

/// A partitioned dense network: one layer stack per physical node, an
/// optional linear projection per hyperconnection whose payload does not
/// match the destination width, and a fixed scalar weight per
/// hyperconnection.
template <class T>
struct DistributedModel {
  PartitionPlan plan;
  Topology topology;
  std::vector<Sequential<T>> stacks;                  // per node
  std::vector<std::optional<Sequential<T>>> projections;  // per edge
  std::vector<double> edge_weights;                   // per edge, set by the weight scheme
  HyperWeightScheme weight_scheme;
  SchemeKind scheme = SchemeKind::ResiliNet;  // scheme the model was trained for

  // Inference-time scaling by source survival probability; off by default.
  bool inference_scaling = false;
  std::vector<double> survival;  // per edge, source reliability; used when scaling

  std::size_t node_count() const { return topology.node_count(); }
  std::size_t classes() const { return topology.classes(); }

  /// Weight applied to edge e's payload.
  double effective_weight(std::size_t e, bool training) const {
    double w = edge_weights[e];
    if (!training && inference_scaling) w *= survival[e];
    return w;
  }

  /// Optimizer slot of the first parameter block of a node's layer k.
  std::size_t layer_slot(int node, std::size_t k) const {
    std::size_t s = 0;
    for (int n = 0; n < node; ++n) s += 2 * stacks[static_cast<std::size_t>(n)].layers().size();
    return s + 2 * k;
  }
  std::size_t projection_slot(std::size_t e) const {
    std::size_t s = 0;
    for (const auto& st : stacks) s += 2 * st.layers().size();
    return s + 2 * e;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& st : stacks)
      for (const auto& l : st.layers()) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    for (const auto& p : projections)
      if (p)
        for (const auto& l : p->layers()) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }
};

/// Instantiates every node's layers (He-uniform, ReLU hidden, identity
/// logits on the cloud) and a projection on every hyperconnection whose
/// payload width differs from its destination's input width. Draws come from
/// the Init stream of `seed` in node order, then edge order.
template <class T>
DistributedModel<T> build_model(const PartitionPlan& plan, std::uint64_t seed) {
  DistributedModel<T> m;
  m.plan = plan;
  m.topology = Topology::from_plan(plan);
  SeededRng rng(seed, Stream::Init);
  for (const auto& node : m.topology.nodes()) {
    std::vector<DenseLayer<T>> layers;
    std::size_t in = node.input_dim;
    for (std::size_t k = 0; k < node.hosted_layers.size(); ++k) {
      const bool logits = node.is_cloud && k + 1 == node.hosted_layers.size();
      layers.push_back(init_layer<T>(in, node.hosted_layers[k], rng,
                                     logits ? Activation::Softmax : Activation::ReLU));
      in = node.hosted_layers[k];
    }
    m.stacks.emplace_back(std::move(layers));
  }
  for (const auto& e : m.topology.edges()) {
    if (e.needs_projection()) {
      std::vector<DenseLayer<T>> p;
      p.push_back(init_layer<T>(e.payload_dim, e.dst_dim, rng, Activation::Identity));
      m.projections.emplace_back(Sequential<T>(std::move(p)));
    } else {
      m.projections.emplace_back(std::nullopt);
    }
  }
  m.edge_weights.assign(m.topology.edges().size(), 1.0);
  m.survival.assign(m.topology.edges().size(), 1.0);
  return m;
}

}  // namespace resilinet

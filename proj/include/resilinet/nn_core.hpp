#pragma once

// Dense-layer engine: forward/backward with cached activations, softmax
// cross-entropy, He-uniform init and SGD-momentum / Adam optimizers.
// Scalar type is a template parameter (float by default, double for
// gradient verification).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resilinet/errors.hpp"
#include "resilinet/rng.hpp"

namespace resilinet {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using ClassLabel = int;

/// Softmax is applied inside the loss; the layer itself emits logits.
enum class Activation { ReLU, Identity, Softmax };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

template <class Derived>
void ensure_finite(const Eigen::MatrixBase<Derived>& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError(where + ": non-finite value");
}

template <class T>
struct DenseLayer {
  Matrix<T> weights;  // [out x in]
  Vector<T> bias;     // [out]
  Activation activation = Activation::ReLU;

  std::size_t in() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out() const { return static_cast<std::size_t>(weights.rows()); }
};

template <class T>
struct LayerGrad {
  Matrix<T> weights;
  Vector<T> bias;
};

/// He-uniform weights in [-sqrt(6/in), sqrt(6/in)], zero bias.
template <class T>
DenseLayer<T> init_layer(std::size_t in, std::size_t out, SeededRng& rng,
                         Activation act = Activation::ReLU) {
  if (in == 0 || out == 0) throw DimensionError("init_layer: dimensions must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  DenseLayer<T> layer;
  layer.activation = act;
  layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      layer.weights(r, c) = static_cast<T>(rng.uniform(-bound, bound));
  layer.bias = Vector<T>::Zero(static_cast<Eigen::Index>(out));
  return layer;
}

namespace detail {

template <class T>
Matrix<T> affine(const DenseLayer<T>& layer, const Matrix<T>& x) {
  if (static_cast<std::size_t>(x.cols()) != layer.in())
    throw DimensionError("dense_forward: input has " + std::to_string(x.cols()) +
                         " features, layer expects " + std::to_string(layer.in()));
  Matrix<T> z = x * layer.weights.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

template <class T>
Matrix<T> activate(Matrix<T> z, Activation act) {
  if (act == Activation::ReLU) z = z.cwiseMax(T(0));
  return z;
}

}  // namespace detail

/// y = act(x W^T + b) for a batch x of shape [B x in].
template <class T>
Matrix<T> dense_forward(const DenseLayer<T>& layer, const Matrix<T>& x) {
  ensure_finite(x, "dense_forward input");
  return detail::activate(detail::affine(layer, x), layer.activation);
}

template <class T>
struct LossResult {
  T loss = T(0);         // mean over batch
  Matrix<T> dlogits;     // d(mean loss)/d(logits)
};

/// Mean softmax cross-entropy over a batch; gradient is (softmax - onehot)/B.
template <class T>
LossResult<T> softmax_cross_entropy(const Matrix<T>& logits, std::span<const ClassLabel> targets) {
  const auto batch = logits.rows();
  const auto classes = logits.cols();
  if (static_cast<std::size_t>(batch) != targets.size())
    throw DimensionError("softmax_cross_entropy: batch/target size mismatch");
  LossResult<T> out;
  out.dlogits.resize(batch, classes);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const ClassLabel t = targets[static_cast<std::size_t>(b)];
    if (t < 0 || t >= classes) throw DimensionError("softmax_cross_entropy: target out of range");
    const T mx = logits.row(b).maxCoeff();
    auto e = (logits.row(b).array() - mx).exp();
    const T sum = e.sum();
    out.dlogits.row(b) = e / sum;
    total += static_cast<double>(std::log(sum) - (logits(b, t) - mx));
    out.dlogits(b, t) -= T(1);
  }
  out.dlogits /= static_cast<T>(batch);
  out.loss = static_cast<T>(total / static_cast<double>(batch));
  return out;
}

/// Row-wise argmax, lowest index wins ties.
template <class T>
std::vector<ClassLabel> argmax_rows(const Matrix<T>& scores) {
  std::vector<ClassLabel> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[static_cast<std::size_t>(r)] = static_cast<ClassLabel>(best);
  }
  return out;
}

template <class T>
struct Gradients {
  std::vector<LayerGrad<T>> layers;
  T loss = T(0);
};

/// A stack of dense layers hosted on one physical node. forward() caches
/// what backward() needs; predict() is side-effect free.
template <class T>
class Sequential {
public:
  Sequential() = default;
  explicit Sequential(std::vector<DenseLayer<T>> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 1; i < layers_.size(); ++i)
      if (layers_[i].in() != layers_[i - 1].out())
        throw DimensionError("Sequential: layer " + std::to_string(i) + " input mismatch");
  }

  std::vector<DenseLayer<T>>& layers() { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  std::size_t in() const { return layers_.empty() ? 0 : layers_.front().in(); }
  std::size_t out() const { return layers_.empty() ? 0 : layers_.back().out(); }

  Matrix<T> predict(const Matrix<T>& x) const {
    Matrix<T> h = x;
    for (const auto& l : layers_) h = dense_forward(l, h);
    return h;
  }

  const Matrix<T>& forward(const Matrix<T>& x) {
    inputs_.clear();
    outputs_.clear();
    Matrix<T> h = x;
    for (const auto& l : layers_) {
      inputs_.push_back(h);
      h = dense_forward(l, h);
      outputs_.push_back(h);
    }
    cached_ = true;
    if (outputs_.empty()) outputs_.push_back(h);
    return outputs_.back();
  }

  bool has_cache() const { return cached_; }

  const Matrix<T>& forward_output() const {
    if (!cached_) throw UsageError("no cached forward pass");
    return outputs_.back();
  }
  void clear_cache() {
    cached_ = false;
    inputs_.clear();
    outputs_.clear();
  }

  /// Backpropagate dL/d(output). Fills grads (one per layer) and returns
  /// dL/d(input). Consumes the cache.
  Matrix<T> backward(const Matrix<T>& dout, std::vector<LayerGrad<T>>& grads) {
    if (!cached_) throw UsageError("backward called without a cached forward pass");
    grads.assign(layers_.size(), {});
    Matrix<T> d = dout;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const auto& l = layers_[k];
      if (l.activation == Activation::ReLU)
        d = (outputs_[k].array() > T(0)).select(d, T(0));
      grads[k].weights = d.transpose() * inputs_[k];
      grads[k].bias = d.colwise().sum().transpose();
      d = d * l.weights;
    }
    clear_cache();
    return d;
  }

private:
  std::vector<DenseLayer<T>> layers_;
  std::vector<Matrix<T>> inputs_;
  std::vector<Matrix<T>> outputs_;
  bool cached_ = false;
};

/// Gradients of mean cross-entropy for a stack whose forward() was just run
/// on the batch the targets belong to.
template <class T>
Gradients<T> model_backward(Sequential<T>& net, std::span<const ClassLabel> targets) {
  if (!net.has_cache()) throw UsageError("model_backward: forward pass not cached");
  // forward() returned a reference into the cache; copy before backward clears it.
  Matrix<T> logits = net.forward_output();
  auto lr = softmax_cross_entropy<T>(logits, targets);
  Gradients<T> g;
  g.loss = lr.loss;
  net.backward(lr.dlogits, g.layers);
  return g;
}

enum class OptimizerKind { SgdMomentum, Adam };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::Adam ? "adam" : "sgd";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Optimizer state keyed by parameter-block slot. Each slot owns its moment
/// buffers and step counter; a slot that is not stepped keeps its state.
template <class T>
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }

  std::uint64_t steps(std::size_t slot) const {
    return slot < slots_.size() ? slots_[slot].steps : 0;
  }

  void step(std::size_t slot, std::span<T> params, std::span<const T> grads) {
    if (params.size() != grads.size()) throw DimensionError("optimizer_step: param/grad size mismatch");
    for (T g : grads)
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("optimizer_step: non-finite gradient");
    if (slot >= slots_.size()) slots_.resize(slot + 1);
    auto& s = slots_[slot];
    if (s.m.empty()) {
      s.m.assign(params.size(), T(0));
      s.v.assign(params.size(), T(0));
    } else if (s.m.size() != params.size()) {
      throw DimensionError("optimizer_step: slot " + std::to_string(slot) + " changed shape");
    }
    ++s.steps;
    const T lr = static_cast<T>(cfg_.learning_rate);
    if (cfg_.kind == OptimizerKind::SgdMomentum) {
      const T mu = static_cast<T>(cfg_.momentum);
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = mu * s.m[i] - lr * grads[i];
        params[i] += s.m[i];
      }
    } else {
      const T b1 = static_cast<T>(cfg_.beta1);
      const T b2 = static_cast<T>(cfg_.beta2);
      const T eps = static_cast<T>(cfg_.epsilon);
      const T c1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(s.steps)));
      const T c2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(s.steps)));
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = b1 * s.m[i] + (T(1) - b1) * grads[i];
        s.v[i] = b2 * s.v[i] + (T(1) - b2) * grads[i] * grads[i];
        const T mhat = s.m[i] / c1;
        const T vhat = s.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    for (T p : params)
      if (!std::isfinite(static_cast<double>(p))) throw NumericError("optimizer_step: parameter became non-finite");
  }

  template <class Derived, class GDerived>
  void step(std::size_t slot, Eigen::PlainObjectBase<Derived>& param,
            const Eigen::PlainObjectBase<GDerived>& grad) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
      throw DimensionError("optimizer_step: param/grad shape mismatch");
    step(slot, std::span<T>(param.data(), static_cast<std::size_t>(param.size())),
         std::span<const T>(grad.data(), static_cast<std::size_t>(grad.size())));
  }

  /// Two slots per layer (weights, bias) starting at base_slot.
  void step_layer(std::size_t base_slot, DenseLayer<T>& layer, const LayerGrad<T>& g) {
    step(base_slot, layer.weights, g.weights);
    step(base_slot + 1, layer.bias, g.bias);
  }

private:
  struct Slot {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t steps = 0;
  };
  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace resilinet

#pragma once

// Dense-network substrate for the relation heads: affine layers with optional
// ReLU, exact reverse-mode gradients, a stabilised softmax cross-entropy and
// SGD with momentum. Everything is templated on the scalar type so the same
// code runs in 32-bit (training) and 64-bit (gradient checks, determinism).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trn/error.hpp"

namespace trn {

enum class Activation : std::uint32_t { none = 0, relu = 1 };

template <std::floating_point S>
class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation activation)
      : in_dim_(in_dim),
        out_dim_(out_dim),
        weights_(in_dim * out_dim, S{0}),
        bias_(out_dim, S{0}),
        activation_(activation) {
    if (in_dim == 0 || out_dim == 0) {
      throw InvalidInput("dense layer dimensions must be positive");
    }
  }

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }
  Activation activation() const noexcept { return activation_; }

  /// Row-major out_dim x in_dim.
  std::span<S> weights() noexcept { return weights_; }
  std::span<const S> weights() const noexcept { return weights_; }
  std::span<S> bias() noexcept { return bias_; }
  std::span<const S> bias() const noexcept { return bias_; }

  S& weight(std::size_t out, std::size_t in) { return weights_[out * in_dim_ + in]; }
  S weight(std::size_t out, std::size_t in) const { return weights_[out * in_dim_ + in]; }

  bool operator==(const DenseLayer&) const = default;

 private:
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  std::vector<S> weights_;
  std::vector<S> bias_;
  Activation activation_ = Activation::none;
};

template <std::floating_point S>
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<DenseLayer<S>> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw InvalidInput("an MLP needs at least one layer");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
        throw InvalidInput("layer " + std::to_string(i) + " expects " +
                           std::to_string(layers_[i].in_dim()) + " inputs but layer " +
                           std::to_string(i - 1) + " produces " +
                           std::to_string(layers_[i - 1].out_dim()));
      }
    }
  }

  /// widths = {in, hidden..., out}; `hidden` applies to every layer but the
  /// last, which gets `output`.
  static Mlp stack(std::span<const std::size_t> widths, Activation hidden, Activation output) {
    if (widths.size() < 2) throw InvalidInput("an MLP needs at least two widths");
    std::vector<DenseLayer<S>> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool last = i + 2 == widths.size();
      layers.emplace_back(widths[i], widths[i + 1], last ? output : hidden);
    }
    return Mlp(std::move(layers));
  }

  static Mlp stack(std::initializer_list<std::size_t> widths, Activation hidden,
                   Activation output) {
    const std::vector<std::size_t> w(widths);
    return stack(std::span<const std::size_t>(w), hidden, output);
  }

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const noexcept { return layers_.size(); }

  std::span<DenseLayer<S>> layers() noexcept { return layers_; }
  std::span<const DenseLayer<S>> layers() const noexcept { return layers_; }
  DenseLayer<S>& layer(std::size_t i) { return layers_.at(i); }
  const DenseLayer<S>& layer(std::size_t i) const { return layers_.at(i); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights().size() + l.bias().size();
    return n;
  }

  bool operator==(const Mlp&) const = default;

 private:
  std::vector<DenseLayer<S>> layers_;
};

template <std::floating_point S>
struct LayerGradient {
  std::vector<S> weights;
  std::vector<S> bias;

  bool operator==(const LayerGradient&) const = default;
};

/// Per-parameter gradients, shape-congruent with one Mlp.
template <std::floating_point S>
struct GradientSet {
  std::vector<LayerGradient<S>> layers;

  static GradientSet zeros_like(const Mlp<S>& m) {
    GradientSet g;
    g.layers.reserve(m.depth());
    for (const auto& l : m.layers()) {
      g.layers.push_back({std::vector<S>(l.weights().size(), S{0}),
                          std::vector<S>(l.bias().size(), S{0})});
    }
    return g;
  }

  bool congruent_with(const Mlp<S>& m) const {
    if (layers.size() != m.depth()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weights.size() != m.layer(i).weights().size() ||
          layers[i].bias.size() != m.layer(i).bias().size()) {
        return false;
      }
    }
    return true;
  }

  GradientSet& operator+=(const GradientSet& other) {
    if (other.layers.size() != layers.size()) throw InvalidInput("gradient shape mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      add_into(layers[i].weights, other.layers[i].weights);
      add_into(layers[i].bias, other.layers[i].bias);
    }
    return *this;
  }

  void scale(S factor) {
    for (auto& l : layers) {
      for (auto& v : l.weights) v *= factor;
      for (auto& v : l.bias) v *= factor;
    }
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      for (S v : l.weights) if (!std::isfinite(v)) return false;
      for (S v : l.bias) if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const GradientSet&) const = default;

 private:
  static void add_into(std::vector<S>& dst, const std::vector<S>& src) {
    if (dst.size() != src.size()) throw InvalidInput("gradient shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
};

/// Activations recorded by a forward pass: inputs[l] feeds layer l and
/// outputs[l] is its post-activation result.
template <std::floating_point S>
struct MlpTrace {
  std::vector<std::vector<S>> inputs;
  std::vector<std::vector<S>> outputs;

  std::span<const S> output() const { return outputs.back(); }
};

namespace detail {

template <std::floating_point S>
void dense_apply(const DenseLayer<S>& layer, std::span<const S> x, std::vector<S>& y) {
  const std::size_t in = layer.in_dim();
  const auto w = layer.weights();
  const auto b = layer.bias();
  y.resize(layer.out_dim());
  for (std::size_t o = 0; o < layer.out_dim(); ++o) {
    const S* row = w.data() + o * in;
    S acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    if (layer.activation() == Activation::relu && acc < S{0}) acc = S{0};
    y[o] = acc;
  }
}

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw InvalidInput(std::string(what) + ": expected length " + std::to_string(want) +
                       ", got " + std::to_string(got));
  }
}

}  // namespace detail

template <std::floating_point S>
std::vector<S> mlp_forward(const Mlp<S>& m, std::span<const S> x) {
  detail::require_dim(x.size(), m.in_dim(), "mlp_forward input");
  std::vector<S> cur(x.begin(), x.end());
  std::vector<S> next;
  for (const auto& layer : m.layers()) {
    detail::dense_apply(layer, std::span<const S>(cur), next);
    cur.swap(next);
  }
  return cur;
}

template <std::floating_point S>
MlpTrace<S> mlp_forward_traced(const Mlp<S>& m, std::span<const S> x) {
  detail::require_dim(x.size(), m.in_dim(), "mlp_forward input");
  MlpTrace<S> t;
  t.inputs.reserve(m.depth());
  t.outputs.reserve(m.depth());
  std::vector<S> cur(x.begin(), x.end());
  for (const auto& layer : m.layers()) {
    std::vector<S> out;
    detail::dense_apply(layer, std::span<const S>(cur), out);
    t.inputs.push_back(std::move(cur));
    cur = out;
    t.outputs.push_back(std::move(out));
  }
  return t;
}

/// Adds d<upstream, m(x)>/dparams into `grads` and d/dx into `input_grad`
/// (skipped when `input_grad` is empty).
template <std::floating_point S>
void mlp_backward_accumulate(const Mlp<S>& m, const MlpTrace<S>& trace,
                             std::span<const S> upstream, GradientSet<S>& grads,
                             std::span<S> input_grad) {
  detail::require_dim(upstream.size(), m.out_dim(), "mlp_backward upstream");
  if (!grads.congruent_with(m)) throw InvalidInput("gradient set does not match the MLP");
  if (!input_grad.empty()) detail::require_dim(input_grad.size(), m.in_dim(), "input gradient");

  std::vector<S> delta(upstream.begin(), upstream.end());
  std::vector<S> below;
  for (std::size_t li = m.depth(); li-- > 0;) {
    const auto& layer = m.layer(li);
    const auto& x = trace.inputs[li];
    const auto& y = trace.outputs[li];
    if (layer.activation() == Activation::relu) {
      for (std::size_t o = 0; o < delta.size(); ++o) {
        if (!(y[o] > S{0})) delta[o] = S{0};
      }
    }
    auto& g = grads.layers[li];
    const std::size_t in = layer.in_dim();
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const S d = delta[o];
      g.bias[o] += d;
      if (d == S{0}) continue;
      S* row = g.weights.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
    }
    const bool need_below = li > 0 || !input_grad.empty();
    if (!need_below) break;
    below.assign(in, S{0});
    const auto w = layer.weights();
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const S d = delta[o];
      if (d == S{0}) continue;
      const S* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) below[i] += d * row[i];
    }
    delta.swap(below);
  }
  if (!input_grad.empty()) {
    for (std::size_t i = 0; i < input_grad.size(); ++i) input_grad[i] += delta[i];
  }
}

template <std::floating_point S>
struct MlpBackward {
  GradientSet<S> grads;
  std::vector<S> input_gradient;
};

/// Exact gradients of <upstream, mlp_forward(m, x)> w.r.t. parameters and x.
template <std::floating_point S>
MlpBackward<S> mlp_backward(const Mlp<S>& m, std::span<const S> x, std::span<const S> upstream) {
  detail::require_dim(upstream.size(), m.out_dim(), "mlp_backward upstream");
  auto trace = mlp_forward_traced(m, x);
  MlpBackward<S> r{GradientSet<S>::zeros_like(m), std::vector<S>(m.in_dim(), S{0})};
  mlp_backward_accumulate(m, trace, upstream, r.grads, std::span<S>(r.input_gradient));
  return r;
}

template <std::floating_point S>
std::vector<S> softmax(std::span<const S> logits) {
  if (logits.empty()) throw InvalidInput("softmax of an empty vector");
  const S top = *std::max_element(logits.begin(), logits.end());
  std::vector<S> p(logits.size());
  S total{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

template <std::floating_point S>
struct LossGradient {
  S loss;
  std::vector<S> grad_logits;
};

template <std::floating_point S>
LossGradient<S> softmax_cross_entropy(std::span<const S> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw InvalidInput("label " + std::to_string(label) + " out of range for " +
                       std::to_string(logits.size()) + " classes");
  }
  const S top = *std::max_element(logits.begin(), logits.end());
  S total{0};
  for (S z : logits) total += std::exp(z - top);
  LossGradient<S> r;
  r.loss = std::log(total) - (logits[label] - top);
  r.grad_logits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.grad_logits[i] = std::exp(logits[i] - top) / total;
  }
  r.grad_logits[label] -= S{1};
  return r;
}

/// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
template <std::floating_point S, class Rng>
void glorot_uniform_init(Mlp<S>& m, Rng& rng) {
  for (auto& layer : m.layers()) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& w : layer.weights()) w = static_cast<S>(dist(rng));
    std::fill(layer.bias().begin(), layer.bias().end(), S{0});
  }
}

template <std::floating_point S>
void append_parameter_arrays(Mlp<S>& m, std::vector<std::span<S>>& out) {
  for (auto& l : m.layers()) {
    out.push_back(l.weights());
    out.push_back(l.bias());
  }
}

template <std::floating_point S>
void append_gradient_arrays(const GradientSet<S>& g, std::vector<std::span<const S>>& out) {
  for (const auto& l : g.layers) {
    out.emplace_back(l.weights);
    out.emplace_back(l.bias);
  }
}

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

/// SGD with heavy-ball momentum: v <- momentum * v + g; p <- p - lr * v.
/// Velocity buffers are sized on the first step and pinned thereafter.
template <std::floating_point S>
class Sgd {
 public:
  explicit Sgd(SgdConfig config = {}) : config_(config) {
    if (!(config.learning_rate >= 0.0) || !(config.momentum >= 0.0) || config.momentum >= 1.0) {
      throw InvalidInput("SGD needs learning_rate >= 0 and momentum in [0, 1)");
    }
  }

  const SgdConfig& config() const noexcept { return config_; }
  std::size_t steps_taken() const noexcept { return steps_; }

  void step(std::span<const std::span<S>> params, std::span<const std::span<const S>> grads) {
    if (params.size() != grads.size()) throw InvalidInput("parameter/gradient count mismatch");
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (const auto& p : params) velocity_.emplace_back(p.size(), S{0});
    }
    if (velocity_.size() != params.size()) throw InvalidInput("parameter layout changed");
    for (std::size_t a = 0; a < params.size(); ++a) {
      if (params[a].size() != grads[a].size() || velocity_[a].size() != params[a].size()) {
        throw InvalidInput("parameter/gradient shape mismatch in array " + std::to_string(a));
      }
      for (S g : grads[a]) {
        if (!std::isfinite(g)) throw DivergenceError("non-finite gradient", steps_);
      }
    }
    const S lr = static_cast<S>(config_.learning_rate);
    const S mu = static_cast<S>(config_.momentum);
    for (std::size_t a = 0; a < params.size(); ++a) {
      auto& v = velocity_[a];
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = mu * v[i] + grads[a][i];
        params[a][i] -= lr * v[i];
      }
    }
    ++steps_;
  }

 private:
  SgdConfig config_;
  std::vector<std::vector<S>> velocity_;
  std::size_t steps_ = 0;
};

}  // namespace trn

#pragma once

// Temporal relation terms. A scale-d term maps every ordered d-tuple of frame
// features through g (two ReLU layers), sums the results, and applies the
// affine head h once:
//
//     T_d = h( w * sum_tuples g(concat(f_i1, ..., f_id)) )
//
// w is 1 during training and min(k, C(N,d)) / C(N,d) when every tuple is
// enumerated at inference. The multi-scale model adds T_2 .. T_N at the logit
// level, each scale owning its own g and h.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trn/error.hpp"
#include "trn/frames.hpp"
#include "trn/nn.hpp"
#include "trn/sampling.hpp"

namespace trn {

template <std::floating_point S>
class RelationModule {
 public:
  RelationModule() = default;
  RelationModule(std::size_t scale, std::size_t feature_dim, std::size_t hidden, std::size_t classes)
      : scale_(scale), feature_dim_(feature_dim) {
    if (scale < 2) throw InvalidInput("relation scale must be at least 2");
    if (feature_dim == 0 || hidden == 0 || classes == 0) {
      throw InvalidInput("relation module dimensions must be positive");
    }
    g_ = Mlp<S>::stack({scale * feature_dim, hidden, hidden}, Activation::relu, Activation::relu);
    h_ = Mlp<S>::stack({hidden, classes}, Activation::none, Activation::none);
  }

  std::size_t scale() const noexcept { return scale_; }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t hidden() const { return g_.out_dim(); }
  std::size_t classes() const { return h_.out_dim(); }

  Mlp<S>& g() noexcept { return g_; }
  const Mlp<S>& g() const noexcept { return g_; }
  Mlp<S>& h() noexcept { return h_; }
  const Mlp<S>& h() const noexcept { return h_; }

  /// Replace both networks; shapes must match the current ones.
  void set_networks(Mlp<S> g, Mlp<S> h) {
    if (g.in_dim() != g_.in_dim() || g.out_dim() != g_.out_dim() || h.in_dim() != h_.in_dim() ||
        h.out_dim() != h_.out_dim() || g.depth() != g_.depth() || h.depth() != h_.depth()) {
      throw InvalidInput("relation module networks have the wrong shape");
    }
    g_ = std::move(g);
    h_ = std::move(h);
  }

  bool operator==(const RelationModule&) const = default;

 private:
  std::size_t scale_ = 0;
  std::size_t feature_dim_ = 0;
  Mlp<S> g_;
  Mlp<S> h_;
};

template <std::floating_point S>
class MultiScaleTrn {
 public:
  MultiScaleTrn() = default;
  /// Zero-initialised modules for every scale 2..max_scale.
  MultiScaleTrn(std::size_t feature_dim, std::size_t hidden, std::size_t classes,
                std::size_t max_scale, std::size_t tuples_per_scale = 3)
      : tuples_per_scale_(tuples_per_scale) {
    if (max_scale < 2) throw InvalidInput("multi-scale model needs N >= 2");
    if (tuples_per_scale == 0) throw InvalidInput("tuples per scale must be positive");
    for (std::size_t d = 2; d <= max_scale; ++d) {
      modules_.emplace_back(d, feature_dim, hidden, classes);
    }
  }

  template <class Rng>
  static MultiScaleTrn initialized(std::size_t feature_dim, std::size_t hidden, std::size_t classes,
                                   std::size_t max_scale, std::size_t tuples_per_scale, Rng& rng) {
    MultiScaleTrn m(feature_dim, hidden, classes, max_scale, tuples_per_scale);
    for (auto& mod : m.modules_) {
      glorot_uniform_init(mod.g(), rng);
      glorot_uniform_init(mod.h(), rng);
    }
    return m;
  }

  std::size_t feature_dim() const { return modules_.front().feature_dim(); }
  std::size_t hidden() const { return modules_.front().hidden(); }
  std::size_t classes() const { return modules_.front().classes(); }
  std::size_t max_scale() const { return modules_.size() + 1; }
  std::size_t tuples_per_scale() const noexcept { return tuples_per_scale_; }

  RelationModule<S>& module(std::size_t d) { return modules_.at(checked_slot(d)); }
  const RelationModule<S>& module(std::size_t d) const { return modules_.at(checked_slot(d)); }
  std::span<RelationModule<S>> modules() noexcept { return modules_; }
  std::span<const RelationModule<S>> modules() const noexcept { return modules_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& m : modules_) n += m.g().parameter_count() + m.h().parameter_count();
    return n;
  }

  bool operator==(const MultiScaleTrn&) const = default;

 private:
  std::size_t checked_slot(std::size_t d) const {
    if (d < 2 || d > max_scale()) {
      throw InvalidInput("no relation module at scale " + std::to_string(d));
    }
    return d - 2;
  }

  std::vector<RelationModule<S>> modules_;
  std::size_t tuples_per_scale_ = 3;
};

template <std::floating_point S>
struct ScaleForward {
  std::size_t scale = 0;
  std::vector<S> hidden;  // weighted g-sum fed to h
  std::vector<S> logits;
};

template <std::floating_point S>
struct MultiScaleOutput {
  std::vector<S> logits;
  std::vector<ScaleForward<S>> scales;  // ascending scale, starting at 2

  const ScaleForward<S>& at_scale(std::size_t d) const {
    for (const auto& s : scales) if (s.scale == d) return s;
    throw InvalidInput("no output for scale " + std::to_string(d));
  }
};

namespace detail {

template <std::floating_point S>
void check_tuples(const RelationModule<S>& rm, const FrameMatrix<S>& frames,
                  std::span<const Tuple> tuples) {
  if (tuples.empty()) {
    throw InvalidInput("relation term at scale " + std::to_string(rm.scale()) +
                       " needs at least one tuple");
  }
  if (frames.dim() != rm.feature_dim()) {
    throw InvalidInput("frame features have dimension " + std::to_string(frames.dim()) +
                       ", model expects " + std::to_string(rm.feature_dim()));
  }
  for (const auto& t : tuples) {
    if (t.size() != rm.scale()) {
      throw InvalidInput("tuple of arity " + std::to_string(t.size()) + " given to scale " +
                         std::to_string(rm.scale()) + " module");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] >= frames.frames()) throw InvalidInput("tuple position out of range");
      if (i > 0 && t[i] <= t[i - 1]) throw InvalidInput("tuple positions must be strictly increasing");
    }
  }
}

template <std::floating_point S>
void concat_tuple(const FrameMatrix<S>& frames, const Tuple& t, std::vector<S>& buf) {
  const std::size_t dim = frames.dim();
  buf.resize(t.size() * dim);
  for (std::size_t j = 0; j < t.size(); ++j) {
    const auto r = frames.row(t[j]);
    std::copy(r.begin(), r.end(), buf.begin() + static_cast<std::ptrdiff_t>(j * dim));
  }
}

}  // namespace detail

/// Forward pass of one relation term, exposing the hidden g-sum as well.
template <std::floating_point S>
ScaleForward<S> relation_term_evaluate(const RelationModule<S>& rm, const FrameMatrix<S>& frames,
                                       std::span<const Tuple> tuples, double weight = 1.0) {
  detail::check_tuples(rm, frames, tuples);
  ScaleForward<S> out;
  out.scale = rm.scale();
  out.hidden.assign(rm.hidden(), S{0});
  std::vector<S> buf;
  for (const auto& t : tuples) {
    detail::concat_tuple(frames, t, buf);
    const auto g = mlp_forward(rm.g(), std::span<const S>(buf));
    for (std::size_t i = 0; i < g.size(); ++i) out.hidden[i] += g[i];
  }
  if (weight != 1.0) {
    for (auto& v : out.hidden) v *= static_cast<S>(weight);
  }
  out.logits = mlp_forward(rm.h(), std::span<const S>(out.hidden));
  return out;
}

template <std::floating_point S>
std::vector<S> relation_term_forward(const RelationModule<S>& rm, const FrameMatrix<S>& frames,
                                     std::span<const Tuple> tuples, double weight = 1.0) {
  return relation_term_evaluate(rm, frames, tuples, weight).logits;
}

namespace detail {

template <std::floating_point S>
const ScaleTuples& tuples_for(const TupleSets& sets, std::size_t d) {
  const auto it = sets.find(d);
  if (it == sets.end()) throw InvalidInput("no tuples supplied for scale " + std::to_string(d));
  return it->second;
}

}  // namespace detail

/// Sum of T_2 .. T_N; per-scale logits and hidden vectors are kept for analysis.
template <std::floating_point S>
MultiScaleOutput<S> multiscale_forward(const MultiScaleTrn<S>& trn, const FrameMatrix<S>& frames,
                                       const TupleSets& sets) {
  MultiScaleOutput<S> out;
  out.logits.assign(trn.classes(), S{0});
  for (const auto& rm : trn.modules()) {
    const auto& st = detail::tuples_for<S>(sets, rm.scale());
    auto sf = relation_term_evaluate(rm, frames, std::span<const Tuple>(st.tuples), st.weight);
    for (std::size_t c = 0; c < out.logits.size(); ++c) out.logits[c] += sf.logits[c];
    out.scales.push_back(std::move(sf));
  }
  return out;
}

/// Everything a backward pass needs from a forward pass.
template <std::floating_point S>
struct MultiScaleTape {
  struct Scale {
    std::size_t scale = 0;
    const std::vector<Tuple>* tuples = nullptr;
    S weight{1};
    std::vector<MlpTrace<S>> g_traces;
    std::vector<S> mask;  // empty: no dropout on the hidden sum
    MlpTrace<S> h_trace;
  };

  const FrameMatrix<S>* frames = nullptr;
  std::vector<Scale> scales;
  std::vector<S> logits;
};

/// Traced forward pass. `hidden_masks`, when non-empty, holds one
/// multiplicative mask per scale (ascending) applied to the hidden sum.
/// The tape refers to `frames` and `sets`, which must outlive it.
template <std::floating_point S>
MultiScaleTape<S> trace_multiscale(const MultiScaleTrn<S>& trn, const FrameMatrix<S>& frames,
                                   const TupleSets& sets,
                                   std::span<const std::vector<S>> hidden_masks = {}) {
  if (!hidden_masks.empty() && hidden_masks.size() != trn.modules().size()) {
    throw InvalidInput("need one hidden mask per scale");
  }
  MultiScaleTape<S> tape;
  tape.frames = &frames;
  tape.logits.assign(trn.classes(), S{0});
  std::vector<S> buf;
  std::size_t slot = 0;
  for (const auto& rm : trn.modules()) {
    const auto& st = detail::tuples_for<S>(sets, rm.scale());
    detail::check_tuples(rm, frames, std::span<const Tuple>(st.tuples));
    typename MultiScaleTape<S>::Scale sc;
    sc.scale = rm.scale();
    sc.tuples = &st.tuples;
    sc.weight = static_cast<S>(st.weight);
    std::vector<S> hidden(rm.hidden(), S{0});
    for (const auto& t : st.tuples) {
      detail::concat_tuple(frames, t, buf);
      sc.g_traces.push_back(mlp_forward_traced(rm.g(), std::span<const S>(buf)));
      const auto g = sc.g_traces.back().output();
      for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] += g[i];
    }
    for (auto& v : hidden) v *= sc.weight;
    if (!hidden_masks.empty()) {
      sc.mask = hidden_masks[slot];
      detail::require_dim(sc.mask.size(), hidden.size(), "hidden mask");
      for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] *= sc.mask[i];
    }
    sc.h_trace = mlp_forward_traced(rm.h(), std::span<const S>(hidden));
    const auto logits = sc.h_trace.output();
    for (std::size_t c = 0; c < tape.logits.size(); ++c) tape.logits[c] += logits[c];
    tape.scales.push_back(std::move(sc));
    ++slot;
  }
  return tape;
}

template <std::floating_point S>
struct ModuleGradient {
  GradientSet<S> g;
  GradientSet<S> h;
};

template <std::floating_point S>
struct MultiScaleGradient {
  std::vector<ModuleGradient<S>> modules;  // ascending scale, starting at 2
  FrameMatrix<S> frames;                    // d loss / d frame features

  static MultiScaleGradient zeros_like(const MultiScaleTrn<S>& trn, std::size_t frame_count) {
    MultiScaleGradient out;
    for (const auto& rm : trn.modules()) {
      out.modules.push_back({GradientSet<S>::zeros_like(rm.g()), GradientSet<S>::zeros_like(rm.h())});
    }
    out.frames = FrameMatrix<S>(frame_count, trn.feature_dim());
    return out;
  }

  MultiScaleGradient& operator+=(const MultiScaleGradient& other) {
    if (other.modules.size() != modules.size()) throw InvalidInput("gradient shape mismatch");
    for (std::size_t i = 0; i < modules.size(); ++i) {
      modules[i].g += other.modules[i].g;
      modules[i].h += other.modules[i].h;
    }
    return *this;
  }

  void scale(S factor) {
    for (auto& m : modules) {
      m.g.scale(factor);
      m.h.scale(factor);
    }
  }

  bool all_finite() const {
    for (const auto& m : modules) {
      if (!m.g.all_finite() || !m.h.all_finite()) return false;
    }
    return true;
  }
};

/// Accumulates gradients of <upstream, logits> for a traced pass into `out`.
template <std::floating_point S>
void backward_multiscale(const MultiScaleTrn<S>& trn, const MultiScaleTape<S>& tape,
                         std::span<const S> upstream, MultiScaleGradient<S>& out) {
  detail::require_dim(upstream.size(), trn.classes(), "multiscale upstream");
  if (out.modules.size() != tape.scales.size()) throw InvalidInput("gradient shape mismatch");
  const bool want_frames = !out.frames.empty();
  std::vector<S> hidden_grad;
  std::vector<S> tuple_grad;
  for (std::size_t slot = 0; slot < tape.scales.size(); ++slot) {
    const auto& sc = tape.scales[slot];
    const auto& rm = trn.module(sc.scale);
    auto& mg = out.modules[slot];
    hidden_grad.assign(rm.hidden(), S{0});
    mlp_backward_accumulate(rm.h(), sc.h_trace, upstream, mg.h, std::span<S>(hidden_grad));
    for (std::size_t i = 0; i < hidden_grad.size(); ++i) {
      hidden_grad[i] *= sc.weight;
      if (!sc.mask.empty()) hidden_grad[i] *= sc.mask[i];
    }
    const auto& tuples = *sc.tuples;
    for (std::size_t t = 0; t < tuples.size(); ++t) {
      if (want_frames) tuple_grad.assign(rm.g().in_dim(), S{0});
      mlp_backward_accumulate(rm.g(), sc.g_traces[t], std::span<const S>(hidden_grad), mg.g,
                              want_frames ? std::span<S>(tuple_grad) : std::span<S>());
      if (!want_frames) continue;
      const std::size_t dim = trn.feature_dim();
      for (std::size_t j = 0; j < tuples[t].size(); ++j) {
        auto dst = out.frames.row(tuples[t][j]);
        for (std::size_t c = 0; c < dim; ++c) dst[c] += tuple_grad[j * dim + c];
      }
    }
  }
}

/// Exact gradients of <upstream, multiscale_forward(...).logits> for every
/// module's parameters and for the frame features.
template <std::floating_point S>
MultiScaleGradient<S> multiscale_backward(const MultiScaleTrn<S>& trn, const FrameMatrix<S>& frames,
                                          const TupleSets& sets, std::span<const S> upstream) {
  detail::require_dim(upstream.size(), trn.classes(), "multiscale upstream");
  const auto tape = trace_multiscale(trn, frames, sets);
  auto grads = MultiScaleGradient<S>::zeros_like(trn, frames.frames());
  backward_multiscale(trn, tape, upstream, grads);
  return grads;
}

template <std::floating_point S>
void append_parameter_arrays(MultiScaleTrn<S>& trn, std::vector<std::span<S>>& out) {
  for (auto& rm : trn.modules()) {
    append_parameter_arrays(rm.g(), out);
    append_parameter_arrays(rm.h(), out);
  }
}

template <std::floating_point S>
void append_gradient_arrays(const MultiScaleGradient<S>& g, std::vector<std::span<const S>>& out) {
  for (const auto& m : g.modules) {
    append_gradient_arrays(m.g, out);
    append_gradient_arrays(m.h, out);
  }
}

template <std::floating_point S>
struct Prediction {
  std::size_t label = 0;
  std::vector<S> probabilities;
};

/// Argmax (lowest index wins ties) plus softmax probabilities.
template <std::floating_point S>
Prediction<S> predict(std::span<const S> logits) {
  if (logits.empty()) throw InvalidInput("cannot predict from empty logits");
  Prediction<S> p;
  p.label = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  p.probabilities = softmax(logits);
  return p;
}

}  // namespace trn

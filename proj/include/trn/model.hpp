#pragma once

// Video classifiers behind one interface: the multi-scale relation network and
// the two frame-pooling baselines (mean of sampled frames, a single frame),
// plus the TRNW checkpoint format.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trn/binary_io.hpp"
#include "trn/error.hpp"
#include "trn/frames.hpp"
#include "trn/nn.hpp"
#include "trn/relation.hpp"

namespace trn {

enum class Pooling : std::uint32_t { temporal_relation = 0, average_pool = 1, single_frame = 2 };

inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::temporal_relation: return "temporal-relation";
    case Pooling::average_pool: return "average-pool";
    case Pooling::single_frame: return "single-frame";
  }
  return "unknown";
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "temporal-relation" || s == "trn") return Pooling::temporal_relation;
  if (s == "average-pool" || s == "avg") return Pooling::average_pool;
  if (s == "single-frame" || s == "single") return Pooling::single_frame;
  throw InvalidInput("unknown pooling \"" + s + "\"");
}

struct ModelShape {
  std::size_t feature_dim = 16;
  std::size_t hidden = 256;          // synthetic runs pass 64
  std::size_t classes = 8;
  std::size_t frames = 8;            // N
  std::size_t tuples_per_scale = 3;  // k

  bool operator==(const ModelShape&) const = default;
};

template <std::floating_point S>
class VideoClassifier {
 public:
  VideoClassifier() = default;

  static VideoClassifier temporal_relation(MultiScaleTrn<S> trn) {
    VideoClassifier m;
    m.pooling_ = Pooling::temporal_relation;
    m.shape_ = {trn.feature_dim(), trn.hidden(), trn.classes(), trn.max_scale(),
                trn.tuples_per_scale()};
    m.trn_ = std::move(trn);
    return m;
  }

  /// Pooled baseline: head is D -> H -> H -> C. Single-frame models look at one frame.
  static VideoClassifier pooled(Pooling pooling, const ModelShape& shape) {
    if (pooling == Pooling::temporal_relation) throw InvalidInput("use temporal_relation()");
    VideoClassifier m;
    m.pooling_ = pooling;
    m.shape_ = shape;
    if (pooling == Pooling::single_frame) m.shape_.frames = 1;
    m.head_ = Mlp<S>::stack({shape.feature_dim, shape.hidden, shape.hidden, shape.classes},
                            Activation::relu, Activation::none);
    return m;
  }

  template <class Rng>
  static VideoClassifier initialized(Pooling pooling, const ModelShape& shape, Rng& rng) {
    if (pooling == Pooling::temporal_relation) {
      return temporal_relation(MultiScaleTrn<S>::initialized(
          shape.feature_dim, shape.hidden, shape.classes, shape.frames, shape.tuples_per_scale, rng));
    }
    auto m = pooled(pooling, shape);
    glorot_uniform_init(m.head_, rng);
    return m;
  }

  Pooling pooling() const noexcept { return pooling_; }
  const ModelShape& shape() const noexcept { return shape_; }
  std::size_t feature_dim() const noexcept { return shape_.feature_dim; }
  std::size_t classes() const noexcept { return shape_.classes; }
  /// Frames drawn from each video by segment sampling.
  std::size_t frames_sampled() const noexcept { return shape_.frames; }

  MultiScaleTrn<S>& trn() {
    require_trn();
    return trn_;
  }
  const MultiScaleTrn<S>& trn() const {
    require_trn();
    return trn_;
  }
  Mlp<S>& head() {
    require_head();
    return head_;
  }
  const Mlp<S>& head() const {
    require_head();
    return head_;
  }

  void append_parameters(std::vector<std::span<S>>& out) {
    if (pooling_ == Pooling::temporal_relation) {
      append_parameter_arrays(trn_, out);
    } else {
      append_parameter_arrays(head_, out);
    }
  }

  bool operator==(const VideoClassifier&) const = default;

 private:
  void require_trn() const {
    if (pooling_ != Pooling::temporal_relation) throw InvalidInput("model has no relation modules");
  }
  void require_head() const {
    if (pooling_ == Pooling::temporal_relation) throw InvalidInput("model has no pooled head");
  }

  Pooling pooling_ = Pooling::temporal_relation;
  ModelShape shape_;
  MultiScaleTrn<S> trn_;
  Mlp<S> head_;
};

/// Mean over frames, the order-destroying pooling of the TSN-style baseline.
template <std::floating_point S>
std::vector<S> mean_pool(const FrameMatrix<S>& frames) {
  if (frames.empty()) throw InvalidInput("cannot pool zero frames");
  std::vector<S> mean(frames.dim(), S{0});
  for (std::size_t r = 0; r < frames.frames(); ++r) {
    const auto row = frames.row(r);
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
  }
  for (auto& v : mean) v /= static_cast<S>(frames.frames());
  return mean;
}

/// Pooled-head input for a sampled frame block.
template <std::floating_point S>
std::vector<S> pooled_input(const VideoClassifier<S>& model, const FrameMatrix<S>& frames) {
  if (model.pooling() == Pooling::single_frame) {
    const auto r = frames.row(0);
    return {r.begin(), r.end()};
  }
  return mean_pool(frames);
}

/// Logits of any classifier on already-sampled frames.
template <std::floating_point S>
std::vector<S> classifier_logits(const VideoClassifier<S>& model, const FrameMatrix<S>& frames,
                                 const TupleSets& sets) {
  if (frames.dim() != model.feature_dim()) throw InvalidInput("feature dimension mismatch");
  if (model.pooling() == Pooling::temporal_relation) {
    return multiscale_forward(model.trn(), frames, sets).logits;
  }
  const auto x = pooled_input(model, frames);
  return mlp_forward(model.head(), std::span<const S>(x));
}

// ---------------------------------------------------------------------------
// TRNW checkpoints
//
// MLP block: u32 layer count, then per layer u32 out, u32 in, u32 activation,
// out*in f32 weights (row-major), out f32 biases.
// MLP file:   "TRNW", u32 version, MLP block.
// Model file: "TRNW", u32 version, u32 pooling, u32 D, H, C, N, k, u32 block
//             count, blocks (g then h for scales 2..N ascending, or the head).

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <std::floating_point S>
void write_mlp_block(binary::Writer& w, const Mlp<S>& m) {
  w.u32(static_cast<std::uint32_t>(m.depth()));
  for (const auto& l : m.layers()) {
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    w.u32(static_cast<std::uint32_t>(l.activation()));
    for (S v : l.weights()) w.f32(static_cast<float>(v));
    for (S v : l.bias()) w.f32(static_cast<float>(v));
  }
}

template <std::floating_point S>
Mlp<S> read_mlp_block(binary::Reader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t depth = r.u32("layer count");
  if (depth == 0) throw FormatError("MLP block with zero layers", at);
  std::vector<DenseLayer<S>> layers;
  for (std::uint32_t i = 0; i < depth; ++i) {
    const std::size_t layer_at = r.offset();
    const std::uint32_t out = r.u32("layer out_dim");
    const std::uint32_t in = r.u32("layer in_dim");
    const std::uint32_t act = r.u32("activation");
    if (out == 0 || in == 0) throw FormatError("zero-sized layer", layer_at);
    if (act > 1) throw FormatError("unknown activation code " + std::to_string(act), layer_at + 8);
    if (!layers.empty() && layers.back().out_dim() != in) {
      throw FormatError("layer input does not match the previous layer", layer_at + 4);
    }
    r.require_elements(static_cast<std::uint64_t>(out) * in + out, 4, "layer parameters");
    DenseLayer<S> layer(in, out, static_cast<Activation>(act));
    for (auto& v : layer.weights()) v = static_cast<S>(r.f32());
    for (auto& v : layer.bias()) v = static_cast<S>(r.f32());
    layers.push_back(std::move(layer));
  }
  return Mlp<S>(std::move(layers));
}

namespace detail {

inline void read_checkpoint_preamble(binary::Reader& r) {
  r.expect_magic("TRNW");
  const std::size_t at = r.offset();
  if (const auto v = r.u32("version"); v != kCheckpointVersion) {
    throw FormatError("unsupported TRNW version " + std::to_string(v), at);
  }
}

}  // namespace detail

template <std::floating_point S>
std::vector<char> encode_mlp(const Mlp<S>& m) {
  binary::Writer w;
  w.bytes("TRNW");
  w.u32(kCheckpointVersion);
  write_mlp_block(w, m);
  return w.data();
}

template <std::floating_point S>
Mlp<S> decode_mlp(std::vector<char> bytes) {
  binary::Reader r(std::move(bytes));
  detail::read_checkpoint_preamble(r);
  auto m = read_mlp_block<S>(r);
  if (!r.at_end()) throw FormatError("trailing bytes after MLP block", r.offset());
  return m;
}

template <std::floating_point S>
std::vector<char> encode_model(const VideoClassifier<S>& model) {
  binary::Writer w;
  w.bytes("TRNW");
  w.u32(kCheckpointVersion);
  const auto& s = model.shape();
  w.u32(static_cast<std::uint32_t>(model.pooling()));
  for (std::size_t v : {s.feature_dim, s.hidden, s.classes, s.frames, s.tuples_per_scale}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  if (model.pooling() == Pooling::temporal_relation) {
    w.u32(static_cast<std::uint32_t>(2 * model.trn().modules().size()));
    for (const auto& rm : model.trn().modules()) {
      write_mlp_block(w, rm.g());
      write_mlp_block(w, rm.h());
    }
  } else {
    w.u32(1);
    write_mlp_block(w, model.head());
  }
  return w.data();
}

template <std::floating_point S>
VideoClassifier<S> decode_model(std::vector<char> bytes) {
  binary::Reader r(std::move(bytes));
  detail::read_checkpoint_preamble(r);
  const std::size_t kind_at = r.offset();
  const std::uint32_t kind = r.u32("pooling");
  if (kind > 2) throw FormatError("unknown pooling code " + std::to_string(kind), kind_at);
  const std::size_t shape_at = r.offset();
  ModelShape s;
  s.feature_dim = r.u32("D");
  s.hidden = r.u32("H");
  s.classes = r.u32("C");
  s.frames = r.u32("N");
  s.tuples_per_scale = r.u32("k");
  const std::size_t blocks_at = r.offset();
  const std::uint32_t blocks = r.u32("block count");

  const auto pooling = static_cast<Pooling>(kind);
  VideoClassifier<S> model;
  try {
    if (pooling == Pooling::temporal_relation) {
      MultiScaleTrn<S> trn(s.feature_dim, s.hidden, s.classes, s.frames, s.tuples_per_scale);
      if (blocks != 2 * trn.modules().size()) {
        throw FormatError("expected " + std::to_string(2 * trn.modules().size()) + " MLP blocks",
                          blocks_at);
      }
      for (auto& rm : trn.modules()) {
        const std::size_t at = r.offset();
        auto g = read_mlp_block<S>(r);
        auto h = read_mlp_block<S>(r);
        try {
          rm.set_networks(std::move(g), std::move(h));
        } catch (const InvalidInput& e) {
          throw FormatError(e.what(), at);
        }
      }
      model = VideoClassifier<S>::temporal_relation(std::move(trn));
    } else {
      model = VideoClassifier<S>::pooled(pooling, s);
      if (blocks != 1) throw FormatError("expected one MLP block", blocks_at);
      const std::size_t at = r.offset();
      auto head = read_mlp_block<S>(r);
      if (head.in_dim() != model.head().in_dim() || head.out_dim() != model.head().out_dim() ||
          head.depth() != model.head().depth()) {
        throw FormatError("pooled head has the wrong shape", at);
      }
      model.head() = std::move(head);
    }
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid model header: ") + e.what(), shape_at);
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last block", r.offset());
  return model;
}

template <std::floating_point S>
void save_model(const std::string& path, const VideoClassifier<S>& model) {
  binary::write_file(path, encode_model(model));
}

template <std::floating_point S>
VideoClassifier<S> load_model(const std::string& path) {
  return decode_model<S>(binary::read_file(path));
}

}  // namespace trn

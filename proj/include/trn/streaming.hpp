#pragma once

// Test-time streaming: every s-th incoming frame is a key frame whose feature
// is cached in a FIFO of N entries. Once the FIFO is full, each new key frame
// triggers a prediction over the cached features; nothing is recomputed.

#include <concepts>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "trn/error.hpp"
#include "trn/frames.hpp"
#include "trn/relation.hpp"
#include "trn/sampling.hpp"

namespace trn {

template <std::floating_point S>
struct StreamPrediction {
  std::size_t frames_seen = 0;
  std::vector<std::size_t> key_frames;  // 0-based arrival index of each buffered frame
  std::size_t label = 0;
  std::vector<S> probabilities;
  std::vector<S> logits;
  std::vector<std::vector<S>> scale_logits;  // scales 2..N
};

template <std::floating_point S>
class StreamQueue {
 public:
  StreamQueue(std::size_t capacity, std::size_t stride, std::size_t feature_dim)
      : capacity_(capacity), stride_(stride), feature_dim_(feature_dim) {
    if (capacity < 2) throw InvalidInput("stream queue capacity must be at least 2");
    if (stride == 0) throw InvalidInput("stream stride must be positive");
    if (feature_dim == 0) throw InvalidInput("feature dimension must be positive");
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t frames_seen() const noexcept { return frames_seen_; }
  std::size_t enqueued() const noexcept { return enqueued_; }
  std::size_t size() const noexcept { return features_.size(); }
  bool full() const noexcept { return features_.size() == capacity_; }

  /// Cached key-frame features, oldest first.
  FrameMatrix<S> buffered() const {
    FrameMatrix<S> m(features_.size(), feature_dim_);
    for (std::size_t r = 0; r < features_.size(); ++r) {
      std::copy(features_[r].begin(), features_[r].end(), m.row(r).begin());
    }
    return m;
  }

  std::vector<std::size_t> key_frames() const { return {arrivals_.begin(), arrivals_.end()}; }

  std::optional<StreamPrediction<S>> push(const MultiScaleTrn<S>& model, std::span<const S> feature) {
    if (feature.size() != feature_dim_) {
      throw InvalidInput("streamed feature has dimension " + std::to_string(feature.size()) +
                         ", queue expects " + std::to_string(feature_dim_));
    }
    if (model.max_scale() != capacity_ || model.feature_dim() != feature_dim_) {
      throw InvalidInput("model shape does not match the stream queue");
    }
    ++frames_seen_;
    if (frames_seen_ % stride_ != 0) return std::nullopt;

    if (features_.size() == capacity_) {
      features_.pop_front();
      arrivals_.pop_front();
    }
    features_.emplace_back(feature.begin(), feature.end());
    arrivals_.push_back(frames_seen_ - 1);
    ++enqueued_;
    if (!full()) return std::nullopt;

    if (!tuples_ || tuples_k_ != model.tuples_per_scale()) {
      tuples_ = inference_tuples(capacity_, model.tuples_per_scale());
      tuples_k_ = model.tuples_per_scale();
    }
    const auto frames = buffered();
    auto out = multiscale_forward(model, frames, *tuples_);
    auto p = predict(std::span<const S>(out.logits));

    StreamPrediction<S> pred;
    pred.frames_seen = frames_seen_;
    pred.key_frames = key_frames();
    pred.label = p.label;
    pred.probabilities = std::move(p.probabilities);
    pred.logits = std::move(out.logits);
    for (auto& s : out.scales) pred.scale_logits.push_back(std::move(s.logits));
    return pred;
  }

 private:
  std::size_t capacity_;
  std::size_t stride_;
  std::size_t feature_dim_;
  std::size_t frames_seen_ = 0;
  std::size_t enqueued_ = 0;
  std::deque<std::vector<S>> features_;
  std::deque<std::size_t> arrivals_;
  std::optional<TupleSets> tuples_;
  std::size_t tuples_k_ = 0;
};

}  // namespace trn

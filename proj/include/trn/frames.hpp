#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "trn/error.hpp"

namespace trn {

/// Row-major block of frame features: one row of `dim` values per frame.
template <std::floating_point S>
class FrameMatrix {
 public:
  FrameMatrix() = default;
  FrameMatrix(std::size_t frames, std::size_t dim) : frames_(frames), dim_(dim), values_(frames * dim) {}
  FrameMatrix(std::size_t frames, std::size_t dim, std::vector<S> values)
      : frames_(frames), dim_(dim), values_(std::move(values)) {
    if (values_.size() != frames * dim) throw InvalidInput("frame matrix payload size mismatch");
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return frames_ == 0; }

  std::span<S> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  std::span<const S> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

  std::span<S> values() noexcept { return values_; }
  std::span<const S> values() const noexcept { return values_; }

  template <std::floating_point T>
  FrameMatrix<T> cast() const {
    return FrameMatrix<T>(frames_, dim_, std::vector<T>(values_.begin(), values_.end()));
  }

  /// Rows at `indices`, in that order.
  template <std::floating_point T = S>
  FrameMatrix<T> gather(std::span<const std::size_t> indices) const {
    FrameMatrix<T> out(indices.size(), dim_);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] >= frames_) throw InvalidInput("frame index out of range");
      const auto src = row(indices[r]);
      auto dst = out.row(r);
      for (std::size_t c = 0; c < dim_; ++c) dst[c] = static_cast<T>(src[c]);
    }
    return out;
  }

  bool operator==(const FrameMatrix&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
  std::vector<S> values_;
};

/// Builds a frame block by asking `extract(i)` once per requested index.
/// The extractor stands in for the per-frame CNN.
template <std::floating_point S, class Extract>
FrameMatrix<S> extract_frames(std::span<const std::size_t> indices, std::size_t dim,
                              Extract&& extract) {
  FrameMatrix<S> out(indices.size(), dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto feat = extract(indices[r]);
    if (feat.size() != dim) throw InvalidInput("extracted feature has the wrong dimension");
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = static_cast<S>(feat[c]);
  }
  return out;
}

}  // namespace trn

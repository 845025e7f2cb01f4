#pragma once

// Sparse frame selection: one frame per temporal segment, then k distinct
// sorted d-subsets of those frames for every relation scale d.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "trn/error.hpp"

namespace trn {

/// Strictly increasing positions into an ordered frame set.
using Tuple = std::vector<std::size_t>;

enum class SegmentMode { random, center };

struct SamplingPlan {
  std::size_t frames = 8;           // N: segments sampled, also the largest relation scale
  std::size_t tuples_per_scale = 3; // k
  SegmentMode mode = SegmentMode::random;

  void validate() const {
    if (frames < 2) throw InvalidInput("sampling plan needs N >= 2");
    if (tuples_per_scale < 1) throw InvalidInput("sampling plan needs k >= 1");
  }
};

/// Frame indices into a video, one per segment, non-decreasing.
using FrameIndexSet = std::vector<std::size_t>;

inline constexpr std::size_t kMaxEnumerableFrames = 16;

/// C(n, r), saturating at SIZE_MAX.
inline std::size_t binomial(std::size_t n, std::size_t r) {
  if (r > n) return 0;
  r = std::min(r, n - r);
  unsigned __int128 acc = 1;
  for (std::size_t i = 1; i <= r; ++i) {
    acc = acc * (n - r + i) / i;
    if (acc > std::numeric_limits<std::size_t>::max()) {
      return std::numeric_limits<std::size_t>::max();
    }
  }
  return static_cast<std::size_t>(acc);
}

struct Segment {
  std::size_t start;
  std::size_t length;
};

/// Split [0, n) into `count` contiguous segments whose lengths differ by at
/// most one, the longer ones first.
inline std::vector<Segment> segment_bounds(std::size_t n, std::size_t count) {
  if (count == 0) throw InvalidInput("segment count must be positive");
  std::vector<Segment> out(count);
  const std::size_t base = n / count;
  const std::size_t extra = n % count;
  for (std::size_t i = 0; i < count; ++i) {
    out[i].start = i * base + std::min(i, extra);
    out[i].length = base + (i < extra ? 1 : 0);
  }
  return out;
}

namespace detail {

template <class Pick>
FrameIndexSet pick_per_segment(std::size_t n, std::size_t count, Pick&& pick) {
  if (n == 0) throw InvalidInput("cannot sample frames from an empty video");
  FrameIndexSet idx;
  idx.reserve(count);
  for (const auto& seg : segment_bounds(n, count)) {
    // An empty segment only occurs after a non-empty one (extra >= 1 when n < count).
    idx.push_back(seg.length == 0 ? idx.back() : pick(seg));
  }
  return idx;
}

}  // namespace detail

/// Midpoint of every segment: start + floor(length / 2).
inline FrameIndexSet segment_centers(std::size_t n, std::size_t count) {
  return detail::pick_per_segment(n, count,
                                  [](const Segment& s) { return s.start + s.length / 2; });
}

template <class Rng>
FrameIndexSet segment_random(std::size_t n, std::size_t count, Rng& rng) {
  return detail::pick_per_segment(n, count, [&rng](const Segment& s) {
    std::uniform_int_distribution<std::size_t> d(0, s.length - 1);
    return s.start + d(rng);
  });
}

template <class Rng>
FrameIndexSet segment_sample(std::size_t n, const SamplingPlan& plan, Rng& rng) {
  plan.validate();
  return plan.mode == SegmentMode::center ? segment_centers(n, plan.frames)
                                          : segment_random(n, plan.frames, rng);
}

/// Every sorted d-subset of {0..N-1} in lexicographic order.
inline std::vector<Tuple> enumerate_tuples(std::size_t frames, std::size_t d) {
  if (frames > kMaxEnumerableFrames) {
    throw CombinatorialLimit("refusing to enumerate tuples over " + std::to_string(frames) +
                             " frames (limit " + std::to_string(kMaxEnumerableFrames) + ")");
  }
  if (d < 2 || d > frames) {
    throw InvalidInput("tuple scale " + std::to_string(d) + " outside [2, " +
                       std::to_string(frames) + "]");
  }
  std::vector<Tuple> out;
  out.reserve(binomial(frames, d));
  Tuple cur(d);
  std::iota(cur.begin(), cur.end(), std::size_t{0});
  while (true) {
    out.push_back(cur);
    std::size_t i = d;
    while (i > 0 && cur[i - 1] == frames - d + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < d; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

/// min(k, C(N, d)) distinct sorted d-subsets of {0..N-1}, uniform without
/// replacement. Exhaustive requests return the lexicographic enumeration.
template <class Rng>
std::vector<Tuple> subsample_tuples(std::size_t frames, std::size_t d, std::size_t k, Rng& rng) {
  if (d < 2) throw InvalidInput("tuple scale must be at least 2");
  if (d > frames) {
    throw InvalidInput("tuple scale " + std::to_string(d) + " exceeds the " +
                       std::to_string(frames) + " sampled frames");
  }
  if (k == 0) throw InvalidInput("k must be positive");
  if (k >= binomial(frames, d)) return enumerate_tuples(frames, d);

  std::vector<std::size_t> pool(frames);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::set<Tuple> seen;
  std::vector<Tuple> out;
  out.reserve(k);
  while (out.size() < k) {
    Tuple t;
    t.reserve(d);
    // Selection sampling keeps the input order, so t comes out sorted.
    std::sample(pool.begin(), pool.end(), std::back_inserter(t), d, rng);
    if (seen.insert(t).second) out.push_back(std::move(t));
  }
  return out;
}

/// Tuples for one relation scale, with the factor applied to their g-sum.
struct ScaleTuples {
  std::vector<Tuple> tuples;
  double weight = 1.0;
};

using TupleSets = std::map<std::size_t, ScaleTuples>;

/// Training-time tuple sets: k random subsets for every scale 2..N.
template <class Rng>
TupleSets training_tuples(std::size_t frames, std::size_t k, Rng& rng) {
  TupleSets sets;
  for (std::size_t d = 2; d <= frames; ++d) {
    sets[d] = ScaleTuples{subsample_tuples(frames, d, k, rng), 1.0};
  }
  return sets;
}

/// Inference-time tuple sets: every d-subset, weighted by min(k, C)/C so the
/// g-sum equals the expectation of the k-subset sum seen in training.
inline TupleSets inference_tuples(std::size_t frames, std::size_t k) {
  TupleSets sets;
  for (std::size_t d = 2; d <= frames; ++d) {
    auto all = enumerate_tuples(frames, d);
    const double total = static_cast<double>(all.size());
    const double used = std::min(static_cast<double>(k), total);
    sets[d] = ScaleTuples{std::move(all), used / total};
  }
  return sets;
}

inline std::size_t tuple_count(const TupleSets& sets) {
  std::size_t n = 0;
  for (const auto& [d, s] : sets) n += s.tuples.size();
  return n;
}

}  // namespace trn

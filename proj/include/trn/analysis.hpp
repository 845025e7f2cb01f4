#pragma once

// Read-only analyses of trained models: which frame tuples drive a prediction,
// aligning videos on those tuples, recognition from video prefixes,
// per-class order sensitivity and hidden-feature export.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trn/data.hpp"
#include "trn/error.hpp"
#include "trn/relation.hpp"
#include "trn/sampling.hpp"
#include "trn/training.hpp"

namespace trn {

struct RankedTuple {
  std::size_t scale = 0;
  Tuple positions;                 // into the N equidistant frames
  std::vector<std::size_t> frames;  // video frame indices
  double response = 0;

  bool operator==(const RankedTuple&) const = default;
};

struct RepresentativeTuples {
  std::size_t target_class = 0;
  std::vector<RankedTuple> ranked;
  std::optional<std::string> warning;
};

namespace detail {

template <std::floating_point S>
FrameMatrix<S> equidistant_frames(const MultiScaleTrn<S>& trn, const VideoSample& sample,
                                  FrameIndexSet& indices) {
  const std::size_t N = trn.max_scale();
  if (sample.frames.frames() < N) {
    throw InvalidInput("video has " + std::to_string(sample.frames.frames()) +
                       " frames, fewer than the model's N=" + std::to_string(N));
  }
  if (sample.frames.dim() != trn.feature_dim()) throw InvalidInput("feature dimension mismatch");
  indices = segment_centers(sample.frames.frames(), N);
  return sample.frames.template gather<S>(std::span<const std::size_t>(indices));
}

}  // namespace detail

/// Ranks every d-tuple of the N equidistant frames by the response of T_d on
/// that tuple alone, read at `target_class` (default: the model's prediction).
/// Ties keep lexicographic tuple order.
template <std::floating_point S>
RepresentativeTuples representative_tuples(const MultiScaleTrn<S>& trn, const VideoSample& sample,
                                           std::size_t d, std::size_t top_m,
                                           std::optional<std::size_t> target_class = std::nullopt) {
  if (d < 2 || d > trn.max_scale()) {
    throw InvalidInput("scale " + std::to_string(d) + " outside [2, " +
                       std::to_string(trn.max_scale()) + "]");
  }
  if (top_m == 0) throw InvalidInput("top_m must be positive");
  FrameIndexSet indices;
  const auto frames = detail::equidistant_frames(trn, sample, indices);

  RepresentativeTuples out;
  if (target_class) {
    if (*target_class >= trn.classes()) throw InvalidInput("target class out of range");
    out.target_class = *target_class;
  } else {
    const auto logits =
        multiscale_forward(trn, frames, inference_tuples(trn.max_scale(), trn.tuples_per_scale())).logits;
    out.target_class = predict(std::span<const S>(logits)).label;
  }

  const auto& module = trn.module(d);
  auto all = enumerate_tuples(trn.max_scale(), d);
  out.ranked.reserve(all.size());
  for (auto& t : all) {
    const std::vector<Tuple> single{t};
    const auto logits = relation_term_forward(module, frames, std::span<const Tuple>(single));
    RankedTuple rt;
    rt.scale = d;
    for (std::size_t p : t) rt.frames.push_back(indices[p]);
    rt.positions = std::move(t);
    rt.response = static_cast<double>(logits[out.target_class]);
    out.ranked.push_back(std::move(rt));
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const RankedTuple& a, const RankedTuple& b) { return a.response > b.response; });
  if (top_m > out.ranked.size()) {
    out.warning = "top_m " + std::to_string(top_m) + " clipped to " + std::to_string(out.ranked.size()) +
                  " available tuples";
  } else {
    out.ranked.resize(top_m);
  }
  return out;
}

struct AlignmentMap {
  std::size_t anchors_per_video = 0;
  std::size_t target_class = 0;
  std::vector<std::vector<std::size_t>> anchors;
  /// Playback-rate multiplier per anchor interval that makes each video reach
  /// its anchors together with video 0.
  std::vector<std::vector<double>> warp_rates;
};

/// Anchors each video at its top-ranked A-frame tuple for the videos' shared label.
template <std::floating_point S>
AlignmentMap align_videos(const MultiScaleTrn<S>& trn, std::span<const VideoSample> videos,
                          std::size_t anchors = 5) {
  if (videos.size() < 2) throw InvalidInput("alignment needs at least two videos");
  if (anchors < 2) throw InvalidInput("alignment needs at least two anchors");
  if (anchors > trn.max_scale()) {
    throw InvalidInput("cannot place " + std::to_string(anchors) + " anchors with an N=" +
                       std::to_string(trn.max_scale()) + " model");
  }
  const auto label = videos.front().label;
  for (const auto& v : videos) {
    if (v.label != label) throw InvalidInput("alignment videos must share one class");
    if (v.frames.frames() < anchors) {
      throw InvalidInput("video of " + std::to_string(v.frames.frames()) + " frames is shorter than " +
                         std::to_string(anchors) + " anchors");
    }
  }
  AlignmentMap map;
  map.anchors_per_video = anchors;
  map.target_class = label;
  for (const auto& v : videos) {
    auto top = representative_tuples(trn, v, anchors, 1, std::size_t{label});
    map.anchors.push_back(top.ranked.front().frames);
  }
  const auto& ref = map.anchors.front();
  for (const auto& a : map.anchors) {
    std::vector<double> rates;
    for (std::size_t j = 0; j + 1 < anchors; ++j) {
      rates.push_back(static_cast<double>(ref[j + 1] - ref[j]) / static_cast<double>(a[j + 1] - a[j]));
    }
    map.warp_rates.push_back(std::move(rates));
  }
  return map;
}

/// Evaluation on the leading ceil(fraction * n) frames of every video.
template <std::floating_point S>
EvalReport early_recognition_eval(const VideoClassifier<S>& model, const Dataset& data, double fraction,
                                  const EvalOptions& options = {}) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidInput("fraction must be in (0, 1]");
  Dataset prefix;
  prefix.feature_dim = data.feature_dim;
  prefix.classes = data.classes;
  prefix.samples.reserve(data.size());
  for (const auto& s : data.samples) {
    const double n = static_cast<double>(s.frames.frames());
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * n - 1e-9));
    if (keep == 0) throw InvalidInput("video prefix would contain no frames");
    prefix.samples.push_back(leading_frames(s, keep));
  }
  return evaluate(model, prefix, options);
}

struct ClassOrderDelta {
  std::size_t label = 0;
  std::size_t count = 0;
  double ordered = 0;
  double shuffled = 0;
  double delta = 0;  // ordered - shuffled
};

struct OrderSensitivity {
  double ordered_top1 = 0;
  double shuffled_top1 = 0;
  std::vector<ClassOrderDelta> rows;
};

/// Ordered minus shuffled per-class accuracy, largest gain first.
template <std::floating_point S>
OrderSensitivity class_order_sensitivity(const VideoClassifier<S>& model, const Dataset& data,
                                         std::uint64_t shuffle_seed = 0x5eed, std::size_t threads = 1) {
  const auto ordered = evaluate(model, data, {FrameOrder::ordered, shuffle_seed, threads});
  const auto shuffled = evaluate(model, data, {FrameOrder::shuffled, shuffle_seed, threads});
  OrderSensitivity out;
  out.ordered_top1 = ordered.top1;
  out.shuffled_top1 = shuffled.top1;
  for (std::size_t c = 0; c < model.classes(); ++c) {
    out.rows.push_back({c, ordered.per_class_count[c], ordered.per_class_accuracy[c],
                        shuffled.per_class_accuracy[c],
                        ordered.per_class_accuracy[c] - shuffled.per_class_accuracy[c]});
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const ClassOrderDelta& a, const ClassOrderDelta& b) { return a.delta > b.delta; });
  return out;
}

template <std::floating_point S>
struct Embeddings {
  std::size_t scale = 0;
  std::vector<std::uint32_t> labels;
  std::vector<std::vector<S>> rows;
};

/// Hidden input of h at scale d (the weighted g-sum) for every video, using
/// the same equidistant frames and tuples as evaluation.
template <std::floating_point S>
Embeddings<S> export_embeddings(const MultiScaleTrn<S>& trn, const Dataset& data, std::size_t d) {
  if (d < 2 || d > trn.max_scale()) throw InvalidInput("embedding scale out of range");
  if (data.empty()) throw InvalidInput("dataset is empty");
  const auto sets = inference_tuples(trn.max_scale(), trn.tuples_per_scale());
  const auto& st = sets.at(d);
  Embeddings<S> out;
  out.scale = d;
  for (const auto& s : data.samples) {
    FrameIndexSet idx;
    const auto frames = detail::equidistant_frames(trn, s, idx);
    auto sf = relation_term_evaluate(trn.module(d), frames, std::span<const Tuple>(st.tuples), st.weight);
    out.labels.push_back(s.label);
    out.rows.push_back(std::move(sf.hidden));
  }
  return out;
}

// Embedding text format: a header line "sample label e0 e1 ... e{H-1}", then
// one whitespace-separated row per video with values printed to 9
// significant digits.

template <std::floating_point S>
void write_embeddings(const std::string& path, const Embeddings<S>& e) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::size_t H = e.rows.empty() ? 0 : e.rows.front().size();
  out << "sample label";
  for (std::size_t j = 0; j < H; ++j) out << " e" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < e.rows.size(); ++i) {
    out << i << ' ' << e.labels[i];
    for (S v : e.rows[i]) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline Embeddings<double> read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": missing header");
  std::istringstream header(line);
  std::string tok;
  std::size_t columns = 0;
  while (header >> tok) ++columns;
  if (columns < 2) throw IoError(path + ": malformed header");
  Embeddings<double> e;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t index = 0;
    std::uint32_t label = 0;
    if (!(row >> index >> label)) throw IoError(path + ": malformed row");
    std::vector<double> values;
    double v = 0;
    while (row >> v) values.push_back(v);
    if (values.size() != columns - 2) throw IoError(path + ": row width mismatch");
    e.labels.push_back(label);
    e.rows.push_back(std::move(values));
  }
  return e;
}

}  // namespace trn

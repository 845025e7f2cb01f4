#pragma once

// Line-delimited JSON records for histories, evaluation reports and analyses.
// Every record carries a "type" field:
//
//   epoch      epoch, loss, train_top1
//   eval       tag, samples, classes, top1, top5 (null when classes <= 5)
//   class      tag, label, count, accuracy, confusion (row of predicted counts)
//   compare    pooling, scale, seed, top1, final_loss
//   stream     video, frames_seen, key_frames, label, probabilities, logits, scale_logits
//   ranking    video, scale, rank, positions, frames, response, target_class
//   alignment  video, target_class, anchors, warp_rates
//   order      label, count, ordered, shuffled, delta
//   warning    message

#include <concepts>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trn/analysis.hpp"
#include "trn/error.hpp"
#include "trn/streaming.hpp"
#include "trn/training.hpp"

namespace trn::report {

using Json = nlohmann::json;

inline Json epoch_record(const EpochRecord& r) {
  return {{"type", "epoch"}, {"epoch", r.epoch}, {"loss", r.loss}, {"train_top1", r.train_top1}};
}

/// One summary record followed by one record per class.
inline std::vector<Json> eval_records(const EvalReport& r, const std::string& tag) {
  std::vector<Json> out;
  Json summary{{"type", "eval"}, {"tag", tag},     {"samples", r.samples},
               {"classes", r.classes}, {"top1", r.top1}};
  summary["top5"] = r.top5 ? Json(*r.top5) : Json(nullptr);
  out.push_back(std::move(summary));
  for (std::size_t c = 0; c < r.classes; ++c) {
    out.push_back({{"type", "class"},
                   {"tag", tag},
                   {"label", c},
                   {"count", r.per_class_count[c]},
                   {"accuracy", r.per_class_accuracy[c]},
                   {"confusion", r.confusion[c]}});
  }
  return out;
}

inline Json compare_record(const ComparisonRow& r) {
  return {{"type", "compare"}, {"pooling", to_string(r.pooling)}, {"scale", r.scale},
          {"seed", r.seed},    {"top1", r.top1},                  {"final_loss", r.final_loss}};
}

template <std::floating_point S>
Json stream_record(std::size_t video, const StreamPrediction<S>& p) {
  return {{"type", "stream"},       {"video", video},
          {"frames_seen", p.frames_seen}, {"key_frames", p.key_frames},
          {"label", p.label},       {"probabilities", p.probabilities},
          {"logits", p.logits},     {"scale_logits", p.scale_logits}};
}

inline std::vector<Json> ranking_records(std::size_t video, const RepresentativeTuples& r) {
  std::vector<Json> out;
  if (r.warning) out.push_back({{"type", "warning"}, {"message", *r.warning}});
  for (std::size_t i = 0; i < r.ranked.size(); ++i) {
    const auto& t = r.ranked[i];
    out.push_back({{"type", "ranking"},
                   {"video", video},
                   {"scale", t.scale},
                   {"rank", i + 1},
                   {"positions", t.positions},
                   {"frames", t.frames},
                   {"response", t.response},
                   {"target_class", r.target_class}});
  }
  return out;
}

inline std::vector<Json> alignment_records(const AlignmentMap& m, const std::vector<std::size_t>& videos) {
  std::vector<Json> out;
  for (std::size_t i = 0; i < m.anchors.size(); ++i) {
    out.push_back({{"type", "alignment"},
                   {"video", i < videos.size() ? videos[i] : i},
                   {"target_class", m.target_class},
                   {"anchors", m.anchors[i]},
                   {"warp_rates", m.warp_rates[i]}});
  }
  return out;
}

inline std::vector<Json> order_records(const OrderSensitivity& s) {
  std::vector<Json> out;
  for (const auto& r : s.rows) {
    out.push_back({{"type", "order"},
                   {"label", r.label},
                   {"count", r.count},
                   {"ordered", r.ordered},
                   {"shuffled", r.shuffled},
                   {"delta", r.delta}});
  }
  return out;
}

inline std::string to_jsonl(const std::vector<Json>& records) {
  std::string s;
  for (const auto& r : records) {
    s += r.dump();
    s += '\n';
  }
  return s;
}

inline void write_jsonl(const std::string& path, const std::vector<Json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << to_jsonl(records);
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace trn::report

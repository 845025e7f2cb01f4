#pragma once

// Mini-batch training and evaluation for every VideoClassifier pooling, the
// ordered/shuffled frame-order switch, and the pooling comparison grid.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "trn/data.hpp"
#include "trn/error.hpp"
#include "trn/frames.hpp"
#include "trn/model.hpp"
#include "trn/nn.hpp"
#include "trn/relation.hpp"
#include "trn/rng.hpp"
#include "trn/sampling.hpp"

namespace trn {

enum class FrameOrder { ordered, shuffled };

inline std::string to_string(FrameOrder o) { return o == FrameOrder::ordered ? "ordered" : "shuffled"; }

inline FrameOrder parse_frame_order(const std::string& s) {
  if (s == "ordered") return FrameOrder::ordered;
  if (s == "shuffled") return FrameOrder::shuffled;
  throw InvalidInput("unknown frame order \"" + s + "\"");
}

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  SamplingPlan plan{};
  Pooling pooling = Pooling::temporal_relation;
  FrameOrder frame_order = FrameOrder::ordered;
  double hidden_dropout = 0.0;  // on the relation g-sum; 0 disables

  void validate() const {
    if (epochs == 0) throw InvalidInput("epochs must be positive");
    if (batch_size == 0) throw InvalidInput("batch size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidInput("learning rate must be finite and non-negative");
    }
    if (!(hidden_dropout >= 0.0 && hidden_dropout < 1.0)) {
      throw InvalidInput("hidden dropout must be in [0, 1)");
    }
    plan.validate();
  }
};

inline constexpr std::uint64_t kInitStream = 0x696e6974ull;
inline constexpr std::uint64_t kTrainStream = 0x747261696eull;

/// Freshly initialised model for `config`; N and k come from the plan.
template <std::floating_point S>
VideoClassifier<S> make_model(const TrainConfig& config, std::size_t feature_dim, std::size_t hidden,
                              std::size_t classes) {
  config.validate();
  auto rng = seeded_rng(config.seed, kInitStream);
  const ModelShape shape{feature_dim, hidden, classes, config.plan.frames, config.plan.tuples_per_scale};
  return VideoClassifier<S>::initialized(config.pooling, shape, rng);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0;
  double train_top1 = 0;
};

template <std::floating_point S>
struct TrainResult {
  VideoClassifier<S> model;
  std::vector<EpochRecord> history;
};

namespace detail {

inline void check_dataset(const Dataset& ds, std::size_t feature_dim, std::size_t classes) {
  if (ds.empty()) throw InvalidInput("dataset is empty");
  for (const auto& s : ds.samples) {
    if (s.frames.dim() != feature_dim) {
      throw InvalidInput("dataset feature dimension " + std::to_string(s.frames.dim()) +
                         " does not match model dimension " + std::to_string(feature_dim));
    }
    if (s.label >= classes) {
      throw InvalidInput("label " + std::to_string(s.label) + " outside the model's " +
                         std::to_string(classes) + " classes");
    }
    if (s.frames.empty()) throw InvalidInput("dataset contains a video with no frames");
  }
}

template <std::floating_point S, class Gen>
void shuffle_rows(FrameMatrix<S>& frames, Gen& rng) {
  std::vector<std::size_t> order(frames.frames());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  frames = frames.gather(std::span<const std::size_t>(order));
}

}  // namespace detail

/// Per step: segment-sample every video in the batch, optionally permute the
/// sampled frames, draw k tuples per scale, forward, cross-entropy, backward,
/// then one SGD update on the batch-mean gradient.
template <std::floating_point S>
TrainResult<S> train(VideoClassifier<S> model, const Dataset& data, const TrainConfig& config,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  config.validate();
  if (config.pooling != model.pooling()) throw InvalidInput("config pooling differs from the model's");
  if (model.pooling() != Pooling::single_frame && config.plan.frames != model.frames_sampled()) {
    throw InvalidInput("sampling plan N differs from the model's N");
  }
  detail::check_dataset(data, model.feature_dim(), model.classes());

  auto rng = seeded_rng(config.seed, kTrainStream);
  Sgd<S> opt({config.learning_rate, config.momentum});
  SamplingPlan plan = config.plan;
  plan.frames = model.frames_sampled();
  const bool relational = model.pooling() == Pooling::temporal_relation;
  const std::size_t k = model.shape().tuples_per_scale;
  const S keep = static_cast<S>(1.0 - config.hidden_dropout);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult<S> result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);

      std::optional<MultiScaleGradient<S>> trn_grad;
      std::optional<GradientSet<S>> head_grad;
      if (relational) {
        trn_grad = MultiScaleGradient<S>::zeros_like(model.trn(), 0);
      } else {
        head_grad = GradientSet<S>::zeros_like(model.head());
      }

      double batch_loss = 0;
      for (std::size_t b = begin; b < end; ++b) {
        const auto& sample = data.samples[order[b]];
        // Not segment_sample: single-frame models run with N = 1.
        const auto idx = plan.mode == SegmentMode::center ? segment_centers(sample.frames.frames(), plan.frames)
                                                          : segment_random(sample.frames.frames(), plan.frames, rng);
        auto frames = sample.frames.template gather<S>(std::span<const std::size_t>(idx));
        if (config.frame_order == FrameOrder::shuffled) detail::shuffle_rows(frames, rng);

        LossGradient<S> lg;
        if (relational) {
          const auto sets = training_tuples(plan.frames, k, rng);
          std::vector<std::vector<S>> masks;
          if (config.hidden_dropout > 0.0) {
            std::bernoulli_distribution survive(1.0 - config.hidden_dropout);
            for (std::size_t m = 0; m < model.trn().modules().size(); ++m) {
              std::vector<S> mask(model.trn().hidden());
              for (auto& v : mask) v = survive(rng) ? S{1} / keep : S{0};
              masks.push_back(std::move(mask));
            }
          }
          const auto tape = trace_multiscale(model.trn(), frames, sets,
                                             std::span<const std::vector<S>>(masks));
          lg = softmax_cross_entropy(std::span<const S>(tape.logits), sample.label);
          if (predict(std::span<const S>(tape.logits)).label == sample.label) ++correct;
          backward_multiscale(model.trn(), tape, std::span<const S>(lg.grad_logits), *trn_grad);
        } else {
          const auto x = pooled_input(model, frames);
          const auto trace = mlp_forward_traced(model.head(), std::span<const S>(x));
          lg = softmax_cross_entropy(trace.output(), sample.label);
          if (predict(trace.output()).label == sample.label) ++correct;
          mlp_backward_accumulate(model.head(), trace, std::span<const S>(lg.grad_logits), *head_grad,
                                  std::span<S>());
        }
        if (!std::isfinite(static_cast<double>(lg.loss))) {
          throw DivergenceError("non-finite training loss", step);
        }
        batch_loss += static_cast<double>(lg.loss);
      }

      const S inv = S{1} / static_cast<S>(end - begin);
      std::vector<std::span<S>> params;
      std::vector<std::span<const S>> grads;
      model.append_parameters(params);
      if (relational) {
        trn_grad->scale(inv);
        append_gradient_arrays(*trn_grad, grads);
      } else {
        head_grad->scale(inv);
        append_gradient_arrays(*head_grad, grads);
      }
      opt.step(std::span<const std::span<S>>(params), std::span<const std::span<const S>>(grads));
      loss_sum += batch_loss;
      ++step;
    }
    EpochRecord rec{epoch + 1, loss_sum / static_cast<double>(data.size()),
                    static_cast<double>(correct) / static_cast<double>(data.size())};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.model = std::move(model);
  return result;
}

struct EvalOptions {
  FrameOrder frame_order = FrameOrder::ordered;
  std::uint64_t shuffle_seed = 0x5eed;
  std::size_t threads = 1;
};

struct EvalReport {
  std::size_t classes = 0;
  std::size_t samples = 0;
  double top1 = 0;
  std::optional<double> top5;  // empty when classes <= 5
  std::vector<double> per_class_accuracy;
  std::vector<std::size_t> per_class_count;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::uint32_t> predictions;

  std::size_t correct() const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) c += confusion[i][i];
    return c;
  }

  bool operator==(const EvalReport&) const = default;
};

/// Deterministic-centre logits for one video. In shuffled mode the sampled
/// frames are permuted by a generator keyed on (shuffle_seed, sample_index).
template <std::floating_point S>
std::vector<S> inference_logits(const VideoClassifier<S>& model, const VideoSample& sample,
                                const EvalOptions& options, std::size_t sample_index) {
  const auto idx = segment_centers(sample.frames.frames(), model.frames_sampled());
  auto frames = sample.frames.template gather<S>(std::span<const std::size_t>(idx));
  if (options.frame_order == FrameOrder::shuffled) {
    auto rng = seeded_rng(options.shuffle_seed, sample_index);
    detail::shuffle_rows(frames, rng);
  }
  TupleSets sets;
  if (model.pooling() == Pooling::temporal_relation) {
    sets = inference_tuples(model.frames_sampled(), model.shape().tuples_per_scale);
  }
  return classifier_logits(model, frames, sets);
}

/// Top-1/top-5, per-class accuracy and confusion counts. Results do not
/// depend on `options.threads`.
template <std::floating_point S>
EvalReport evaluate(const VideoClassifier<S>& model, const Dataset& data, const EvalOptions& options = {}) {
  detail::check_dataset(data, model.feature_dim(), model.classes());
  const std::size_t n = data.size();
  const std::size_t C = model.classes();
  std::vector<std::uint32_t> pred(n);
  std::vector<char> in_top5(n, 0);

  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto logits = inference_logits(model, data.samples[i], options, i);
      const auto label = data.samples[i].label;
      pred[i] = static_cast<std::uint32_t>(predict(std::span<const S>(logits)).label);
      std::size_t rank = 0;
      for (std::size_t j = 0; j < C; ++j) {
        if (logits[j] > logits[label] || (logits[j] == logits[label] && j < label)) ++rank;
      }
      in_top5[i] = rank < 5 ? 1 : 0;
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, n);
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo < hi) pool.emplace_back(work, lo, hi);
    }
  }

  EvalReport r;
  r.classes = C;
  r.samples = n;
  r.predictions = pred;
  r.confusion.assign(C, std::vector<std::size_t>(C, 0));
  r.per_class_count.assign(C, 0);
  std::size_t hits5 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = data.samples[i].label;
    ++r.confusion[label][pred[i]];
    ++r.per_class_count[label];
    hits5 += static_cast<std::size_t>(in_top5[i]);
  }
  r.per_class_accuracy.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    if (r.per_class_count[c] > 0) {
      r.per_class_accuracy[c] =
          static_cast<double>(r.confusion[c][c]) / static_cast<double>(r.per_class_count[c]);
    }
  }
  r.top1 = static_cast<double>(r.correct()) / static_cast<double>(n);
  if (C > 5) r.top5 = static_cast<double>(hits5) / static_cast<double>(n);
  return r;
}

struct ComparisonGrid {
  std::vector<Pooling> poolings{Pooling::temporal_relation, Pooling::average_pool};
  std::vector<std::size_t> scales{2, 3, 4, 5};  // N, frames sampled per video
  std::vector<std::uint64_t> seeds{1};
};

struct ComparisonRow {
  Pooling pooling = Pooling::temporal_relation;
  std::size_t scale = 0;
  std::uint64_t seed = 0;
  double top1 = 0;
  double final_loss = 0;
};

/// Trains one model per (pooling, scale, seed) cell and evaluates it on `val`.
/// Every cell with the same seed shares initialisation and sampling seeds.
template <std::floating_point S>
std::vector<ComparisonRow> compare_poolings(
    const Dataset& train_set, const Dataset& val, const TrainConfig& base, std::size_t hidden,
    const ComparisonGrid& grid, std::size_t eval_threads = 1,
    const std::function<void(const ComparisonRow&)>& on_row = {}) {
  std::vector<ComparisonRow> rows;
  for (const auto pooling : grid.poolings) {
    for (const auto scale : grid.scales) {
      for (const auto seed : grid.seeds) {
        TrainConfig cfg = base;
        cfg.pooling = pooling;
        cfg.plan.frames = scale;
        cfg.seed = seed;
        auto model = make_model<S>(cfg, train_set.feature_dim, hidden, train_set.classes);
        auto trained = train(std::move(model), train_set, cfg);
        const auto report = evaluate(trained.model, val, {FrameOrder::ordered, 0x5eed, eval_threads});
        ComparisonRow row{pooling, scale, seed, report.top1, trained.history.back().loss};
        rows.push_back(row);
        if (on_row) on_row(row);
      }
    }
  }
  return rows;
}

}  // namespace trn

// trn: generate synthetic data, train and evaluate relation models, replay
// feature streams and run the interpretability analyses.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 IO or file format
// error, 3 numerical failure (divergence, failed gradient check).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trn/analysis.hpp"
#include "trn/data.hpp"
#include "trn/model.hpp"
#include "trn/report.hpp"
#include "trn/streaming.hpp"
#include "trn/training.hpp"

namespace fs = std::filesystem;
using trn::report::Json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct Options {
  std::string out_dir = "run";
  int precision = 32;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  // data
  std::string preset = "order-critical";
  std::optional<std::size_t> classes, motifs, feature_dim, frames_per_video, motifs_per_class, motif_dwell,
      distractor_motifs;
  std::optional<double> noise_sigma, distractor_rate;
  std::size_t train_per_class = 500;
  std::size_t val_per_class = 200;
  std::string data;
  std::string val;

  // model and training
  std::string model;
  std::size_t hidden = 64;
  std::size_t frames = 8;
  std::size_t k = 3;
  std::string pooling = "temporal-relation";
  std::string frame_order = "ordered";
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 0.02;
  double momentum = 0.9;
  double dropout = 0.0;

  // stream
  std::size_t stride = 1;
  std::size_t videos = 0;  // 0: all

  // analyze
  std::string analysis = "all";
  std::size_t scale = 0;  // 0: every scale
  std::size_t top = 5;
  std::size_t anchors = 5;

  // compare-pool
  std::vector<std::size_t> scales{2, 3, 4, 5};
  std::vector<std::uint64_t> seeds{1};

  // grad-check
  std::size_t trials = 100;
};

void add_options(CLI::App& app, Options& o) {
  app.add_option("--out-dir", o.out_dir, "Directory for artifacts")->capture_default_str();
  app.add_option("--precision", o.precision, "Scalar width in bits")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  app.add_option("--seed", o.seed, "Seed for data, initialisation and sampling")->capture_default_str();
  app.add_option("--threads", o.threads, "Evaluation threads")->check(CLI::PositiveNumber)->capture_default_str();

  const std::string data = "Data";
  app.add_option("--preset", o.preset, "Synthetic preset")
      ->check(CLI::IsMember({"order-critical", "order-free"}))
      ->capture_default_str()
      ->group(data);
  app.add_option("--classes", o.classes, "Override: number of classes")->group(data);
  app.add_option("--motifs", o.motifs, "Override: motif vocabulary size")->group(data);
  app.add_option("--feature-dim", o.feature_dim, "Override: feature dimension D")->group(data);
  app.add_option("--frames-per-video", o.frames_per_video, "Override: frames per video")->group(data);
  app.add_option("--motifs-per-class", o.motifs_per_class, "Override: motifs per class")->group(data);
  app.add_option("--motif-dwell", o.motif_dwell, "Override: frames per motif run")->group(data);
  app.add_option("--distractor-motifs", o.distractor_motifs, "Override: reserved distractor motifs")->group(data);
  app.add_option("--noise-sigma", o.noise_sigma, "Override: per-frame Gaussian noise")->group(data);
  app.add_option("--distractor-rate", o.distractor_rate, "Override: distractor probability")->group(data);
  app.add_option("--train-per-class", o.train_per_class, "Training videos per class")
      ->capture_default_str()
      ->group(data);
  app.add_option("--val-per-class", o.val_per_class, "Validation videos per class")
      ->capture_default_str()
      ->group(data);
  app.add_option("--data", o.data, "TRNF input (training set for train/compare-pool)")->group(data);
  app.add_option("--val", o.val, "TRNF validation input")->group(data);

  const std::string model = "Model and training";
  app.add_option("--model", o.model, "Checkpoint to load")->group(model);
  app.add_option("--hidden", o.hidden, "Hidden width H")->check(CLI::PositiveNumber)->capture_default_str()->group(model);
  app.add_option("--frames", o.frames, "Frames sampled per video (N)")
      ->check(CLI::Range(2, 16))
      ->capture_default_str()
      ->group(model);
  app.add_option("--k", o.k, "Tuples per scale during training")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->group(model);
  app.add_option("--pooling", o.pooling, "temporal-relation, average-pool or single-frame")
      ->capture_default_str()
      ->group(model);
  app.add_option("--frame-order", o.frame_order, "ordered or shuffled")->capture_default_str()->group(model);
  app.add_option("--epochs", o.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str()->group(model);
  app.add_option("--batch-size", o.batch_size, "Videos per step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str()
      ->group(model);
  app.add_option("--lr", o.lr, "SGD learning rate")->check(CLI::NonNegativeNumber)->capture_default_str()->group(model);
  app.add_option("--momentum", o.momentum, "SGD momentum")->check(CLI::Range(0.0, 1.0))->capture_default_str()->group(model);
  app.add_option("--dropout", o.dropout, "Dropout on the relation hidden sum")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str()
      ->group(model);

  const std::string stream = "Streaming";
  app.add_option("--stride", o.stride, "Key-frame spacing")->check(CLI::PositiveNumber)->capture_default_str()->group(stream);
  app.add_option("--videos", o.videos, "Videos to process (0 = all)")->capture_default_str()->group(stream);

  const std::string an = "Analysis";
  app.add_option("--analysis", o.analysis, "rank, align, early, order, embed or all")
      ->check(CLI::IsMember({"rank", "align", "early", "order", "embed", "all"}))
      ->capture_default_str()
      ->group(an);
  app.add_option("--scale", o.scale, "Relation scale for rank/embed (0 = every scale)")->capture_default_str()->group(an);
  app.add_option("--top", o.top, "Tuples kept per ranking")->check(CLI::PositiveNumber)->capture_default_str()->group(an);
  app.add_option("--anchors", o.anchors, "Alignment anchors")->check(CLI::Range(2, 16))->capture_default_str()->group(an);

  const std::string cmp = "Comparison";
  app.add_option("--scales", o.scales, "Frame counts for compare-pool")->delimiter(',')->capture_default_str()->group(cmp);
  app.add_option("--seeds", o.seeds, "Seeds for compare-pool")->delimiter(',')->capture_default_str()->group(cmp);

  app.add_option("--trials", o.trials, "Random configurations for grad-check")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

trn::SyntheticSpec resolve_spec(const Options& o) {
  auto s = o.preset == "order-free" ? trn::order_free_preset() : trn::order_critical_preset();
  if (o.classes) {
    s.num_classes = *o.classes;
    // Keep only the reversal pairs that still name valid classes.
    std::erase_if(s.reversal_pairs, [&](const auto& p) { return p.first >= s.num_classes || p.second >= s.num_classes; });
  }
  if (o.motifs) s.motif_count = *o.motifs;
  if (o.feature_dim) s.feature_dim = *o.feature_dim;
  if (o.frames_per_video) s.frames_per_video = *o.frames_per_video;
  if (o.motifs_per_class) s.motifs_per_class = *o.motifs_per_class;
  if (o.motif_dwell) s.motif_dwell = *o.motif_dwell;
  if (o.distractor_motifs) s.distractor_motifs = *o.distractor_motifs;
  if (o.noise_sigma) s.noise_sigma = *o.noise_sigma;
  if (o.distractor_rate) s.distractor_rate = *o.distractor_rate;
  s.validate();
  return s;
}

trn::TrainConfig resolve_train(const Options& o) {
  trn::TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch_size;
  c.learning_rate = o.lr;
  c.momentum = o.momentum;
  c.seed = o.seed;
  c.plan.frames = o.frames;
  c.plan.tuples_per_scale = o.k;
  c.plan.mode = trn::SegmentMode::random;
  c.pooling = trn::parse_pooling(o.pooling);
  c.frame_order = trn::parse_frame_order(o.frame_order);
  c.hidden_dropout = o.dropout;
  c.validate();
  return c;
}

trn::EvalOptions eval_options(const Options& o) {
  return {trn::parse_frame_order(o.frame_order), 0x5eed, o.threads};
}

void require_input(const std::string& path, const std::string& flag) {
  if (path.empty()) throw trn::InvalidInput(flag + " is required for this command");
  if (!fs::exists(path)) throw trn::IoError("input file " + path + " does not exist");
}

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

/// Resolved configuration plus enough context to rerun: `trn <command> --config manifest.ini`.
void write_manifest(const CLI::App& app, const std::string& command, const Options& o) {
  const fs::path dir(o.out_dir);
  // Unset overrides serialise as key="" which would not parse back.
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream lines(app.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || line[0] == '[' || eq == std::string::npos) continue;
    std::string value = line.substr(eq + 1);
    if (value == "\"\"") continue;
    entries.emplace_back(line.substr(0, eq), value);
  }
  {
    std::ofstream ini(join(dir, "manifest.ini"), std::ios::trunc);
    ini << "# trn " << command << " --config manifest.ini\n";
    for (const auto& [k, v] : entries) ini << k << '=' << v << '\n';
    if (!ini) throw trn::IoError("cannot write manifest.ini");
  }
  Json j;
  j["command"] = command;
  j["seed"] = o.seed;
  j["precision"] = o.precision;
  j["rerun"] = "trn " + command + " --config " + join(dir, "manifest.ini");
  Json cfg = Json::object();
  for (auto [k, v] : entries) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    cfg[k] = v;
  }
  j["config"] = cfg;
  std::ofstream js(join(dir, "manifest.json"), std::ios::trunc);
  js << j.dump(2) << '\n';
  if (!js) throw trn::IoError("cannot write manifest.json");
}

trn::GeneratedData load_or_generate(const Options& o) {
  if (!o.data.empty()) {
    require_input(o.data, "--data");
    trn::GeneratedData d;
    d.train = trn::read_features(o.data);
    if (!o.val.empty()) {
      require_input(o.val, "--val");
      d.val = trn::read_features(o.val);
    }
    return d;
  }
  return trn::generate_dataset(resolve_spec(o), o.seed, o.train_per_class, o.val_per_class);
}

int cmd_gen_data(const Options& o) {
  const auto spec = resolve_spec(o);
  const auto d = trn::generate_dataset(spec, o.seed, o.train_per_class, o.val_per_class);
  const fs::path dir(o.out_dir);
  trn::write_features(join(dir, "train.trnf"), d.train);
  trn::write_features(join(dir, "val.trnf"), d.val);
  std::cout << "wrote " << d.train.size() << " training and " << d.val.size() << " validation videos to "
            << o.out_dir << "\n";
  return kOk;
}

template <std::floating_point S>
int cmd_train(const Options& o) {
  const auto cfg = resolve_train(o);
  const auto d = load_or_generate(o);
  if (d.train.empty()) throw trn::InvalidInput("training set is empty");
  auto model = trn::make_model<S>(cfg, d.train.feature_dim, o.hidden, d.train.classes);
  std::vector<Json> history;
  auto result = trn::train(std::move(model), d.train, cfg, [&](const trn::EpochRecord& r) {
    history.push_back(trn::report::epoch_record(r));
    std::printf("epoch %3zu  loss %.4f  train_top1 %.4f\n", r.epoch, r.loss, r.train_top1);
  });
  const fs::path dir(o.out_dir);
  trn::save_model(join(dir, "model.trnw"), result.model);
  trn::report::write_jsonl(join(dir, "history.jsonl"), history);
  if (!d.val.empty()) {
    const auto rep = trn::evaluate(result.model, d.val, eval_options(o));
    trn::report::write_jsonl(join(dir, "eval.jsonl"), trn::report::eval_records(rep, "val"));
    std::printf("val top1 %.4f\n", rep.top1);
  }
  return kOk;
}

template <std::floating_point S>
trn::VideoClassifier<S> load_checkpoint(const Options& o) {
  require_input(o.model, "--model");
  return trn::load_model<S>(o.model);
}

trn::Dataset load_eval_data(const Options& o) {
  const std::string& path = !o.val.empty() ? o.val : o.data;
  require_input(path, "--val or --data");
  return trn::read_features(path);
}

template <std::floating_point S>
int cmd_eval(const Options& o) {
  const auto model = load_checkpoint<S>(o);
  const auto data = load_eval_data(o);
  const auto rep = trn::evaluate(model, data, eval_options(o));
  trn::report::write_jsonl(join(fs::path(o.out_dir), "eval.jsonl"), trn::report::eval_records(rep, o.frame_order));
  std::printf("%s top1 %.4f", o.frame_order.c_str(), rep.top1);
  if (rep.top5) std::printf("  top5 %.4f", *rep.top5);
  std::printf("  (%zu videos)\n", rep.samples);
  return kOk;
}

template <std::floating_point S>
int cmd_stream(const Options& o) {
  const auto model = load_checkpoint<S>(o);
  if (model.pooling() != trn::Pooling::temporal_relation) {
    throw trn::InvalidInput("streaming needs a temporal-relation checkpoint");
  }
  const auto data = load_eval_data(o);
  const auto& net = model.trn();
  const std::size_t count = o.videos == 0 ? data.size() : std::min(o.videos, data.size());
  std::vector<Json> records;
  std::size_t predictions = 0;
  for (std::size_t v = 0; v < count; ++v) {
    trn::StreamQueue<S> q(net.max_scale(), o.stride, net.feature_dim());
    const auto& frames = data.samples[v].frames;
    std::vector<S> f(frames.dim());
    for (std::size_t t = 0; t < frames.frames(); ++t) {
      const auto row = frames.row(t);
      std::copy(row.begin(), row.end(), f.begin());
      if (auto p = q.push(net, std::span<const S>(f))) {
        records.push_back(trn::report::stream_record(v, *p));
        ++predictions;
      }
    }
  }
  trn::report::write_jsonl(join(fs::path(o.out_dir), "stream.jsonl"), records);
  std::printf("%zu predictions over %zu videos\n", predictions, count);
  return kOk;
}

template <std::floating_point S>
int cmd_analyze(const Options& o) {
  const auto model = load_checkpoint<S>(o);
  const auto data = load_eval_data(o);
  const fs::path dir(o.out_dir);
  const bool all = o.analysis == "all";
  const bool relational = model.pooling() == trn::Pooling::temporal_relation;
  if (!relational && o.analysis != "early" && o.analysis != "order" && !all) {
    throw trn::InvalidInput("analysis '" + o.analysis + "' needs a temporal-relation checkpoint");
  }
  const std::size_t count = o.videos == 0 ? data.size() : std::min(o.videos, data.size());
  std::vector<std::size_t> scales;
  if (relational) {
    if (o.scale != 0) {
      scales.push_back(o.scale);
    } else {
      for (std::size_t d = 2; d <= model.trn().max_scale(); ++d) scales.push_back(d);
    }
  }

  if (relational && (all || o.analysis == "rank")) {
    std::vector<Json> recs;
    for (std::size_t v = 0; v < count; ++v) {
      for (std::size_t d : scales) {
        const auto r = trn::representative_tuples(model.trn(), data.samples[v], d, o.top);
        for (auto& j : trn::report::ranking_records(v, r)) recs.push_back(std::move(j));
      }
    }
    trn::report::write_jsonl(join(dir, "rankings.jsonl"), recs);
  }
  if (relational && (all || o.analysis == "align")) {
    std::vector<Json> recs;
    if (o.anchors > model.trn().max_scale()) {
      throw trn::InvalidInput("--anchors exceeds the model's N");
    }
    for (std::size_t c = 0; c < data.classes; ++c) {
      std::vector<trn::VideoSample> videos;
      std::vector<std::size_t> ids;
      for (std::size_t v = 0; v < count; ++v) {
        if (data.samples[v].label == c) {
          videos.push_back(data.samples[v]);
          ids.push_back(v);
        }
      }
      if (videos.size() < 2) continue;
      const auto m = trn::align_videos(model.trn(), std::span<const trn::VideoSample>(videos), o.anchors);
      for (auto& j : trn::report::alignment_records(m, ids)) recs.push_back(std::move(j));
    }
    trn::report::write_jsonl(join(dir, "alignment.jsonl"), recs);
  }
  if (all || o.analysis == "early") {
    std::vector<Json> recs;
    for (double f : {0.25, 0.5, 1.0}) {
      const auto rep = trn::early_recognition_eval(model, data, f, {trn::FrameOrder::ordered, 0x5eed, o.threads});
      char tag[32];
      std::snprintf(tag, sizeof tag, "prefix-%.2f", f);
      for (auto& j : trn::report::eval_records(rep, tag)) recs.push_back(std::move(j));
      std::printf("first %3.0f%% of frames: top1 %.4f\n", 100 * f, rep.top1);
    }
    trn::report::write_jsonl(join(dir, "early.jsonl"), recs);
  }
  if (all || o.analysis == "order") {
    const auto s = trn::class_order_sensitivity(model, data, 0x5eed, o.threads);
    trn::report::write_jsonl(join(dir, "order.jsonl"), trn::report::order_records(s));
    std::printf("ordered top1 %.4f  shuffled top1 %.4f\n", s.ordered_top1, s.shuffled_top1);
  }
  if (relational && (all || o.analysis == "embed")) {
    for (std::size_t d : scales) {
      const auto e = trn::export_embeddings(model.trn(), data, d);
      trn::write_embeddings(join(dir, "embeddings_d" + std::to_string(d) + ".txt"), e);
    }
  }
  return kOk;
}

template <std::floating_point S>
int cmd_compare(const Options& o) {
  const auto base = resolve_train(o);
  const auto d = load_or_generate(o);
  if (d.val.empty()) throw trn::InvalidInput("compare-pool needs a validation set");
  trn::ComparisonGrid grid;
  grid.scales = o.scales;
  grid.seeds = o.seeds;
  for (std::size_t s : grid.scales) {
    if (s < 2 || s > trn::kMaxEnumerableFrames) throw trn::InvalidInput("--scales entries must be in [2, 16]");
  }
  std::vector<Json> recs;
  trn::compare_poolings<S>(d.train, d.val, base, o.hidden, grid, o.threads, [&](const trn::ComparisonRow& r) {
    recs.push_back(trn::report::compare_record(r));
    std::printf("%-18s N=%zu seed=%llu  top1 %.4f\n", trn::to_string(r.pooling).c_str(), r.scale,
                static_cast<unsigned long long>(r.seed), r.top1);
  });
  trn::report::write_jsonl(join(fs::path(o.out_dir), "compare.jsonl"), recs);
  return kOk;
}

// Finite-difference check of the full multi-scale gradient on a tiny model
// (D=3, H=4, C=2, N=3) in double precision. Probes that cross a ReLU kink are
// not differentiable and are skipped.
int cmd_grad_check(const Options& o) {
  using M = trn::MultiScaleTrn<double>;
  constexpr double kStep = 1e-5;
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (std::size_t trial = 0; trial < o.trials; ++trial) {
    auto rng = trn::seeded_rng(o.seed, trial);
    M net = M::initialized(3, 4, 2, 3, 3, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& rm : net.modules()) {
      for (auto* mlp : {&rm.g(), &rm.h()})
        for (auto& l : mlp->layers())
          for (auto& b : l.bias()) b = 0.5 * u(rng);
    }
    trn::FrameMatrix<double> frames(3, 3);
    for (auto& v : frames.values()) v = u(rng);
    const auto sets = trn::training_tuples(3, 3, rng);
    std::vector<double> up(2);
    for (auto& v : up) v = u(rng);

    const auto grads = trn::multiscale_backward(net, frames, sets, std::span<const double>(up));
    auto objective = [&] {
      const auto y = trn::multiscale_forward(net, frames, sets).logits;
      return std::inner_product(y.begin(), y.end(), up.begin(), 0.0);
    };
    auto pattern = [&] {
      std::vector<bool> p;
      for (const auto& s : trn::trace_multiscale(net, frames, sets).scales)
        for (const auto& t : s.g_traces)
          for (const auto& out : t.outputs)
            for (double v : out) p.push_back(v > 0);
      return p;
    };
    auto probe = [&](double& x, double analytic) {
      const double saved = x;
      x = saved + kStep;
      const double hi = objective();
      const auto hi_p = pattern();
      x = saved - kStep;
      const double lo = objective();
      const auto lo_p = pattern();
      x = saved;
      if (hi_p != lo_p) {
        ++skipped;
        return;
      }
      const double numeric = (hi - lo) / (2 * kStep);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
      ++checked;
    };
    for (std::size_t slot = 0; slot < net.modules().size(); ++slot) {
      auto& rm = net.modules()[slot];
      const auto& mg = grads.modules[slot];
      for (auto [mlp, gs] : {std::pair{&rm.g(), &mg.g}, std::pair{&rm.h(), &mg.h}}) {
        for (std::size_t li = 0; li < mlp->depth(); ++li) {
          auto w = mlp->layer(li).weights();
          for (std::size_t i = 0; i < w.size(); ++i) probe(w[i], gs->layers[li].weights[i]);
          auto b = mlp->layer(li).bias();
          for (std::size_t i = 0; i < b.size(); ++i) probe(b[i], gs->layers[li].bias[i]);
        }
      }
    }
    auto fv = frames.values();
    const auto gv = grads.frames.values();
    for (std::size_t i = 0; i < fv.size(); ++i) probe(fv[i], gv[i]);
  }
  const bool ok = worst < 1e-4 && checked > 0;
  std::printf("grad-check: %zu trials, %zu entries checked, %zu skipped at ReLU kinks\n", o.trials, checked,
              skipped);
  std::printf("max relative error %.3e (%s)\n", worst, ok ? "ok" : "FAILED");
  Json j{{"trials", o.trials}, {"checked", checked}, {"skipped", skipped}, {"max_relative_error", worst}, {"ok", ok}};
  trn::report::write_jsonl(join(fs::path(o.out_dir), "gradcheck.jsonl"), {j});
  return ok ? kOk : kNumeric;
}

template <std::floating_point S>
int dispatch_model(const std::string& cmd, const Options& o) {
  if (cmd == "train") return cmd_train<S>(o);
  if (cmd == "eval") return cmd_eval<S>(o);
  if (cmd == "stream") return cmd_stream<S>(o);
  if (cmd == "analyze") return cmd_analyze<S>(o);
  return cmd_compare<S>(o);
}

/// Checks everything that can be checked without touching the disk.
void validate(const std::string& cmd, const Options& o) {
  trn::parse_pooling(o.pooling);
  trn::parse_frame_order(o.frame_order);
  if ((cmd == "gen-data") || ((cmd == "train" || cmd == "compare-pool") && o.data.empty())) resolve_spec(o);
  if (cmd == "train" || cmd == "compare-pool") resolve_train(o);
  if (cmd == "eval" || cmd == "stream" || cmd == "analyze") {
    if (o.model.empty()) throw trn::InvalidInput("--model is required for " + cmd);
    if (o.data.empty() && o.val.empty()) throw trn::InvalidInput("--data or --val is required for " + cmd);
  }
  if (o.out_dir.empty()) throw trn::InvalidInput("--out-dir must not be empty");
  if (cmd != "gen-data" && cmd != "grad-check") {
    for (const auto* path : {&o.model, &o.data, &o.val}) {
      if (!path->empty() && !fs::exists(*path)) throw trn::IoError("input file " + *path + " does not exist");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal relation networks over per-frame features", "trn"};
  app.set_config("--config", "", "Key-value run configuration; flags override its values");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);
  Options o;
  add_options(app, o);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-data", "Write synthetic train/val TRNF files"},
      {"train", "Train a model and save a checkpoint"},
      {"eval", "Evaluate a checkpoint"},
      {"stream", "Replay TRNF videos through a streaming queue"},
      {"analyze", "Representative tuples, alignment, early recognition, order deltas, embeddings"},
      {"grad-check", "Finite-difference gradient check on a tiny model"},
      {"compare-pool", "Train temporal-relation and average-pool models over a frame-count grid"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    validate(cmd, o);
    fs::create_directories(o.out_dir);
    write_manifest(app, cmd, o);
    if (cmd == "gen-data") return cmd_gen_data(o);
    if (cmd == "grad-check") return cmd_grad_check(o);
    return o.precision == 64 ? dispatch_model<double>(cmd, o) : dispatch_model<float>(cmd, o);
  } catch (const trn::DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const trn::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const trn::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const trn::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}

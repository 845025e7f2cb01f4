#pragma once

// Synthetic ordered-motif videos and the TRNF frame-feature file format.
//
// Every class is a list of L motifs. A video places those motifs, in list
// order, as non-overlapping runs of `motif_dwell` frames starting at sorted
// random positions; leftover frames hold a distractor motif (with probability
// distractor_rate) or isotropic noise, and every frame gets Gaussian noise.
// In the order-sensitive regime all classes share one motif multiset and
// differ only in order, so nothing order-invariant can separate them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trn/binary_io.hpp"
#include "trn/error.hpp"
#include "trn/frames.hpp"
#include "trn/rng.hpp"
#include "trn/sampling.hpp"

namespace trn {

struct VideoSample {
  std::uint32_t label = 0;
  FrameMatrix<float> frames;

  bool operator==(const VideoSample&) const = default;
};

struct Dataset {
  std::size_t feature_dim = 0;
  std::size_t classes = 0;
  std::vector<VideoSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  bool operator==(const Dataset&) const = default;
};

struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t motif_count = 8;
  std::size_t feature_dim = 16;
  std::size_t frames_per_video = 32;
  std::size_t motifs_per_class = 4;
  std::size_t motif_dwell = 6;        // frames each placed motif occupies
  std::size_t distractor_motifs = 4;  // the last ids, never part of a class
  double noise_sigma = 0.25;
  double distractor_rate = 0.5;
  std::vector<std::pair<std::size_t, std::size_t>> reversal_pairs;
  bool order_sensitive = true;

  void validate() const {
    const auto fail = [](const std::string& m) { throw InvalidInput("synthetic spec: " + m); };
    if (num_classes < 2) fail("need at least two classes");
    if (feature_dim == 0) fail("feature_dim must be positive");
    if (motifs_per_class == 0) fail("motifs_per_class must be positive");
    if (motif_dwell == 0) fail("motif_dwell must be positive");
    if (motifs_per_class > frames_per_video) fail("more motifs per class than frames");
    if (motifs_per_class * motif_dwell > frames_per_video) fail("motif runs do not fit in the video");
    if (distractor_motifs >= motif_count) fail("no motifs left for classes");
    const std::size_t class_motifs = motif_count - distractor_motifs;
    if (motifs_per_class > class_motifs) fail("more motifs per class than class motifs");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
    if (!(distractor_rate >= 0.0 && distractor_rate <= 1.0)) fail("distractor_rate must be in [0, 1]");
    if (distractor_rate > 0.0 && distractor_motifs == 0) fail("distractors need distractor motifs");
    if (order_sensitive) {
      double perms = 1;
      for (std::size_t i = 2; i <= motifs_per_class; ++i) perms *= static_cast<double>(i);
      if (perms < static_cast<double>(num_classes)) fail("not enough motif orders for every class");
    } else {
      if (!reversal_pairs.empty()) fail("reversal pairs require order_sensitive");
      if (binomial(class_motifs, motifs_per_class) < num_classes) fail("not enough motif subsets");
    }
    std::set<std::size_t> used;
    for (const auto& [a, b] : reversal_pairs) {
      if (a >= num_classes || b >= num_classes || a == b) fail("invalid reversal pair");
      if (!used.insert(a).second || !used.insert(b).second) fail("class in several reversal pairs");
    }
    if (order_sensitive && motifs_per_class < 2 && !reversal_pairs.empty()) {
      fail("reversal pairs need at least two motifs per class");
    }
  }
};

/// Every class is an order of the same four motifs; four reversal pairs.
inline SyntheticSpec order_critical_preset() {
  SyntheticSpec s;
  s.reversal_pairs = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  return s;
}

/// Classes differ by which motifs occur; order within a video is random.
inline SyntheticSpec order_free_preset() {
  SyntheticSpec s;
  s.motif_count = 36;
  s.order_sensitive = false;
  return s;
}

/// Ordered motif list of every class, and the unit motif vectors.
struct MotifBank {
  std::vector<std::vector<std::size_t>> programs;
  FrameMatrix<double> motifs;
};

namespace detail {

inline constexpr std::uint64_t kBankStream = 0x6d6f74696673ull;
inline constexpr std::size_t kMaxProgramDraws = 100000;

}  // namespace detail

inline MotifBank make_motif_bank(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto rng = seeded_rng(seed, detail::kBankStream);
  MotifBank bank;
  bank.motifs = FrameMatrix<double>(spec.motif_count, spec.feature_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t m = 0; m < spec.motif_count; ++m) {
    auto row = bank.motifs.row(m);
    double norm = 0;
    do {
      norm = 0;
      for (auto& v : row) {
        v = normal(rng);
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& v : row) v /= norm;
  }

  const std::size_t L = spec.motifs_per_class;
  bank.programs.assign(spec.num_classes, {});
  std::set<std::vector<std::size_t>> taken;
  std::set<std::size_t> assigned;
  auto draw = [&](auto&& accept) {
    for (std::size_t attempt = 0; attempt < detail::kMaxProgramDraws; ++attempt) {
      std::vector<std::size_t> p;
      if (spec.order_sensitive) {
        p.resize(L);
        std::iota(p.begin(), p.end(), std::size_t{0});
        std::shuffle(p.begin(), p.end(), rng);
      } else {
        // Disjoint motif sets while the pool lasts, then any unused subset.
        std::vector<std::size_t> pool;
        for (std::size_t m = 0; m < spec.motif_count - spec.distractor_motifs; ++m) {
          if (!assigned.count(m)) pool.push_back(m);
        }
        if (pool.size() < L) {
          pool.resize(spec.motif_count - spec.distractor_motifs);
          std::iota(pool.begin(), pool.end(), std::size_t{0});
        }
        std::sample(pool.begin(), pool.end(), std::back_inserter(p), L, rng);
      }
      if (!taken.count(p) && accept(p)) return p;
    }
    throw InvalidInput("synthetic spec: could not assign distinct class programs");
  };

  for (const auto& [a, b] : spec.reversal_pairs) {
    auto p = draw([&](const std::vector<std::size_t>& c) {
      auto r = c;
      std::reverse(r.begin(), r.end());
      return r != c && !taken.count(r);
    });
    auto r = p;
    std::reverse(r.begin(), r.end());
    taken.insert(p);
    taken.insert(r);
    bank.programs[a] = std::move(p);
    bank.programs[b] = std::move(r);
  }
  for (auto& prog : bank.programs) {
    if (!prog.empty()) continue;
    prog = draw([](const std::vector<std::size_t>&) { return true; });
    taken.insert(prog);
    assigned.insert(prog.begin(), prog.end());
  }
  return bank;
}

/// A generated video plus the motif shown in each frame (-1 for pure noise).
struct GeneratedSample {
  VideoSample sample;
  std::vector<int> frame_motifs;
};

template <class Rng>
GeneratedSample generate_sample(const SyntheticSpec& spec, const MotifBank& bank,
                                std::uint32_t label, Rng& rng) {
  if (label >= spec.num_classes) throw InvalidInput("label out of range");
  const std::size_t n = spec.frames_per_video;
  const std::size_t D = spec.feature_dim;
  const std::size_t L = spec.motifs_per_class;

  auto order = bank.programs[label];
  if (!spec.order_sensitive) std::shuffle(order.begin(), order.end(), rng);

  // Sorted offsets in [0, slack] spread the runs without overlap.
  const std::size_t slack = n - L * spec.motif_dwell;
  std::uniform_int_distribution<std::size_t> offset(0, slack);
  std::vector<std::size_t> starts(L);
  for (auto& s : starts) s = offset(rng);
  std::sort(starts.begin(), starts.end());

  GeneratedSample out;
  out.frame_motifs.assign(n, -1);
  std::vector<bool> filled(n, false);
  for (std::size_t j = 0; j < L; ++j) {
    const std::size_t begin = starts[j] + j * spec.motif_dwell;
    for (std::size_t t = begin; t < begin + spec.motif_dwell; ++t) {
      out.frame_motifs[t] = static_cast<int>(order[j]);
      filled[t] = true;
    }
  }

  std::vector<std::size_t> distractors;
  for (std::size_t m = spec.motif_count - spec.distractor_motifs; m < spec.motif_count; ++m) {
    distractors.push_back(m);
  }
  std::bernoulli_distribution is_distractor(spec.distractor_rate);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double iso = 1.0 / std::sqrt(static_cast<double>(D));

  out.sample.label = label;
  out.sample.frames = FrameMatrix<float>(n, D);
  std::vector<double> value(D);
  for (std::size_t t = 0; t < n; ++t) {
    if (!filled[t] && !distractors.empty() && is_distractor(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, distractors.size() - 1);
      out.frame_motifs[t] = static_cast<int>(distractors[pick(rng)]);
    }
    if (out.frame_motifs[t] >= 0) {
      const auto m = bank.motifs.row(static_cast<std::size_t>(out.frame_motifs[t]));
      std::copy(m.begin(), m.end(), value.begin());
    } else {
      for (auto& v : value) v = iso * normal(rng);
    }
    if (spec.noise_sigma > 0.0) {
      for (auto& v : value) v += spec.noise_sigma * normal(rng);
    }
    auto row = out.sample.frames.row(t);
    for (std::size_t c = 0; c < D; ++c) row[c] = static_cast<float>(value[c]);
  }
  return out;
}

struct GeneratedData {
  Dataset train;
  Dataset val;
};

/// Class-balanced splits, labels interleaved; a pure function of (spec, seed, counts).
inline GeneratedData generate_dataset(const SyntheticSpec& spec, std::uint64_t seed,
                                      std::size_t train_per_class, std::size_t val_per_class) {
  const auto bank = make_motif_bank(spec, seed);
  auto build = [&](std::size_t per_class, std::uint64_t stream) {
    auto rng = seeded_rng(seed, stream);
    Dataset ds;
    ds.feature_dim = spec.feature_dim;
    ds.classes = spec.num_classes;
    ds.samples.reserve(per_class * spec.num_classes);
    for (std::size_t i = 0; i < per_class * spec.num_classes; ++i) {
      const auto label = static_cast<std::uint32_t>(i % spec.num_classes);
      ds.samples.push_back(generate_sample(spec, bank, label, rng).sample);
    }
    return ds;
  };
  return {build(train_per_class, 1), build(val_per_class, 2)};
}

/// Uniformly random frame permutation; label kept.
inline VideoSample shuffle_frames(const VideoSample& sample, std::uint64_t seed) {
  std::vector<std::size_t> order(sample.frames.frames());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return {sample.label, sample.frames.gather(std::span<const std::size_t>(order))};
}

/// The leading `count` frames.
inline VideoSample leading_frames(const VideoSample& sample, std::size_t count) {
  if (count == 0) throw InvalidInput("a video prefix needs at least one frame");
  count = std::min(count, sample.frames.frames());
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return {sample.label, sample.frames.gather(std::span<const std::size_t>(idx))};
}

/// Every frame repeated `factor` times, i.e. the video slowed down.
inline VideoSample repeat_frames(const VideoSample& sample, std::size_t factor) {
  if (factor == 0) throw InvalidInput("repeat factor must be positive");
  std::vector<std::size_t> idx;
  idx.reserve(sample.frames.frames() * factor);
  for (std::size_t t = 0; t < sample.frames.frames(); ++t) idx.insert(idx.end(), factor, t);
  return {sample.label, sample.frames.gather(std::span<const std::size_t>(idx))};
}

// TRNF: "TRNF", u32 version = 1, u32 sample count, then per sample
// u32 label, u32 n, u32 D and n*D f32 values; everything little-endian.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline std::vector<char> encode_features(const Dataset& ds) {
  binary::Writer w;
  w.bytes("TRNF");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  for (const auto& s : ds.samples) {
    if (s.frames.dim() != ds.feature_dim) throw InvalidInput("sample dimension differs from dataset");
    w.u32(s.label);
    w.u32(static_cast<std::uint32_t>(s.frames.frames()));
    w.u32(static_cast<std::uint32_t>(s.frames.dim()));
    for (float v : s.frames.values()) w.f32(v);
  }
  return w.data();
}

inline Dataset decode_features(std::vector<char> bytes) {
  binary::Reader r(std::move(bytes));
  r.expect_magic("TRNF");
  const std::size_t version_at = r.offset();
  if (const auto v = r.u32("version"); v != kFeatureFormatVersion) {
    throw FormatError("unsupported TRNF version " + std::to_string(v), version_at);
  }
  const std::uint32_t count = r.u32("sample count");
  Dataset ds;
  for (std::uint32_t i = 0; i < count; ++i) {
    VideoSample s;
    s.label = r.u32("label");
    const std::uint32_t n = r.u32("frame count");
    const std::size_t dim_at = r.offset();
    const std::uint32_t dim = r.u32("feature dimension");
    if (i == 0) {
      ds.feature_dim = dim;
    } else if (dim != ds.feature_dim) {
      throw FormatError("dimension mismatch: sample " + std::to_string(i) + " has D=" +
                            std::to_string(dim) + ", expected " + std::to_string(ds.feature_dim),
                        dim_at);
    }
    const std::uint64_t values = static_cast<std::uint64_t>(n) * dim;
    r.require_elements(values, 4, "frame payload");
    std::vector<float> payload(values);
    for (auto& v : payload) v = r.f32();
    s.frames = FrameMatrix<float>(n, dim, std::move(payload));
    ds.classes = std::max<std::size_t>(ds.classes, std::size_t{s.label} + 1);
    ds.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last sample", r.offset());
  return ds;
}

inline void write_features(const std::string& path, const Dataset& ds) {
  binary::write_file(path, encode_features(ds));
}

inline Dataset read_features(const std::string& path) {
  return decode_features(binary::read_file(path));
}

}  // namespace trn

#pragma once

// Test-only reference computations. Nothing here calls into the library's
// forward/backward code paths except where noted (finite differences
// deliberately reuse the forward pass they differentiate).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "trn/nn.hpp"
#include "trn/relation.hpp"

namespace trn::oracle {

/// y = act(W x + b) written out with nested vectors.
inline std::vector<double> affine(const std::vector<std::vector<double>>& w, const std::vector<double>& b,
                                  const std::vector<double>& x, bool relu) {
  std::vector<double> y(b.size());
  for (std::size_t o = 0; o < w.size(); ++o) {
    double acc = b[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[o][i] * x[i];
    y[o] = relu ? std::max(0.0, acc) : acc;
  }
  return y;
}

inline std::vector<std::vector<double>> rows_of(const DenseLayer<double>& l) {
  std::vector<std::vector<double>> w(l.out_dim(), std::vector<double>(l.in_dim()));
  for (std::size_t o = 0; o < l.out_dim(); ++o)
    for (std::size_t i = 0; i < l.in_dim(); ++i) w[o][i] = l.weight(o, i);
  return w;
}

inline std::vector<double> straight_line_mlp(const Mlp<double>& m, std::vector<double> x) {
  for (const auto& l : m.layers()) {
    const std::vector<double> b(l.bias().begin(), l.bias().end());
    x = affine(rows_of(l), b, x, l.activation() == Activation::relu);
  }
  return x;
}

/// g on every tuple separately, summed, then h; no use of the relation code.
inline std::vector<double> straight_line_relation(const RelationModule<double>& rm,
                                                  const FrameMatrix<double>& frames,
                                                  const std::vector<Tuple>& tuples, double weight = 1.0) {
  std::vector<double> sum(rm.hidden(), 0.0);
  for (const auto& t : tuples) {
    std::vector<double> x;
    for (std::size_t p : t) {
      const auto r = frames.row(p);
      x.insert(x.end(), r.begin(), r.end());
    }
    const auto g = straight_line_mlp(rm.g(), x);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
  }
  for (auto& v : sum) v *= weight;
  return straight_line_mlp(rm.h(), sum);
}

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of `objective` w.r.t. `value`. If `pattern` (e.g. the
/// ReLU on/off signature) differs between the two probes, the objective is
/// not differentiable across the step and nullopt is returned.
template <class Objective, class Pattern>
std::optional<double> central_difference(double& value, double step, Objective&& objective,
                                         Pattern&& pattern) {
  const double saved = value;
  value = saved + step;
  const double up = objective();
  const auto up_pattern = pattern();
  value = saved - step;
  const double down = objective();
  const auto down_pattern = pattern();
  value = saved;
  if (up_pattern != down_pattern) return std::nullopt;
  return (up - down) / (2 * step);
}

/// ReLU activation signature of an MLP at x.
inline std::vector<bool> relu_pattern(const Mlp<double>& m, std::span<const double> x) {
  const auto trace = mlp_forward_traced(m, x);
  std::vector<bool> p;
  for (const auto& o : trace.outputs)
    for (double v : o) p.push_back(v > 0);
  return p;
}

inline std::vector<bool> relu_pattern(const MultiScaleTrn<double>& trn, const FrameMatrix<double>& frames,
                                      const TupleSets& sets) {
  const auto tape = trace_multiscale(trn, frames, sets);
  std::vector<bool> p;
  for (const auto& s : tape.scales)
    for (const auto& t : s.g_traces)
      for (const auto& o : t.outputs)
        for (double v : o) p.push_back(v > 0);
  return p;
}

template <class Rng>
void randomize(Mlp<double>& m, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& l : m.layers()) {
    for (auto& w : l.weights()) w = u(rng);
    for (auto& b : l.bias()) b = u(rng);
  }
}

template <class Rng>
std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <class Rng>
FrameMatrix<double> random_frames(std::size_t n, std::size_t dim, Rng& rng) {
  FrameMatrix<double> f(n, dim);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : f.values()) v = g(rng);
  return f;
}

template <class Rng>
MultiScaleTrn<double> random_trn(std::size_t D, std::size_t H, std::size_t C, std::size_t N, Rng& rng,
                                 std::size_t k = 3) {
  MultiScaleTrn<double> trn(D, H, C, N, k);
  for (auto& rm : trn.modules()) {
    randomize(rm.g(), rng);
    randomize(rm.h(), rng);
  }
  return trn;
}

}  // namespace trn::oracle

#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "cage/common.hpp"

namespace cage::nn {

// Parameter block with a gradient accumulator of the same shape. Matrices are
// row-major; vectors are shaped rows x 1.
struct Tensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  std::vector<double> g;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0), g(r * c, 0.0) {}

  std::size_t size() const { return v.size(); }
  double* row(std::size_t i) { return v.data() + i * cols; }
  const double* row(std::size_t i) const { return v.data() + i * cols; }
  double* grad_row(std::size_t i) { return g.data() + i * cols; }

  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }

  void fill_uniform(Rng& rng, double scale) {
    for (auto& x : v) x = rng.uniform(-scale, scale);
  }
};

inline void check_finite(std::span<const double> xs, [[maybe_unused]] const char* what) {
#ifndef NDEBUG
  for ([[maybe_unused]] double x : xs) assert(std::isfinite(x) && what);
#else
  (void)xs;
#endif
}

// y = W^T x + b with W shaped in x out
inline void dense_forward(const Tensor& w, const Tensor& b, std::span<const double> x,
                          std::span<double> y) {
  if (x.size() != w.rows || y.size() != w.cols || b.size() != w.cols)
    throw Error("dense_forward: shape mismatch");
  for (std::size_t j = 0; j < w.cols; ++j) y[j] = b.v[j];
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w.row(i);
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += wr[j] * xi;
  }
  check_finite(y, "dense_forward output");
}

// Accumulates into w.g and b.g, writes the input gradient to dx.
inline void dense_backward(Tensor& w, Tensor& b, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dx) {
  if (x.size() != w.rows || dy.size() != w.cols || dx.size() != w.rows)
    throw Error("dense_backward: shape mismatch");
  for (std::size_t j = 0; j < w.cols; ++j) b.g[j] += dy[j];
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    double* gr = w.grad_row(i);
    const double* wr = w.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) {
      gr[j] += xi * dy[j];
      acc += wr[j] * dy[j];
    }
    dx[i] = acc;
  }
}

inline void relu(std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw Error("relu: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

// dx = dy where the pre-activation was positive, zero elsewhere (including at
// the kink itself)
inline void relu_backward(std::span<const double> x, std::span<const double> dy,
                          std::span<double> dx) {
  if (x.size() != dy.size() || x.size() != dx.size()) throw Error("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

inline std::span<const double> embedding_lookup(const Tensor& table, std::size_t index) {
  if (index >= table.rows) throw Error("embedding_lookup: index out of range");
  return {table.row(index), table.cols};
}

inline void embedding_backward(Tensor& table, std::size_t index, std::span<const double> dy) {
  if (index >= table.rows) throw Error("embedding_backward: index out of range");
  if (dy.size() != table.cols) throw Error("embedding_backward: shape mismatch");
  double* g = table.grad_row(index);
  for (std::size_t j = 0; j < table.cols; ++j) g[j] += dy[j];
}

// Elementwise mean of equal-length vectors. Summation runs left to right over
// the given order; callers that need bit-exact invariance to input order must
// canonicalize that order themselves.
inline void mean_pool(const std::vector<std::span<const double>>& xs, std::span<double> y) {
  if (xs.empty()) throw Error("mean_pool: no inputs");
  for (const auto& x : xs)
    if (x.size() != y.size()) throw Error("mean_pool: shape mismatch");
  std::fill(y.begin(), y.end(), 0.0);
  for (const auto& x : xs)
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[j];
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (std::size_t j = 0; j < y.size(); ++j) y[j] *= inv;
}

// Every pooled input receives the same gradient dy / n.
inline void mean_pool_backward(std::size_t n_inputs, std::span<const double> dy,
                               std::span<double> dx_each) {
  if (n_inputs == 0) throw Error("mean_pool_backward: no inputs");
  if (dy.size() != dx_each.size()) throw Error("mean_pool_backward: shape mismatch");
  const double inv = 1.0 / static_cast<double>(n_inputs);
  for (std::size_t j = 0; j < dy.size(); ++j) dx_each[j] = dy[j] * inv;
}

// Stabilized softmax + negative log likelihood. Returns the loss and fills
// probs; the logit gradient is probs - onehot(label), applied by the caller.
inline double softmax_cross_entropy(std::span<const double> logits, std::size_t label,
                                    std::span<double> probs) {
  if (logits.empty() || logits.size() != probs.size())
    throw Error("softmax_cross_entropy: shape mismatch");
  if (label >= logits.size()) throw Error("softmax_cross_entropy: label out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] *= inv;
  const double loss = -(logits[label] - mx - std::log(sum));
  check_finite(probs, "softmax probabilities");
  assert(std::isfinite(loss) && "softmax loss");
  return loss;
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers aligned one-to-one with a parameter list.
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor*>& params) {
    t = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor* p : params) {
      m.emplace_back(p->size(), 0.0);
      v.emplace_back(p->size(), 0.0);
    }
  }
};

// One bias-corrected update from the accumulated gradients; gradients are
// zeroed afterwards so accumulation starts fresh each step.
inline void adam_step(const std::vector<Tensor*>& params, AdamState& s) {
  if (s.m.size() != params.size() || s.v.size() != params.size())
    throw Error("adam_step: state does not match parameter list");
  if (s.t == std::numeric_limits<std::uint64_t>::max()) throw Error("adam_step: step count overflow");
  ++s.t;
  const double bc1 = 1.0 - std::pow(s.hyper.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.hyper.beta2, static_cast<double>(s.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    auto& m = s.m[pi];
    auto& v = s.v[pi];
    if (m.size() != p.size()) throw Error("adam_step: moment shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.g[k];
      m[k] = s.hyper.beta1 * m[k] + (1.0 - s.hyper.beta1) * g;
      v[k] = s.hyper.beta2 * v[k] + (1.0 - s.hyper.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.v[k] -= s.hyper.lr * mhat / (std::sqrt(vhat) + s.hyper.eps);
      assert(std::isfinite(p.v[k]) && "adam parameter update");
    }
    p.zero_grad();
  }
}

}  // namespace cage::nn

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "cage/numerics.hpp"

using cage::Rng;
using namespace cage::nn;

namespace {

// central finite difference of a scalar function of one tensor entry
template <class F>
double fd(Tensor& t, std::size_t k, F loss, double h = 1e-6) {
  const double saved = t.v[k];
  t.v[k] = saved + h;
  const double up = loss();
  t.v[k] = saved - h;
  const double down = loss();
  t.v[k] = saved;
  return (up - down) / (2.0 * h);
}

double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max(1.0, std::fabs(analytic) + std::fabs(numeric));
}

}  // namespace

TEST(DenseOp, ForwardMatchesHandComputation) {
  Tensor w(2, 3), b(3, 1);
  // w maps input i to output j at w(i, j)
  w.v = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  b.v = {0.5, -0.5, 1.0};
  std::vector<double> x = {2.0, -1.0}, y(3);
  dense_forward(w, b, x, y);
  EXPECT_DOUBLE_EQ(y[0], 1.0 * 2.0 + 4.0 * -1.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], 2.0 * 2.0 + 5.0 * -1.0 - 0.5);
  EXPECT_DOUBLE_EQ(y[2], 3.0 * 2.0 + 6.0 * -1.0 + 1.0);
}

TEST(DenseOp, ShapeMismatchThrows) {
  Tensor w(2, 3), b(3, 1);
  std::vector<double> x(3), y(3);
  EXPECT_THROW(dense_forward(w, b, x, y), cage::Error);
  std::vector<double> x2(2), y2(2);
  EXPECT_THROW(dense_forward(w, b, x2, y2), cage::Error);
}

TEST(DenseOp, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.index(6), out = 1 + rng.index(5);
    Tensor w(in, out), b(out, 1);
    w.fill_uniform(rng, 1.0);
    b.fill_uniform(rng, 1.0);
    std::vector<double> x(in), c(out);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : c) v = rng.uniform(-1.0, 1.0);

    // scalar probe loss: c . (W^T x + b)
    auto loss = [&] {
      std::vector<double> y(out);
      dense_forward(w, b, x, y);
      double s = 0.0;
      for (std::size_t j = 0; j < out; ++j) s += c[j] * y[j];
      return s;
    };

    std::vector<double> y(out), dx(in);
    dense_forward(w, b, x, y);
    dense_backward(w, b, x, c, dx);

    for (std::size_t k = 0; k < w.size(); ++k)
      EXPECT_LT(rel_err(w.g[k], fd(w, k, loss)), 1e-6);
    for (std::size_t k = 0; k < b.size(); ++k)
      EXPECT_LT(rel_err(b.g[k], fd(b, k, loss)), 1e-6);
    // input gradient via a temporary tensor holding x
    Tensor xt(in, 1);
    xt.v = x;
    auto loss_x = [&] {
      std::vector<double> yy(out);
      dense_forward(w, b, xt.v, yy);
      double s = 0.0;
      for (std::size_t j = 0; j < out; ++j) s += c[j] * yy[j];
      return s;
    };
    for (std::size_t k = 0; k < in; ++k)
      EXPECT_LT(rel_err(dx[k], fd(xt, k, loss_x)), 1e-6);
  }
}

TEST(ReluOp, ForwardAndBackward) {
  std::vector<double> x = {-2.0, -1e-9, 0.0, 1e-9, 3.0};
  std::vector<double> y(5), dy = {1.0, 1.0, 1.0, 1.0, 2.0}, dx(5);
  relu(x, y);
  EXPECT_EQ(y, (std::vector<double>{0.0, 0.0, 0.0, 1e-9, 3.0}));
  relu_backward(x, dy, dx);
  EXPECT_EQ(dx, (std::vector<double>{0.0, 0.0, 0.0, 1.0, 2.0}));
}

TEST(EmbeddingOp, LookupAndScatter) {
  Tensor table(4, 3);
  for (std::size_t k = 0; k < table.size(); ++k) table.v[k] = static_cast<double>(k);
  const auto row = embedding_lookup(table, 2);
  EXPECT_EQ(row[0], 6.0);
  EXPECT_EQ(row[2], 8.0);
  EXPECT_THROW(embedding_lookup(table, 4), cage::Error);

  std::vector<double> dy = {1.0, 2.0, 3.0};
  embedding_backward(table, 2, dy);
  embedding_backward(table, 2, dy);  // accumulates
  EXPECT_DOUBLE_EQ(table.g[2 * 3 + 1], 4.0);
  EXPECT_DOUBLE_EQ(table.g[0], 0.0);
}

TEST(MeanPool, ForwardBackwardAndEmptyInput) {
  std::vector<double> a = {1.0, 2.0}, b = {3.0, 6.0}, y(2);
  mean_pool({std::span<const double>(a), std::span<const double>(b)}, y);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 4.0);

  std::vector<double> dy = {3.0, 9.0}, dx(2);
  mean_pool_backward(2, dy, dx);
  EXPECT_DOUBLE_EQ(dx[0], 1.5);
  EXPECT_DOUBLE_EQ(dx[1], 4.5);

  EXPECT_THROW(mean_pool({}, y), cage::Error);
  EXPECT_THROW(mean_pool_backward(0, dy, dx), cage::Error);
}

TEST(Softmax, UniformLogitsGiveLogOfClassCount) {
  std::vector<double> logits = {0.7, 0.7, 0.7}, probs(3);
  const double loss = softmax_cross_entropy(logits, 1, probs);
  EXPECT_NEAR(loss, std::log(3.0), 1e-15);
  for (double p : probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, StableUnderLargeLogits) {
  std::vector<double> logits = {1000.0, 999.0, -1000.0}, probs(3);
  const double loss = softmax_cross_entropy(logits, 0, probs);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(probs[0] + probs[1] + probs[2], 1.0, 1e-12);
  EXPECT_GT(probs[0], probs[1]);
  EXPECT_EQ(probs[2], 0.0);
}

TEST(Softmax, GradientIsProbsMinusOnehot) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits(3, 1);
    logits.fill_uniform(rng, 2.0);
    const std::size_t label = rng.index(3);
    auto loss = [&] {
      std::vector<double> p(3);
      return softmax_cross_entropy(logits.v, label, p);
    };
    std::vector<double> probs(3);
    softmax_cross_entropy(logits.v, label, probs);
    for (std::size_t k = 0; k < 3; ++k) {
      const double analytic = probs[k] - (k == label ? 1.0 : 0.0);
      EXPECT_LT(rel_err(analytic, fd(logits, k, loss)), 1e-6);
    }
  }
}

TEST(Adam, FirstStepHandDerived) {
  // one parameter at 0.5 with gradient 2.0 and default hyperparameters:
  // m-hat = g, v-hat = g^2, update = lr * g / (|g| + eps) ~= lr
  Tensor p(1, 1);
  p.v[0] = 0.5;
  p.g[0] = 2.0;
  std::vector<Tensor*> params = {&p};
  AdamState s;
  s.init(params);
  adam_step(params, s);
  EXPECT_NEAR(p.v[0], 0.5 - 1e-3 * (2.0 / (2.0 + 1e-8)), 1e-15);
  EXPECT_EQ(s.t, 1u);
  EXPECT_EQ(p.g[0], 0.0) << "gradients must be cleared after the step";
}

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  // independent scalar implementation, kept deliberately verbose
  double ref = 0.3, m = 0.0, v = 0.0;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  Tensor p(1, 1);
  p.v[0] = 0.3;
  std::vector<Tensor*> params = {&p};
  AdamState s;
  s.init(params);

  Rng rng(99);
  for (int t = 1; t <= 200; ++t) {
    const double g = rng.uniform(-2.0, 2.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    ref -= lr * mhat / (std::sqrt(vhat) + eps);

    p.g[0] = g;
    adam_step(params, s);
    ASSERT_DOUBLE_EQ(p.v[0], ref) << "diverged at step " << t;
  }
}

TEST(Adam, StateMismatchThrows) {
  Tensor p(2, 2), q(2, 2);
  std::vector<Tensor*> params = {&p};
  AdamState s;
  s.init(params);
  std::vector<Tensor*> both = {&p, &q};
  EXPECT_THROW(adam_step(both, s), cage::Error);
}

TEST(RngStream, DeterministicAndPlatformPinned) {
  // the engine is fully specified by the standard; this is the documented
  // 10000th output of a default-seeded mt19937_64
  std::mt19937_64 reference(5489u);
  for (int i = 0; i < 9999; ++i) reference();
  EXPECT_EQ(reference(), 9981545732273789042ULL);

  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  const double d = Rng(7).next_double();
  EXPECT_GE(d, 0.0);
  EXPECT_LT(d, 1.0);
}

TEST(RngStream, IndexIsInRangeAndShuffleIsAPermutation) {
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.index(7), 7u);
  EXPECT_THROW(rng.index(0), cage::Error);

  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r1(9), r2(9);
  auto v1 = v, v2 = v;
  r1.shuffle(v1);
  r2.shuffle(v2);
  EXPECT_EQ(v1, v2);
  EXPECT_NE(v1, v);
  std::sort(v1.begin(), v1.end());
  EXPECT_EQ(v1, v);
}

TEST(SeedMixing, StreamsDiffer) {
  EXPECT_NE(cage::mix_seed(1, 0), cage::mix_seed(1, 1));
  EXPECT_NE(cage::mix_seed(1, 0), cage::mix_seed(2, 0));
  EXPECT_EQ(cage::mix_seed(5, 3), cage::mix_seed(5, 3));
}

TEST(Formatting, NineDigitQuantizationRoundTrips) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-0.3, 0.3);
    const double q = cage::quantize_g9(v);
    EXPECT_EQ(cage::format_g9(q), cage::format_g9(cage::quantize_g9(q)));
    EXPECT_NEAR(q, v, 1e-9 + std::fabs(v) * 1e-8);
  }
  EXPECT_EQ(cage::format_g17(0.001), "0.001");
}

// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "forge/conv.hpp"
#include "forge/csr.hpp"
#include "forge/error.hpp"
#include "forge/grad_check.hpp"
#include "forge/mask.hpp"
#include "forge/ops.hpp"
#include "forge/optim.hpp"
#include "support.hpp"

namespace forge::tensor {
namespace {

using testing::Gen;

std::vector<double> values(Tape<double>& tape, Var v) {
  auto s = tape.value(v);
  return {s.begin(), s.end()};
}

std::vector<std::uint8_t> random_bitmap(Gen& g, std::size_t n, double sparsity) {
  const auto m = mask::init_mask({n}, sparsity, g.rng().next_u64());
  return {m.bitmap().begin(), m.bitmap().end()};
}

// ---------------------------------------------------------------- matmul

TEST(Matmul, IdentityAndScalar) {
  Tape<double> tape;
  Var a = tape.constant({2, 2}, {1, 2, 3, 4});
  Var eye = tape.constant({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(values(tape, matmul(tape, a, eye)), (std::vector<double>{1, 2, 3, 4}));
  Var x = tape.constant({1, 1}, {2});
  Var y = tape.constant({1, 1}, {3});
  EXPECT_EQ(values(tape, matmul(tape, x, y)), std::vector<double>{6});
}

TEST(Matmul, ShapeMismatch) {
  Tape<double> tape;
  Var a = tape.constant({2, 3}, std::vector<double>(6, 1.0));
  Var b = tape.constant({2, 3}, std::vector<double>(6, 1.0));
  EXPECT_THROW(matmul(tape, a, b), ShapeError);
}

TEST(Matmul, GradientMatchesCentralDifferences) {
  Gen g(1);
  const auto report = grad_check(
      [](Tape<double>& t, const std::vector<Var>& p) {
        return sum_squares(t, matmul(t, p[0], p[1]));
      },
      {{{5, 7}, g.normals(35)}, {{7, 3}, g.normals(21)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
  EXPECT_TRUE(report.pass);
}

// ----------------------------------------------------------- masked linear

TEST(MaskedLinear, AllActiveEqualsMatmul) {
  Gen g(2);
  Tape<double> tape;
  Var x = tape.constant({3, 4}, g.normals(12));
  Var w = tape.constant({4, 5}, g.normals(20));
  const std::vector<std::uint8_t> ones(20, 1);
  EXPECT_EQ(values(tape, masked_linear(tape, x, w, std::span<const std::uint8_t>(ones))),
            values(tape, matmul(tape, x, w)));
}

TEST(MaskedLinear, AllInactiveLeavesBias) {
  Gen g(3);
  Tape<double> tape;
  Var x = tape.constant({2, 3}, g.normals(6));
  Var w = tape.constant({3, 2}, g.normals(6));
  Var b = tape.constant({2}, {0.5, -1.5});
  const std::vector<std::uint8_t> zeros(6, 0);
  EXPECT_EQ(values(tape, masked_linear(tape, x, w, std::span<const std::uint8_t>(zeros), b)),
            (std::vector<double>{0.5, -1.5, 0.5, -1.5}));
  EXPECT_EQ(tape.macs(), 0u);
}

TEST(MaskedLinear, InactiveGradientIsZeroUnlessDenseRequested) {
  Gen g(4);
  const auto bits = random_bitmap(g, 12, 0.5);
  const auto xv = g.normals(8), wv = g.normals(12);
  for (auto mode : {WeightGrad::masked, WeightGrad::dense}) {
    Tape<double> tape;
    Var x = tape.constant({2, 4}, xv);
    Var w = tape.variable({4, 3}, wv);
    tape.backward(sum_squares(tape, masked_linear(tape, x, w, std::span<const std::uint8_t>(bits),
                                                  {}, mode)));
    const auto grad = tape.grad(w);
    bool any_inactive_nonzero = false;
    for (std::size_t i = 0; i < 12; ++i) {
      if (!bits[i] && grad[i] != 0.0) any_inactive_nonzero = true;
    }
    EXPECT_EQ(any_inactive_nonzero, mode == WeightGrad::dense);
  }
}

TEST(MaskedLinear, GradientCheck) {
  Gen g(5);
  const auto bits = random_bitmap(g, 24, 0.6);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        return sum_squares(t, masked_linear(t, p[0], p[1], std::span<const std::uint8_t>(bits), p[2]));
      },
      {{{3, 6}, g.normals(18)}, {{6, 4}, g.normals(24)}, {{4}, g.normals(4)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
  for (std::size_t i = 0; i < 24; ++i) {
    if (!bits[i]) {
      EXPECT_EQ(report.analytic[1][i], 0.0);
    }
  }
}

// -------------------------------------------------------------- compressed

TEST(Csr, EmptyPatternGivesZerosAndNoMacs) {
  const std::vector<std::uint8_t> zeros(12, 0);
  const auto pattern = CsrPattern::from_bitmap(zeros, 4, 3);
  const std::vector<double> dense(12, 2.0);
  const auto w = CompressedRows<double>::gather(pattern, dense);
  std::uint64_t macs = 0;
  const std::vector<double> x(8, 1.0);
  const auto out = csr_matmul<double>(x, 2, w, &macs);
  EXPECT_EQ(out, std::vector<double>(6, 0.0));
  EXPECT_EQ(macs, 0u);
}

TEST(Csr, DenseEquivalentEqualsMatmul) {
  Gen g(6);
  const std::vector<std::uint8_t> ones(35, 1);
  const auto wv = g.normals(35), xv = g.normals(15);
  const auto w = CompressedRows<double>::gather(CsrPattern::from_bitmap(ones, 5, 7), wv);
  const auto out = csr_matmul<double>(xv, 3, w);
  EXPECT_LE(testing::max_rel_diff(out, testing::naive_masked_product(xv, wv, {}, 3, 5, 7)), 1e-14);
}

TEST(Csr, MacCounterAtNinetyPercent) {
  Gen g(7);
  const std::size_t active = 1639;  // ceil(0.1 * 16384)
  const auto m = mask::init_mask_with_count({128, 128}, active, 42);
  const auto pattern = CsrPattern::from_sorted_indices(m.active(), 128, 128);
  const auto w = CompressedRows<double>::gather(pattern, g.normals(16384));
  std::uint64_t macs = 0;
  csr_matmul<double>(g.normals(64 * 128), 64, w, &macs);
  EXPECT_EQ(macs, 64u * 1639u);
}

TEST(Csr, MalformedPatternsRejected) {
  CsrPattern p;
  p.rows = 2;
  p.cols = 3;
  p.offsets = {0, 2, 1};
  p.indices = {0};
  EXPECT_THROW(p.validate(), FormatError);
  p.offsets = {0, 2, 2};
  p.indices = {1, 1};
  EXPECT_THROW(p.validate(), FormatError);
  p.indices = {0, 3};
  EXPECT_THROW(p.validate(), FormatError);
  p.offsets = {1, 2, 2};
  p.indices = {0, 1};
  EXPECT_THROW(p.validate(), FormatError);
}

TEST(Csr, OracleEquivalenceRandomCases) {
  Gen g(8);
  for (int t = 0; t < 200; ++t) {
    const auto m = static_cast<std::size_t>(g.integer(1, 16));
    const auto k = static_cast<std::size_t>(g.integer(1, 40));
    const auto n = static_cast<std::size_t>(g.integer(1, 40));
    const auto bits = random_bitmap(g, k * n, g.uniform(0.0, 0.99));
    const auto xv = g.normals(m * k), wv = g.normals(k * n);
    Tape<double> tape;
    Var x = tape.constant({m, k}, xv);
    Var w = tape.variable({k, n}, wv);
    const auto pattern = std::make_shared<const CsrPattern>(CsrPattern::from_bitmap(bits, k, n));
    const auto masked = values(tape, masked_linear(tape, x, w, std::span<const std::uint8_t>(bits)));
    const auto compressed = values(tape, csr_linear(tape, x, w, pattern));
    const auto oracle = testing::naive_masked_product(xv, wv, bits, m, k, n);
    EXPECT_LE(testing::max_rel_diff(compressed, masked), 1e-10);
    EXPECT_LE(testing::max_rel_diff(masked, oracle), 1e-10);
    EXPECT_EQ(tape.macs(), 2 * m * pattern->nnz());
  }
}

TEST(Csr, BackwardMatchesMaskedPath) {
  Gen g(9);
  const auto bits = random_bitmap(g, 30, 0.7);
  const auto xv = g.normals(12), wv = g.normals(30);
  auto run = [&](bool compressed) {
    Tape<double> tape;
    Var x = tape.variable({2, 6}, xv);
    Var w = tape.variable({6, 5}, wv);
    Var y = compressed ? csr_linear(tape, x, w,
                                    std::make_shared<const CsrPattern>(CsrPattern::from_bitmap(bits, 6, 5)))
                       : masked_linear(tape, x, w, std::span<const std::uint8_t>(bits));
    tape.backward(sum_squares(tape, y));
    auto gx = tape.grad(x);
    auto gw = tape.grad(w);
    std::vector<double> out(gx.begin(), gx.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  EXPECT_LE(testing::max_rel_diff(run(true), run(false)), 1e-12);
}

// -------------------------------------------------------------------- conv

TEST(Conv, PointwiseIdentityPassesThrough) {
  Gen g(10);
  Tape<double> tape;
  const auto xv = g.normals(2 * 3 * 4 * 4);
  Var x = tape.constant({2, 3, 4, 4}, xv);
  Var w = tape.constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(values(tape, conv2d(tape, x, w, ConvGeometry{1, 1, 1, 0})), xv);
}

TEST(Conv, AllOnesKernelSumsWindow) {
  Tape<double> tape;
  const std::size_t c_in = 2;
  Var x = tape.constant({1, c_in, 5, 5}, std::vector<double>(c_in * 25, 1.5));
  Var w = tape.constant({c_in * 9, 1}, std::vector<double>(c_in * 9, 1.0));
  const auto out = values(tape, conv2d(tape, x, w, ConvGeometry{3, 3, 1, 0}));
  ASSERT_EQ(out.size(), 9u);
  for (double v : out) EXPECT_DOUBLE_EQ(v, 1.5 * 9 * c_in);
  EXPECT_EQ(tape.macs(), 9u * c_in * 9u);
}

TEST(Conv, GradientCheckWithPaddingAndStride) {
  Gen g(11);
  const auto bits = random_bitmap(g, 2 * 9 * 3, 0.4);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        return sum_squares(t, conv2d(t, p[0], p[1], ConvGeometry{3, 3, 2, 1},
                                     std::span<const std::uint8_t>(bits), p[2]));
      },
      {{{2, 2, 5, 5}, g.normals(100)}, {{18, 3}, g.normals(54)}, {{3}, g.normals(3)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
}

TEST(Conv, CompressedMatchesMasked) {
  Gen g(12);
  for (int t = 0; t < 20; ++t) {
    const std::size_t c = static_cast<std::size_t>(g.integer(1, 4));
    const std::size_t co = static_cast<std::size_t>(g.integer(1, 5));
    const std::size_t k = static_cast<std::size_t>(g.pick(std::vector<int>{1, 3}));
    const ConvGeometry geo{k, k, static_cast<std::size_t>(g.integer(1, 2)), k / 2};
    const auto bits = random_bitmap(g, c * k * k * co, g.uniform(0.0, 0.95));
    Tape<double> tape;
    Var x = tape.constant({2, c, 6, 6}, g.normals(2 * c * 36));
    Var w = tape.variable({c * k * k, co}, g.normals(c * k * k * co));
    const auto a = values(tape, conv2d(tape, x, w, geo, std::span<const std::uint8_t>(bits)));
    const auto b = values(tape, conv2d_csr(tape, x, w, geo,
                                           std::make_shared<const CsrPattern>(
                                               CsrPattern::from_bitmap(bits, c * k * k, co))));
    EXPECT_LE(testing::max_rel_diff(b, a), 1e-10);
  }
}

TEST(Conv, DepthwiseGradientAndMacs) {
  Gen g(13);
  const auto bits = random_bitmap(g, 3 * 9, 0.5);
  std::size_t active = 0;
  for (auto b : bits) active += b;
  Tape<double> tape;
  Var x = tape.constant({2, 3, 4, 4}, g.normals(96));
  Var w = tape.variable({3, 9}, g.normals(27));
  depthwise_conv2d(tape, x, w, ConvGeometry{3, 3, 1, 1}, std::span<const std::uint8_t>(bits));
  EXPECT_EQ(tape.macs(), 2u * 16u * active);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        return sum_squares(t, depthwise_conv2d(t, p[0], p[1], ConvGeometry{3, 3, 1, 1},
                                               std::span<const std::uint8_t>(bits), p[2]));
      },
      {{{2, 3, 4, 4}, g.normals(96)}, {{3, 9}, g.normals(27)}, {{3}, g.normals(3)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
}

TEST(Conv, WindowThatDoesNotFitIsRejected) {
  Tape<double> tape;
  Var x = tape.constant({1, 1, 2, 2}, std::vector<double>(4, 0.0));
  Var w = tape.constant({9, 1}, std::vector<double>(9, 0.0));
  EXPECT_THROW(conv2d(tape, x, w, ConvGeometry{3, 3, 1, 0}), ShapeError);
}

// --------------------------------------------------------------- batchnorm

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  Tape<double> tape;
  BatchNormState<double> state(2);
  Var x = tape.constant({4, 2}, std::vector<double>(8, 3.0));
  Var gamma = tape.constant({2}, {1, 1});
  Var beta = tape.constant({2}, {0, 0});
  for (double v : values(tape, batchnorm(tape, x, gamma, beta, state, Mode::train))) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(BatchNorm, StandardizesLargeBatch) {
  Gen g(14);
  const std::size_t n = 10000;
  std::vector<double> xv(n);
  for (auto& v : xv) v = 3.0 + 2.0 * g.normal();
  Tape<double> tape;
  BatchNormState<double> state(1);
  Var y = batchnorm(tape, tape.constant({n, 1}, xv), tape.constant({1}, {1}),
                    tape.constant({1}, {0}), state, Mode::train);
  double mean = 0.0, var = 0.0;
  for (double v : values(tape, y)) mean += v;
  mean /= n;
  for (double v : values(tape, y)) var += (v - mean) * (v - mean);
  var /= n;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(BatchNorm, EvalUsesFrozenStatistics) {
  BatchNormState<double> state(1);
  state.running_mean = {2.0};
  state.running_var = {4.0};
  auto run = [&](std::vector<double> batch) {
    Tape<double> tape;
    Var y = batchnorm(tape, tape.constant({batch.size(), 1}, batch), tape.constant({1}, {1}),
                      tape.constant({1}, {0}), state, Mode::eval);
    return tape.value(y)[0];
  };
  EXPECT_EQ(run({5.0, -100.0, 7.0}), run({5.0}));
  EXPECT_NEAR(run({4.0}), 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, TrainModeNeedsTwoSamples) {
  Tape<double> tape;
  BatchNormState<double> state(1);
  EXPECT_THROW(batchnorm(tape, tape.constant({1, 1}, {1.0}), tape.constant({1}, {1}),
                         tape.constant({1}, {0}), state, Mode::train),
               ValidationError);
}

TEST(BatchNorm, GradientCheck) {
  Gen g(15);
  BatchNormState<double> state(3);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        Var y = batchnorm(t, p[0], p[1], p[2], state, Mode::train);
        return sum_squares(t, matmul(t, y, t.constant({3, 1}, {0.3, -1.2, 0.7})));
      },
      {{{5, 3}, g.normals(15)}, {{3}, {1.0, 0.5, 2.0}}, {{3}, g.normals(3)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
}

// -------------------------------------------------------- relu and losses

TEST(Relu, ValuesAndSubgradientAtZero) {
  Tape<double> tape;
  Var x = tape.variable({1, 3}, {-1.0, 2.0, 0.0});
  Var y = relu(tape, x);
  EXPECT_EQ(values(tape, y), (std::vector<double>{0.0, 2.0, 0.0}));
  tape.backward(sum_squares(tape, add(tape, y, tape.constant({1, 3}, {1, 1, 1}))));
  EXPECT_EQ(tape.grad(x)[2], 0.0);
  EXPECT_EQ(tape.grad(x)[0], 0.0);
  EXPECT_EQ(tape.grad(x)[1], 6.0);
}

TEST(CrossEntropy, UniformLogits) {
  Tape<double> tape;
  const std::vector<std::int32_t> labels = {3, 7};
  Var loss = softmax_cross_entropy(tape, tape.constant({2, 10}, std::vector<double>(20, 0.25)),
                                   std::span<const std::int32_t>(labels));
  EXPECT_NEAR(tape.value(loss)[0], std::log(10.0), 1e-12);
  EXPECT_NEAR(tape.value(loss)[0], 2.302585, 1e-6);
}

TEST(CrossEntropy, LabelOutOfRange) {
  Tape<double> tape;
  const std::vector<std::int32_t> labels = {10};
  EXPECT_THROW(softmax_cross_entropy(tape, tape.constant({1, 10}, std::vector<double>(10, 0.0)),
                                     std::span<const std::int32_t>(labels)),
               ValidationError);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHotOverBatch) {
  Gen g(16);
  const std::vector<std::int32_t> labels = {0, 2, 1, 2};
  const auto logits = g.normals(12, 3.0);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        return softmax_cross_entropy(t, p[0], std::span<const std::int32_t>(labels));
      },
      {{{4, 3}, logits}});
  EXPECT_LE(report.max_rel_error, 1e-6);
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[r * 3 + c]);
    for (std::size_t c = 0; c < 3; ++c) {
      const double expect =
          (std::exp(logits[r * 3 + c]) / z - (labels[r] == static_cast<int>(c) ? 1.0 : 0.0)) / 4.0;
      EXPECT_NEAR(report.analytic[0][r * 3 + c], expect, 1e-12);
    }
  }
}

TEST(MseLoss, GradientCheck) {
  Gen g(17);
  const auto target = g.normals(6);
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        return mse_loss(t, p[0], std::span<const double>(target));
      },
      {{{2, 3}, g.normals(6)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
}

// ---------------------------------------------------------------- optimizer

TEST(Sgd, PlainStepWithoutMomentum) {
  std::vector<double> w = {1.0, -2.0}, v = {0.0, 0.0};
  const std::vector<double> g = {0.5, 0.25};
  sgd_step<double>(w, g, v, {0.1, 0.0, 0.0, true}, true);
  EXPECT_DOUBLE_EQ(w[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(w[1], -2.0 - 0.025);
}

TEST(Sgd, NesterovTwoStepHandTrace) {
  // v1 = 1, w1 = 1 - 0.1 (1 + 0.9) = 0.81
  // v2 = 0.9 + 1 = 1.9, w2 = 0.81 - 0.1 (1 + 0.9 * 1.9) = 0.539
  std::vector<double> w = {1.0}, v = {0.0};
  const std::vector<double> g = {1.0};
  const SgdConfig c{0.1, 0.9, 0.0, true};
  sgd_step<double>(w, g, v, c, true);
  EXPECT_NEAR(w[0], 0.81, 1e-15);
  sgd_step<double>(w, g, v, c, true);
  EXPECT_NEAR(w[0], 0.539, 1e-15);
  EXPECT_NEAR(v[0], 1.9, 1e-15);
}

TEST(Sgd, DecayOnlyWhenRequested) {
  std::vector<double> a = {1.0}, b = {1.0}, va = {0.0}, vb = {0.0};
  const std::vector<double> g = {0.0};
  const SgdConfig c{0.1, 0.0, 0.5, true};
  sgd_step<double>(a, g, va, c, true);
  sgd_step<double>(b, g, vb, c, false);
  EXPECT_DOUBLE_EQ(a[0], 0.95);
  EXPECT_DOUBLE_EQ(b[0], 1.0);
}

TEST(Sgd, InactivePositionsStayZero) {
  Gen g(18);
  const std::vector<std::uint8_t> mask = {1, 0, 1, 0};
  std::vector<double> w = {1.0, 0.0, -1.0, 0.0}, v(4, 0.0);
  for (int step = 0; step < 50; ++step) {
    const auto grad = g.normals(4);
    sgd_step<double>(w, grad, v, {0.1, 0.9, 5e-4, true}, true, mask);
    EXPECT_EQ(w[1], 0.0);
    EXPECT_EQ(w[3], 0.0);
    EXPECT_EQ(v[1], 0.0);
  }
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.1, 0.001), 0.1);
  EXPECT_DOUBLE_EQ(cosine_lr(100, 100, 0.1, 0.001), 0.001);
  EXPECT_NEAR(cosine_lr(50, 100, 0.1, 0.001), (0.1 + 0.001) / 2, 1e-15);
}

// -------------------------------------------------------------- grad check

TEST(GradCheck, QuadraticIsExact) {
  Gen g(19);
  const auto report = grad_check(
      [](Tape<double>& t, const std::vector<Var>& p) { return sum_squares(t, p[0]); },
      {{{6}, g.normals(6)}});
  EXPECT_LE(report.max_rel_error, 1e-9);
}

TEST(GradCheck, TwoLayerReluMlp) {
  Gen g(20);
  const std::vector<std::int32_t> labels = {1, 0, 3};
  const auto report = grad_check(
      [&](Tape<double>& t, const std::vector<Var>& p) {
        Var h = relu(t, add_bias(t, matmul(t, p[0], p[1]), p[2]));
        return softmax_cross_entropy(t, add_bias(t, matmul(t, h, p[3]), p[4]),
                                     std::span<const std::int32_t>(labels));
      },
      {{{3, 5}, g.normals(15)},
       {{5, 8}, g.normals(40, 0.5)},
       {{8}, g.normals(8, 0.1)},
       {{8, 4}, g.normals(32, 0.5)},
       {{4}, g.normals(4, 0.1)}});
  EXPECT_LE(report.max_rel_error, 1e-6);
}

TEST(GradCheck, NonFiniteObjectiveRaises) {
  EXPECT_THROW(grad_check(
                   [](Tape<double>& t, const std::vector<Var>& p) {
                     return sum_squares(t, p[0]);
                   },
                   {{{1}, {std::numeric_limits<double>::infinity()}}}),
               NumericError);
}

TEST(Tape, FiniteCheckFlagsNan) {
  Tape<double> tape;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Var x = tape.constant({1, 1}, {nan});
  tape.set_check_finite(true);
  EXPECT_THROW(add(tape, x, x), NumericError);
  EXPECT_THROW(tape.constant({1, 1}, {nan}), NumericError);
}

TEST(Tape, RepeatedRunsAreBitwiseIdentical) {
  auto run = [] {
    Gen g(21);
    Tape<float> tape;
    std::vector<float> xv(64 * 32), wv(32 * 16);
    for (auto& v : xv) v = static_cast<float>(g.normal());
    for (auto& v : wv) v = static_cast<float>(g.normal());
    Var y = relu(tape, matmul(tape, tape.constant({64, 32}, xv), tape.constant({32, 16}, wv)));
    auto s = tape.value(y);
    return std::vector<float>(s.begin(), s.end());
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, SinglePrecisionWithinLooseTolerance) {
  Gen g(22);
  std::vector<float> xv(12), wv(12);
  for (auto& v : xv) v = static_cast<float>(g.normal());
  for (auto& v : wv) v = static_cast<float>(g.normal());
  Tape<float> tape;
  Var x = tape.constant({3, 4}, xv);
  Var w = tape.variable({4, 3}, wv);
  tape.backward(sum_squares(tape, matmul(tape, x, w)));
  std::vector<float> analytic(tape.grad(w).begin(), tape.grad(w).end());
  const float h = 1e-2f;
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < wv.size(); ++i) {
    auto eval = [&](float delta) {
      Tape<float> t;
      auto w2 = wv;
      w2[i] += delta;
      return static_cast<double>(
          t.value(sum_squares(t, matmul(t, t.constant({3, 4}, xv), t.constant({4, 3}, w2))))[0]);
    };
    const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
    diff = std::max(diff, std::abs(numeric - analytic[i]));
    scale = std::max(scale, std::abs(numeric));
  }
  EXPECT_LE(diff / scale, 1e-3);
}

}  // namespace
}  // namespace forge::tensor

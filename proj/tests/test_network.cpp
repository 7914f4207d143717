// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "forge/error.hpp"
#include "forge/network.hpp"
#include "forge/ops.hpp"
#include "network_support.hpp"
#include "support.hpp"

namespace forge::network {
namespace {

using planner::LayerSpec;
using planner::NetworkPlan;
using planner::NetworkRequest;
using planner::TransformKind;
using testing::Gen;

constexpr TransformKind kIfts[] = {TransformKind::sparse_wide, TransformKind::sparse_parallel,
                                   TransformKind::sparse_factorized, TransformKind::sparse_doped};

NetworkPlan single_layer(const LayerSpec& spec, planner::TransformPlan plan) {
  NetworkPlan net;
  net.layers.push_back({spec, std::move(plan)});
  net.baseline_total_macs = planner::flop_count(spec);
  net.planned_total_macs = net.layers[0].plan.predicted_macs;
  return net;
}

NetworkPlan mlp_plan(TransformKind kind, double s, planner::Nonlinearity nl,
                     std::vector<std::int64_t> widths = {12, 16, 16, 5}) {
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    specs.push_back(LayerSpec::linear(widths[i], widths[i + 1]));
  }
  NetworkRequest req;
  req.transform = kind;
  req.sparsity = s;
  req.keep_boundary_dense = false;
  req.nonlinearity = nl;
  return planner::plan_network(specs, req);
}

NetworkPlan cnn_plan(TransformKind kind, double s) {
  std::vector<LayerSpec> specs{LayerSpec::conv2d(3, 8, 3, 5, 1, 1),
                               LayerSpec::conv2d(8, 8, 3, 3, 2, 1),
                               LayerSpec::linear(8 * 9, 4)};
  NetworkRequest req;
  req.transform = kind;
  req.sparsity = s;
  req.keep_boundary_dense = false;
  return planner::plan_network(specs, req);
}

std::vector<double> run(Network<double>& net, const std::vector<double>& x, std::size_t batch,
                        Mode mode = Mode::eval, std::uint64_t* macs = nullptr) {
  Tape<double> tape;
  const auto features = static_cast<std::size_t>(net.input_features());
  Var in = tape.constant({batch, features}, x);
  Var out = net.forward(tape, in, mode);
  if (macs) *macs = tape.macs();
  auto v = tape.value(out);
  return {v.begin(), v.end()};
}

BuildOptions opts(std::uint64_t seed, Nonlinearity act = Nonlinearity::relu) {
  BuildOptions o;
  o.model_seed = seed;
  o.mask_seed = seed + 1;
  o.activation = act;
  return o;
}

// ----------------------------------------------------------------- build

TEST(Build, DenseForwardEqualsMatmulPlusBias) {
  const auto spec = LayerSpec::linear(5, 3);
  auto net = Network<double>::build(single_layer(spec, planner::plan_dense(spec)), opts(1));
  Gen g(1);
  auto& bias = net.param("layer0.out.bias").values;
  bias = g.normals(3);
  const auto x = g.normals(4 * 5);
  const auto& w = net.param("layer0.main.weight").values;
  auto expected = testing::naive_masked_product(x, w, {}, 4, 5, 3);
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += bias[i % 3];
  EXPECT_LE(testing::max_rel_diff(run(net, x, 4), expected), 1e-14);
}

TEST(Build, SparseParallelHalfOnFourByFour) {
  const auto spec = LayerSpec::linear(4, 4);
  auto net = Network<double>::build(single_layer(spec, planner::plan_sparse_parallel(spec, 0.5)),
                                    opts(2));
  ASSERT_EQ(net.masks().size(), 2u);
  for (const auto& m : net.masks()) {
    EXPECT_EQ(m.shape(), (std::vector<std::size_t>{4, 4}));
    EXPECT_EQ(m.active_count(), 8u);
  }
  EXPECT_EQ(net.mask_names(), (std::vector<std::string>{"layer0.branch0.mask",
                                                         "layer0.branch1.mask"}));
  EXPECT_NO_THROW(net.param("layer0.branch0.norm.gamma"));
}

TEST(Build, SparseDopedAtZeroEqualsDense) {
  const auto spec = LayerSpec::linear(24, 16);
  const auto plan = planner::plan_sparse_doped(spec, 0.0, Nonlinearity::identity);
  EXPECT_EQ(plan.rounded.inner, 0);
  auto net = Network<double>::build(single_layer(spec, plan), opts(3));
  Gen g(3);
  net.param("layer0.out.bias").values = g.normals(16);
  const auto x = g.normals(6 * 24);
  const auto& w = net.param("layer0.sparse.weight").values;
  auto expected = testing::naive_masked_product(x, w, {}, 6, 24, 16);
  const auto& b = net.param("layer0.out.bias").values;
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += b[i % 16];
  EXPECT_LE(testing::max_rel_diff(run(net, x, 6), expected), 1e-12);
}

TEST(Build, BrokenChainRejected) {
  NetworkPlan plan;
  const auto a = LayerSpec::linear(4, 6), b = LayerSpec::linear(5, 3);
  plan.layers = {{a, planner::plan_dense(a)}, {b, planner::plan_dense(b)}};
  EXPECT_THROW(Network<double>::build(plan, opts(0)), ShapeError);
  EXPECT_THROW(Network<double>::build(NetworkPlan{}, opts(0)), ValidationError);
}

TEST(Build, SeedsAreDeterministic) {
  const auto plan = mlp_plan(TransformKind::sparse_wide, 0.75, Nonlinearity::batchnorm_relu);
  auto a = Network<double>::build(plan, opts(9));
  auto b = Network<double>::build(plan, opts(9));
  auto c = Network<double>::build(plan, opts(10));
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].values, b.params()[i].values);
  }
  EXPECT_EQ(a.masks(), b.masks());
  EXPECT_NE(a.masks(), c.masks());
}

TEST(Build, ZeroInitTailStartsAtZero) {
  auto spec = LayerSpec::linear(8, 8);
  spec.zero_init = true;
  auto net = Network<double>::build(
      single_layer(spec, planner::plan_sparse_factorized(spec, 0.5)), opts(4));
  for (double v : net.param("layer0.factor_v.weight").values) EXPECT_EQ(v, 0.0);
  bool any = false;
  for (double v : net.param("layer0.factor_u.weight").values) any |= v != 0.0;
  EXPECT_TRUE(any);
}

// --------------------------------------------------------------- forward

TEST(Forward, ZeroInputBiasFreeReluGivesZeroLogits) {
  std::vector<LayerSpec> specs{LayerSpec::linear(10, 12, false), LayerSpec::linear(12, 12, false),
                               LayerSpec::linear(12, 3, false)};
  for (auto kind : kIfts) {
    NetworkRequest req;
    req.transform = kind;
    req.sparsity = 0.75;
    req.keep_boundary_dense = false;
    req.nonlinearity = Nonlinearity::relu;
    auto net = Network<double>::build(planner::plan_network(specs, req), opts(5));
    for (double v : run(net, std::vector<double>(4 * 10, 0.0), 4)) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, RejectsWrongInputWidth) {
  auto net = Network<double>::build(mlp_plan(TransformKind::dense, 0.0, Nonlinearity::relu),
                                    opts(6));
  Tape<double> tape;
  Var in = tape.constant({2, 11}, std::vector<double>(22, 1.0));
  EXPECT_THROW(net.forward(tape, in, Mode::eval), ShapeError);
}

TEST(Forward, SparseWideMacsEqualPredictionTimesBatch) {
  const auto spec = LayerSpec::linear(64, 64, false);
  const auto plan = planner::plan_sparse_wide(spec, 0.75);
  for (auto path : {ExecPath::masked_dense, ExecPath::compressed}) {
    auto o = opts(7);
    o.path = path;
    auto net = Network<double>::build(single_layer(spec, plan), o);
    std::uint64_t macs = 0;
    Gen g(7);
    EXPECT_EQ(net.input_features(), 128);
    run(net, g.normals(32 * 128), 32, Mode::eval, &macs);
    EXPECT_EQ(macs, static_cast<std::uint64_t>(plan.predicted_macs) * 32u);
    EXPECT_EQ(plan.predicted_macs, 4096);
  }
}

TEST(Forward, MacAuditEveryTransformAndLayer) {
  for (auto kind : kIfts) {
    for (bool conv : {false, true}) {
      const auto plan = conv ? cnn_plan(kind, 0.75)
                             : mlp_plan(kind, 0.75, Nonlinearity::batchnorm_relu);
      for (auto path : {ExecPath::masked_dense, ExecPath::compressed}) {
        auto o = opts(8, Nonlinearity::batchnorm_relu);
        o.path = path;
        auto net = Network<double>::build(plan, o);
        Gen g(8);
        const std::size_t batch = 3;
        std::uint64_t macs = 0;
        run(net, g.normals(batch * static_cast<std::size_t>(net.input_features())), batch,
            Mode::train, &macs);
        ASSERT_EQ(net.last_layer_macs().size(), plan.layers.size());
        for (std::size_t i = 0; i < plan.layers.size(); ++i) {
          EXPECT_EQ(net.last_layer_macs()[i],
                    static_cast<std::uint64_t>(plan.layers[i].plan.predicted_macs) * batch)
              << planner::to_string(kind) << " layer " << i << (conv ? " conv" : " mlp");
        }
        EXPECT_EQ(macs, static_cast<std::uint64_t>(plan.planned_total_macs) * batch);
        EXPECT_EQ(net.predicted_macs(), plan.planned_total_macs);
      }
    }
  }
}

TEST(Forward, MaskedAndCompressedPathsAgree) {
  Gen g(9);
  for (auto kind : kIfts) {
    for (bool conv : {false, true}) {
      const auto plan = conv ? cnn_plan(kind, 0.9)
                             : mlp_plan(kind, 0.9, Nonlinearity::batchnorm_relu);
      auto net = Network<double>::build(plan, opts(9, Nonlinearity::batchnorm_relu));
      const std::size_t batch = 4;
      const auto x = g.normals(batch * static_cast<std::size_t>(net.input_features()));
      net.set_path(ExecPath::masked_dense);
      const auto masked = run(net, x, batch);
      net.set_path(ExecPath::compressed);
      const auto compressed = run(net, x, batch);
      EXPECT_LE(testing::max_rel_diff(compressed, masked), 1e-10) << planner::to_string(kind);
    }
  }
}

// Compressed path must keep tracking the mask after it changes.
TEST(Forward, CompressedPathFollowsMaskUpdates) {
  auto net = Network<double>::build(
      mlp_plan(TransformKind::sparse_wide, 0.75, Nonlinearity::relu), opts(10));
  Gen g(10);
  const auto x = g.normals(2 * 12);
  net.set_path(ExecPath::compressed);
  run(net, x, 2);
  auto& m = net.masks()[0];
  auto& p = net.params()[net.mask_param(0)];
  const auto grad = g.normals(p.values.size());
  mask::rigl_update<double>(m, p.values, grad, 0.3, 1);
  for (auto i : m.active()) p.values[i] = g.normal();
  const auto compressed = run(net, x, 2);
  net.set_path(ExecPath::masked_dense);
  EXPECT_LE(testing::max_rel_diff(compressed, run(net, x, 2)), 1e-12);
}

// ------------------------------------------------------------- gradients

TEST(Gradients, TwoLayerNetworksEveryTransform) {
  Gen g(11);
  for (auto kind : {TransformKind::dense, TransformKind::sparse_wide,
                    TransformKind::sparse_parallel, TransformKind::sparse_factorized,
                    TransformKind::sparse_doped}) {
    for (auto nl : {Nonlinearity::batchnorm_relu, Nonlinearity::identity}) {
      const auto plan = mlp_plan(kind, 0.5, nl, {6, 8, 3});
      auto net = Network<double>::build(plan, opts(11, nl == Nonlinearity::identity
                                                           ? Nonlinearity::relu
                                                           : Nonlinearity::batchnorm_relu));
      for (auto& p : net.params()) {
        if (p.mask < 0 && p.name.find("bias") != std::string::npos) p.values = g.normals(p.values.size(), 0.1);
      }
      const std::size_t batch = 5;
      const auto x = g.normals(batch * 6);
      EXPECT_LE(testing::network_grad_error(net, x, batch), 1e-6)
          << planner::to_string(kind) << " " << planner::to_string(nl);
    }
  }
}

TEST(Gradients, MaskedWeightsGetNoGradientUnlessSurfaced) {
  auto net = Network<double>::build(
      mlp_plan(TransformKind::sparse_wide, 0.75, Nonlinearity::relu), opts(12));
  Gen g(12);
  const auto x = g.normals(3 * 12);
  for (bool dense : {false, true}) {
    net.set_surface_dense_grads(dense);
    Tape<double> tape;
    Var out = net.forward(tape, tape.constant({3, 12}, x), Mode::train);
    tape.backward(tensor::sum_squares(tape, out));
    net.collect_grads(tape);
    const auto& p = net.params()[net.mask_param(0)];
    const auto& m = net.masks()[0];
    bool inactive_nonzero = false;
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!m.is_active(i) && p.grad[i] != 0.0) inactive_nonzero = true;
    }
    EXPECT_EQ(inactive_nonzero, dense);
  }
}

// -------------------------------------------------------------- counting

TEST(ParamCount, DenseLinear) {
  const auto spec = LayerSpec::linear(64, 64);
  auto net = Network<double>::build(single_layer(spec, planner::plan_dense(spec)), opts(0));
  EXPECT_EQ(net.param_count(true), 4160);
  EXPECT_EQ(net.param_count(false), 4160);
}

TEST(ParamCount, SparseWideAndDensify) {
  const auto spec = LayerSpec::linear(64, 64);
  auto net =
      Network<double>::build(single_layer(spec, planner::plan_sparse_wide(spec, 0.75)), opts(0));
  EXPECT_EQ(net.param_count(true), 4096 + 128);
  EXPECT_EQ(net.param_count(false), 16384 + 128);
  for (auto& m : net.masks()) mask::densify(m);
  EXPECT_EQ(net.param_count(true), net.param_count(false));
}

TEST(ParamCount, CardinalityMatchesPlannerSum) {
  for (auto kind : kIfts) {
    for (bool conv : {false, true}) {
      const auto plan = conv ? cnn_plan(kind, 0.8)
                             : mlp_plan(kind, 0.8, Nonlinearity::batchnorm_relu);
      auto net = Network<double>::build(plan, opts(13));
      std::int64_t sum = 0;
      for (const auto& [spec, p] : plan.layers) sum += planner::cardinality(p, spec);
      EXPECT_EQ(net.total_cardinality(), sum);
    }
  }
}

TEST(Registry, NamesFollowLayerSlotConvention) {
  auto net = Network<double>::build(
      mlp_plan(TransformKind::sparse_factorized, 0.75, Nonlinearity::batchnorm_relu), opts(14));
  for (const char* name : {"layer0.factor_u.weight", "layer0.factor_v.weight", "layer0.out.bias",
                           "layer1.factor_u.norm.gamma", "layer2.out.bias"}) {
    EXPECT_NO_THROW(net.param(name)) << name;
  }
  EXPECT_THROW(net.param("layer9.main.weight"), ValidationError);
  for (std::size_t i = 0; i < net.masks().size(); ++i) {
    const auto& owner = net.params()[net.mask_param(i)];
    EXPECT_EQ(owner.name.substr(0, owner.name.size() - 6) + "mask", net.mask_names()[i]);
    EXPECT_EQ(owner.values.size(), net.masks()[i].positions());
  }
}

// ------------------------------------------------------ drop-in at s = 0

// Every IFT at s=0 with identity sigma reduces to the dense layer. Single
// weight transforms load the dense weights directly; factorized layers are
// compared with a dense network holding the product U V.
TEST(DropIn, ZeroSparsityMatchesDense) {
  Gen g(15);
  const std::vector<std::int64_t> widths{10, 14, 14, 4};
  const auto dense_plan = mlp_plan(TransformKind::dense, 0.0, Nonlinearity::identity, widths);
  const std::size_t batch = 5;
  const auto x = g.normals(batch * 10);

  for (auto kind : kIfts) {
    const auto plan = mlp_plan(kind, 0.0, Nonlinearity::identity, widths);
    auto dense = Network<double>::build(dense_plan, opts(15));
    for (auto& p : dense.params()) p.values = g.normals(p.values.size(), 0.3);
    auto net = Network<double>::build(plan, opts(16));
    // Factorized layers round the inner width up and trim active weights to
    // stay iso-FLOP, so only they may start with inactive positions.
    if (kind != TransformKind::sparse_factorized) {
      for (auto& m : net.masks()) EXPECT_TRUE(m.dense());
    }
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
      const std::string L = "layer" + std::to_string(i);
      auto& w = dense.param(L + ".main.weight").values;
      net.param(L + ".out.bias").values = dense.param(L + ".out.bias").values;
      switch (kind) {
        case TransformKind::sparse_wide:
          net.param(L + ".main.weight").values = w;
          break;
        case TransformKind::sparse_parallel:
          ASSERT_EQ(plan.layers[i].plan.rounded.branches, 1);
          net.param(L + ".branch0.weight").values = w;
          break;
        case TransformKind::sparse_doped:
          net.param(L + ".sparse.weight").values = w;
          break;
        case TransformKind::sparse_factorized: {
          const auto& u = net.param(L + ".factor_u.weight");
          const auto& v = net.param(L + ".factor_v.weight").values;
          const std::size_t rows = u.shape[0], inner = u.shape[1];
          const std::size_t cols = v.size() / inner;
          w = testing::naive_masked_product(u.values, v, {}, rows, inner, cols);
          break;
        }
        default:
          break;
      }
    }
    EXPECT_LE(testing::max_rel_diff(run(net, x, batch), run(dense, x, batch)), 1e-10)
        << planner::to_string(kind);
  }
}

}  // namespace
}  // namespace forge::network

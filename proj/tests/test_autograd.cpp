#include "tcmp/autograd.hpp"

#include <gtest/gtest.h>

#include "gradient_check.hpp"
#include "tcmp/rng.hpp"

using namespace tcmp;
using tcmp::testing::expect_gradients_match;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Random tensor with entries bounded away from zero, for kinked ops.
Tensor<double> random_tensor_nonzero(std::vector<int> shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) {
    const double mag = rng.uniform(0.2, 1.5);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

// Scalar loss: sum(op_output * fixed_weights), which feeds a dense, varied
// gradient into the op under test.
Var weighted_sum(Tape<double>& tape, Var x, const Tensor<double>& weights) {
  return tape.sum_all(tape.mul(x, tape.constant(weights)));
}

}  // namespace

TEST(Backward, SumGivesOnes) {
  std::vector<Parameter<double>> params;
  params.emplace_back("x", Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tape<double> tape;
  const Var loss = tape.sum_all(tape.param(params[0]));
  tape.backward(loss);
  for (double g : params[0].grad.data) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, DisconnectedParameterKeepsZeroGrad) {
  std::vector<Parameter<double>> params;
  params.emplace_back("used", Tensor<double>({2}, {1, 2}));
  params.emplace_back("unused", Tensor<double>({2}, {3, 4}));
  Tape<double> tape;
  const Var loss = tape.sum_all(tape.param(params[0]));
  tape.param(params[1]);  // on the tape but not reachable from the loss
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(params[0].grad[0], 1.0);
  EXPECT_DOUBLE_EQ(params[1].grad[0], 0.0);
  EXPECT_DOUBLE_EQ(params[1].grad[1], 0.0);
}

TEST(Backward, SecondCallWithoutResetThrows) {
  std::vector<Parameter<double>> params;
  params.emplace_back("x", Tensor<double>({2}, {1, 2}));
  Tape<double> tape;
  const Var loss = tape.sum_all(tape.param(params[0]));
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), InvalidState);
  tape.reset();
  const Var loss2 = tape.sum_all(tape.param(params[0]));
  EXPECT_NO_THROW(tape.backward(loss2));
}

TEST(Backward, NonScalarLossThrows) {
  std::vector<Parameter<double>> params;
  params.emplace_back("x", Tensor<double>({2}, {1, 2}));
  Tape<double> tape;
  const Var x = tape.param(params[0]);
  EXPECT_THROW(tape.backward(x), InvalidInput);
}

TEST(GradCheck, Conv1dCausal) {
  Rng rng(100);
  for (int trial = 0; trial < 6; ++trial) {
    const int cin = static_cast<int>(rng.uniform_int(1, 5));
    const int cout = static_cast<int>(rng.uniform_int(1, 5));
    const int f = static_cast<int>(rng.uniform_int(1, 3));
    const int m = static_cast<int>(rng.uniform_int(2, 8));
    const int d = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<Parameter<double>> params;
    params.emplace_back("in", random_tensor({cin, m}, rng));
    params.emplace_back("ker", random_tensor({cout, cin, f}, rng));
    params.emplace_back("bias", random_tensor({cout}, rng));
    const Tensor<double> w = random_tensor({cout, m}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.conv1d_causal(t.param(p[0]), t.param(p[1]), t.param(p[2]), d), w);
    });
  }
}

TEST(GradCheck, AddMul) {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 10));
    std::vector<Parameter<double>> params;
    params.emplace_back("a", random_tensor({n}, rng));
    params.emplace_back("b", random_tensor({n}, rng));
    const Tensor<double> w = random_tensor({n}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.add(t.param(p[0]), t.mul(t.param(p[0]), t.param(p[1]))), w);
    });
  }
}

TEST(GradCheck, ScaleByScalarVariable) {
  Rng rng(102);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    std::vector<Parameter<double>> params;
    params.emplace_back("x", random_tensor({n, 3}, rng));
    params.emplace_back("y", random_tensor({n, 3}, rng));
    params.emplace_back("s", random_tensor({1}, rng, 0.2, 1.5));
    const Tensor<double> w = random_tensor({n, 3}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      const Var one_minus = t.affine(t.param(p[2]), -1.0, 1.0);
      const Var mixed = t.add(t.scale(t.param(p[0]), t.param(p[2])),
                              t.scale(t.param(p[1]), one_minus));
      return weighted_sum(t, mixed, w);
    });
  }
}

TEST(GradCheck, Activations) {
  Rng rng(103);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(3, 12));
    std::vector<Parameter<double>> params;
    params.emplace_back("x", random_tensor_nonzero({n}, rng));
    const Tensor<double> w = random_tensor({n}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.tanh_act(t.param(p[0])), w);
    });
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.sigmoid_act(t.param(p[0])), w);
    });
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.relu_act(t.param(p[0])), w);
    });
  }
}

TEST(GradCheck, LayerNorm) {
  Rng rng(104);
  for (int trial = 0; trial < 5; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(2, 7));
    const int m = static_cast<int>(rng.uniform_int(1, 6));
    std::vector<Parameter<double>> params;
    params.emplace_back("x", random_tensor({c, m}, rng, -2, 2));
    params.emplace_back("gain", random_tensor({c}, rng, 0.5, 1.5));
    params.emplace_back("bias", random_tensor({c}, rng));
    const Tensor<double> w = random_tensor({c, m}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.layer_norm(t.param(p[0]), t.param(p[1]), t.param(p[2])), w);
    });
  }
}

TEST(GradCheck, WeightNorm) {
  Rng rng(105);
  for (int trial = 0; trial < 5; ++trial) {
    const int cout = static_cast<int>(rng.uniform_int(1, 4));
    const int cin = static_cast<int>(rng.uniform_int(1, 4));
    const int f = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<Parameter<double>> params;
    params.emplace_back("dir", random_tensor_nonzero({cout, cin, f}, rng));
    params.emplace_back("mag", random_tensor({cout}, rng, 0.3, 2.0));
    const Tensor<double> w = random_tensor({cout, cin, f}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.weight_norm_reparam(t.param(p[0]), t.param(p[1])), w);
    });
  }
}

TEST(GradCheck, DropoutWithFixedMask) {
  Rng rng(106);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(4, 16));
    std::vector<Parameter<double>> params;
    params.emplace_back("x", random_tensor({n}, rng));
    const Tensor<double> w = random_tensor({n}, rng);
    const uint64_t mask_seed = rng.next_u64();
    expect_gradients_match(params, [&, mask_seed](Tape<double>& t, auto& p) {
      Rng mask_rng(mask_seed);  // same mask on every evaluation
      return weighted_sum(t, t.dropout(t.param(p[0]), 0.3, true, mask_rng), w);
    });
  }
}

TEST(GradCheck, GlobalAvgPool) {
  Rng rng(107);
  for (int trial = 0; trial < 5; ++trial) {
    const int c = static_cast<int>(rng.uniform_int(1, 6));
    const int m = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<Parameter<double>> params;
    params.emplace_back("x", random_tensor({c, m}, rng));
    const Tensor<double> w = random_tensor({c}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return weighted_sum(t, t.global_avg_pool(t.param(p[0])), w);
    });
  }
}

TEST(GradCheck, MseLoss) {
  Rng rng(108);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 6));
    std::vector<Parameter<double>> params;
    params.emplace_back("pred", random_tensor({n}, rng));
    const Tensor<double> target = random_tensor({n}, rng);
    expect_gradients_match(params, [&](Tape<double>& t, auto& p) {
      return t.mse_loss(t.param(p[0]), t.constant(target));
    });
  }
}

TEST(GradCheck, MseLossGradientFormula) {
  // gradient = 2 (pred - target) / batch
  std::vector<Parameter<double>> params;
  params.emplace_back("pred", Tensor<double>({2, 2}, {1, 2, 3, 4}));
  const Tensor<double> target({2, 2}, {0, 0, 0, 0});
  Tape<double> tape;
  const Var loss = tape.mse_loss(tape.param(params[0]), tape.constant(target));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(params[0].grad[0], 2.0 * 1 / 2);
  EXPECT_DOUBLE_EQ(params[0].grad[3], 2.0 * 4 / 2);
}

TEST(GradCheck, CompositeChainOfAllOps) {
  Rng rng(109);
  for (int trial = 0; trial < 5; ++trial) {
    const int c = 3, m = 5;
    std::vector<Parameter<double>> params;
    params.emplace_back("in", random_tensor({c, m}, rng));
    params.emplace_back("ker", random_tensor({c, c, 2}, rng));
    params.emplace_back("bias", random_tensor({c}, rng));
    params.emplace_back("dir", random_tensor_nonzero({c, c, 1}, rng));
    params.emplace_back("mag", random_tensor({c}, rng, 0.3, 1.5));
    params.emplace_back("gain", random_tensor({c}, rng, 0.5, 1.5));
    params.emplace_back("nbias", random_tensor({c}, rng));
    params.emplace_back("alpha", random_tensor({1}, rng, 0.2, 0.8));
    const Tensor<double> target = random_tensor({c}, rng);
    const uint64_t mask_seed = rng.next_u64();
    expect_gradients_match(params, [&, mask_seed](Tape<double>& t, auto& p) {
      Rng mask_rng(mask_seed);
      const Var conv = t.conv1d_causal(t.param(p[0]), t.param(p[1]), t.param(p[2]), 2);
      const Var gated = t.mul(t.tanh_act(conv), t.sigmoid_act(conv));
      const Var w = t.weight_norm_reparam(t.param(p[3]), t.param(p[4]));
      const Var zerob = t.constant(Tensor<double>({c}));
      const Var skip = t.conv1d_causal(gated, w, zerob, 1);
      const Var normed = t.layer_norm(skip, t.param(p[5]), t.param(p[6]));
      const Var act = t.relu_act(normed);
      const Var dropped = t.dropout(act, 0.25, true, mask_rng);
      const Var one_minus = t.affine(t.param(p[7]), -1.0, 1.0);
      const Var mixed =
          t.add(t.scale(dropped, t.param(p[7])), t.scale(t.scale(gated, 0.70710678), one_minus));
      const Var pooled = t.global_avg_pool(mixed);
      return t.mse_loss(pooled, t.constant(target));
    });
  }
}

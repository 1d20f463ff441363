#include <gtest/gtest.h>

#include <cmath>

#include "tcmp/autograd.hpp"
#include "tcmp/rng.hpp"
#include "tcmp/tensor.hpp"

using namespace tcmp;

namespace {

// Reference convolution with the same per-element accumulation order the
// production kernel documents: bias first, then (tap, channel) ascending.
template <typename T>
Tensor<T> conv_reference(const Tensor<T>& in, const Tensor<T>& ker, const Tensor<T>& bias,
                         int dilation) {
  const int cin = in.dim(0), m = in.dim(1);
  const int cout = ker.dim(0), f = ker.dim(2);
  Tensor<T> out({cout, m});
  for (int c = 0; c < cout; ++c) {
    for (int t = 0; t < m; ++t) {
      T acc = bias[static_cast<size_t>(c)];
      for (int k = 0; k < f; ++k) {
        for (int i = 0; i < cin; ++i) {
          const int src = t - dilation * k;
          if (src < 0) continue;
          acc += in.at(i, src) * ker.data[(static_cast<size_t>(c) * cin + i) * f + k];
        }
      }
      out.at(c, t) = acc;
    }
  }
  return out;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST(Conv1dCausal, HandValuesDilationOne) {
  Tape<double> tape;
  const Var in = tape.constant(Tensor<double>({1, 4}, {1, 2, 3, 4}));
  const Var ker = tape.constant(Tensor<double>({1, 1, 2}, {1, 1}));
  const Var bias = tape.constant(Tensor<double>({1}, {0}));
  const Var out = tape.conv1d_causal(in, ker, bias, 1);
  // out[t] = x[t]*k1 + x[t-1]*k0, left-padded with zero.
  const auto& v = tape.value(out).data;
  EXPECT_EQ(v, (std::vector<double>{1, 3, 5, 7}));
}

TEST(Conv1dCausal, HandValuesDilationTwo) {
  Tape<double> tape;
  const Var in = tape.constant(Tensor<double>({1, 4}, {1, 2, 3, 4}));
  const Var ker = tape.constant(Tensor<double>({1, 1, 2}, {1, 1}));
  const Var bias = tape.constant(Tensor<double>({1}, {0}));
  const Var out = tape.conv1d_causal(in, ker, bias, 2);
  EXPECT_EQ(tape.value(out).data, (std::vector<double>{1, 2, 4, 6}));
}

TEST(Conv1dCausal, ZeroKernelZeroBiasGivesZeros) {
  Rng rng(1);
  Tape<double> tape;
  const Var in = tape.constant(random_tensor<double>({3, 6}, rng));
  const Var ker = tape.constant(Tensor<double>({2, 3, 2}));
  const Var bias = tape.constant(Tensor<double>({2}));
  const Var out = tape.conv1d_causal(in, ker, bias, 1);
  for (double v : tape.value(out).data) EXPECT_EQ(v, 0.0);
}

TEST(Conv1dCausal, ShapeMismatchThrows) {
  Tape<double> tape;
  const Var in = tape.constant(Tensor<double>({2, 4}));
  const Var ker = tape.constant(Tensor<double>({1, 3, 2}));  // wrong C_in
  const Var bias = tape.constant(Tensor<double>({1}));
  EXPECT_THROW(tape.conv1d_causal(in, ker, bias, 1), InvalidInput);
}

TEST(Conv1dCausal, BitExactAgainstReference) {
  Rng rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const int cin = static_cast<int>(rng.uniform_int(1, 8));
    const int cout = static_cast<int>(rng.uniform_int(1, 8));
    const int f = static_cast<int>(rng.uniform_int(1, 4));
    const int m = static_cast<int>(rng.uniform_int(1, 12));
    const int d = static_cast<int>(rng.uniform_int(1, 4));
    const auto in = random_tensor<double>({cin, m}, rng);
    const auto ker = random_tensor<double>({cout, cin, f}, rng);
    const auto bias = random_tensor<double>({cout}, rng);

    Tape<double> tape;
    const Var out = tape.conv1d_causal(tape.constant(in), tape.constant(ker), tape.constant(bias), d);
    const Tensor<double> ref = conv_reference(in, ker, bias, d);
    ASSERT_EQ(tape.value(out).shape, ref.shape);
    for (size_t i = 0; i < ref.numel(); ++i) {
      EXPECT_EQ(tape.value(out)[i], ref[i]) << "trial " << trial << " element " << i;
    }
  }
}

TEST(Conv1dCausal, CausalityUnderColumnPerturbation) {
  Rng rng(3);
  const int cin = 4, cout = 4, f = 2, m = 10, d = 2;
  const auto in = random_tensor<double>({cin, m}, rng);
  const auto ker = random_tensor<double>({cout, cin, f}, rng);
  const auto bias = random_tensor<double>({cout}, rng);
  Tape<double> base;
  const Var out0 =
      base.conv1d_causal(base.constant(in), base.constant(ker), base.constant(bias), d);
  for (int col = 0; col < m; ++col) {
    Tensor<double> perturbed = in;
    for (int i = 0; i < cin; ++i) perturbed.at(i, col) += 0.5;
    Tape<double> tape;
    const Var out = tape.conv1d_causal(tape.constant(perturbed), tape.constant(ker),
                                       tape.constant(bias), d);
    for (int c = 0; c < cout; ++c) {
      for (int t = 0; t < col; ++t) {
        EXPECT_EQ(tape.value(out).at(c, t), base.value(out0).at(c, t))
            << "future column " << col << " leaked into t=" << t;
      }
    }
  }
}

TEST(Pointwise, AnalyticValues) {
  Tape<double> tape;
  const Var x = tape.constant(Tensor<double>({3}, {0.0, 1.0, -1.0}));
  EXPECT_DOUBLE_EQ(tape.value(tape.tanh_act(x))[0], 0.0);
  EXPECT_DOUBLE_EQ(tape.value(tape.sigmoid_act(x))[0], 0.5);
  EXPECT_DOUBLE_EQ(tape.value(tape.relu_act(x))[1], 1.0);
  EXPECT_DOUBLE_EQ(tape.value(tape.relu_act(x))[2], 0.0);
}

TEST(Pointwise, MulByOnesIsIdentity) {
  Rng rng(4);
  Tape<double> tape;
  const auto xv = random_tensor<double>({5, 3}, rng);
  const Var x = tape.constant(xv);
  const Var ones = tape.constant(Tensor<double>({5, 3}, 1.0));
  EXPECT_EQ(tape.value(tape.mul(x, ones)).data, xv.data);
}

TEST(Pointwise, ShapeMismatchThrows) {
  Tape<double> tape;
  const Var a = tape.constant(Tensor<double>({2, 3}));
  const Var b = tape.constant(Tensor<double>({3, 2}));
  EXPECT_THROW(tape.add(a, b), InvalidInput);
  EXPECT_THROW(tape.mul(a, b), InvalidInput);
}

TEST(LayerNorm, ConstantAcrossChannelsGivesZeros) {
  Tape<double> tape;
  const Var x = tape.constant(Tensor<double>({4, 3}, 2.5));
  const Var gain = tape.constant(Tensor<double>({4}, 1.0));
  const Var bias = tape.constant(Tensor<double>({4}, 0.0));
  const auto& out = tape.value(tape.layer_norm(x, gain, bias));
  for (double v : out.data) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LayerNorm, OutputMeanEqualsBias) {
  // With unit gain the normalized channels have zero mean, so the output
  // mean per time step collapses to the bias.
  Rng rng(5);
  Tape<double> tape;
  const Var x = tape.constant(random_tensor<double>({6, 4}, rng, -3, 3));
  const Var gain = tape.constant(Tensor<double>({6}, 1.0));
  const Var bias = tape.constant(Tensor<double>({6}, 0.75));
  const auto& out = tape.value(tape.layer_norm(x, gain, bias));
  for (int t = 0; t < 4; ++t) {
    double mean = 0;
    for (int c = 0; c < 6; ++c) mean += out.at(c, t);
    mean /= 6;
    EXPECT_NEAR(mean, 0.75, 1e-9);
  }
}

TEST(WeightNorm, UnitDirectionWithUnitMagnitude) {
  Tape<double> tape;
  // One output channel of norm 1: (0.6, 0.8).
  const Var dir = tape.constant(Tensor<double>({1, 2, 1}, {0.6, 0.8}));
  const Var mag = tape.constant(Tensor<double>({1}, {1.0}));
  const auto& out = tape.value(tape.weight_norm_reparam(dir, mag));
  EXPECT_NEAR(out[0], 0.6, 1e-12);
  EXPECT_NEAR(out[1], 0.8, 1e-12);
}

TEST(WeightNorm, InvariantToDirectionScale) {
  Rng rng(6);
  const auto dir = random_tensor<double>({3, 4, 2}, rng);
  const auto mag = random_tensor<double>({3}, rng, 0.5, 2.0);
  Tape<double> t1, t2;
  const auto& w1 = t1.value(t1.weight_norm_reparam(t1.constant(dir), t1.constant(mag)));
  Tensor<double> scaled = dir;
  for (auto& v : scaled.data) v *= 7.25;
  const auto& w2 = t2.value(t2.weight_norm_reparam(t2.constant(scaled), t2.constant(mag)));
  for (size_t i = 0; i < w1.numel(); ++i) EXPECT_NEAR(w1[i], w2[i], 1e-12);
}

TEST(WeightNorm, ZeroDirectionThrows) {
  Tape<double> tape;
  const Var dir = tape.constant(Tensor<double>({2, 3, 1}));
  const Var mag = tape.constant(Tensor<double>({2}, 1.0));
  EXPECT_THROW(tape.weight_norm_reparam(dir, mag), InvalidState);
}

TEST(Dropout, ZeroProbabilityIsIdentity) {
  Rng rng(7), drop_rng(8);
  Tape<double> tape;
  const auto xv = random_tensor<double>({4, 4}, rng);
  const Var x = tape.constant(xv);
  EXPECT_EQ(tape.value(tape.dropout(x, 0.0, true, drop_rng)).data, xv.data);
}

TEST(Dropout, EvalModeIsIdentity) {
  Rng rng(9), drop_rng(10);
  Tape<double> tape;
  const auto xv = random_tensor<double>({4, 4}, rng);
  const Var x = tape.constant(xv);
  EXPECT_EQ(tape.value(tape.dropout(x, 0.9, false, drop_rng)).data, xv.data);
}

TEST(Dropout, SurvivorFractionWithinThreeSigma) {
  const int n = 100000;
  const double p = 0.2;
  Rng drop_rng(11);
  Tape<double> tape;
  const Var x = tape.constant(Tensor<double>({n}, 1.0));
  const auto& out = tape.value(tape.dropout(x, p, true, drop_rng));
  int survivors = 0;
  for (double v : out.data) survivors += v != 0.0 ? 1 : 0;
  const double frac = static_cast<double>(survivors) / n;
  const double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(frac, 1 - p, 3 * sigma);
  // Surviving entries are scaled by 1/(1-p).
  for (double v : out.data) {
    if (v != 0.0) EXPECT_NEAR(v, 1.0 / (1 - p), 1e-12);
  }
}

TEST(GlobalAvgPool, TimeConstantInput) {
  Tape<double> tape;
  Tensor<double> x({3, 5});
  for (int c = 0; c < 3; ++c) {
    for (int t = 0; t < 5; ++t) x.at(c, t) = c + 1.0;
  }
  const auto& out = tape.value(tape.global_avg_pool(tape.constant(x)));
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_DOUBLE_EQ(out[1], 2.0);
  EXPECT_DOUBLE_EQ(out[2], 3.0);
}

TEST(GlobalAvgPool, SingleColumnIsIdentity) {
  Rng rng(12);
  Tape<double> tape;
  const auto x = random_tensor<double>({6, 1}, rng);
  const auto& out = tape.value(tape.global_avg_pool(tape.constant(x)));
  EXPECT_EQ(out.data, x.data);
}

TEST(GlobalAvgPool, MatchesMeanOracle) {
  Rng rng(13);
  Tape<double> tape;
  const auto x = random_tensor<double>({4, 9}, rng);
  const auto& out = tape.value(tape.global_avg_pool(tape.constant(x)));
  for (int c = 0; c < 4; ++c) {
    double sum = 0;
    for (int t = 0; t < 9; ++t) sum += x.at(c, t);
    EXPECT_NEAR(out[static_cast<size_t>(c)], sum / 9, 1e-12);
  }
}

TEST(MseLoss, ZeroWhenEqual) {
  Rng rng(14);
  Tape<double> tape;
  const auto x = random_tensor<double>({4}, rng);
  EXPECT_DOUBLE_EQ(tape.value(tape.mse_loss(tape.constant(x), tape.constant(x)))[0], 0.0);
}

TEST(MseLoss, SingleTermSum) {
  Tape<double> tape;
  const Var p = tape.constant(Tensor<double>({4}, {1, 0, 0, 0}));
  const Var t = tape.constant(Tensor<double>({4}, {0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(tape.value(tape.mse_loss(p, t))[0], 1.0);
}

TEST(MseLoss, BatchAveragesOverRows) {
  Tape<double> tape;
  const Var p = tape.constant(Tensor<double>({2, 2}, {1, 1, 3, 3}));
  const Var t = tape.constant(Tensor<double>({2, 2}, {0, 0, 0, 0}));
  // Row sums 2 and 18, mean 10.
  EXPECT_DOUBLE_EQ(tape.value(tape.mse_loss(p, t))[0], 10.0);
}

TEST(FiniteChecks, NanIsHardErrorWhenEnabled) {
  const bool saved = finite_checks_enabled();
  finite_checks_enabled() = true;
  Tape<double> tape;
  EXPECT_THROW(tape.constant(Tensor<double>({1}, {std::nan("")})), NumericDegeneracy);
  finite_checks_enabled() = saved;
}

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tcmp/errors.hpp"
#include "tcmp/rng.hpp"
#include "tcmp/tensor.hpp"

namespace tcmp {

// Named, optionally trainable tensor. Gradients accumulate into `grad`
// across backward passes until zero_grad().
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)), trainable(train) {}

  void zero_grad() { grad.fill(T{0}); }
};

// When enabled, every op output is scanned for NaN/Inf and a hard error is
// raised. On by default in debug builds.
inline bool& finite_checks_enabled() {
#ifdef NDEBUG
  static bool enabled = false;
#else
  static bool enabled = true;
#endif
  return enabled;
}

using Var = int;

// Append-only reverse-mode tape. Node inputs always precede the node, so
// backward is a single reverse sweep over creation order.
template <typename T>
class Tape {
  enum class Op {
    Constant,
    Param,
    Add,
    Mul,
    ScaleVar,
    AffineConst,
    Tanh,
    Sigmoid,
    Relu,
    Conv1dCausal,
    LayerNorm,
    WeightNorm,
    Dropout,
    Gap,
    MseLoss,
    SumAll,
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;  // input node ids
    int iarg = 0;                // dilation (conv)
    T s0 = T{0}, s1 = T{0};      // constants (affine)
    Tensor<T> value;
    Tensor<T> aux;   // dropout mask / layer-norm xhat / weight-norm norms
    Tensor<T> aux2;  // layer-norm inverse stddev
    Tensor<T> grad;  // allocated on demand during backward
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };

 public:
  Var constant(Tensor<T> value) { return push(Op::Constant, std::move(value), -1, -1, -1, false); }

  Var param(Parameter<T>& p) {
    const Var id = push(Op::Param, p.value, -1, -1, -1, p.trainable);
    nodes_[static_cast<size_t>(id)].param = &p;
    return id;
  }

  const Tensor<T>& value(Var id) const { return node(id).value; }

  // Gradient of the last backward() with respect to node `id`. Zeros if the
  // node was not reached.
  Tensor<T> grad(Var id) const {
    const Node& n = node(id);
    if (n.grad.numel() == 0) return Tensor<T>::zeros_like(n.value);
    return n.grad;
  }

  size_t size() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

  // --- ops -----------------------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor<T>& x = value_checked(a);
    const Tensor<T>& y = value_checked(b);
    if (!x.same_shape(y)) throw InvalidInput("add: shape mismatch");
    Tensor<T> out = x;
    for (size_t i = 0; i < out.numel(); ++i) out[i] += y[i];
    return push(Op::Add, std::move(out), a, b);
  }

  Var mul(Var a, Var b) {
    const Tensor<T>& x = value_checked(a);
    const Tensor<T>& y = value_checked(b);
    if (!x.same_shape(y)) throw InvalidInput("mul: shape mismatch");
    Tensor<T> out = x;
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= y[i];
    return push(Op::Mul, std::move(out), a, b);
  }

  // out = s * x where s is a one-element tensor node.
  Var scale(Var x, Var s) {
    const Tensor<T>& xv = value_checked(x);
    const Tensor<T>& sv = value_checked(s);
    if (sv.numel() != 1) throw InvalidInput("scale: scalar operand must have one element");
    Tensor<T> out = xv;
    const T k = sv[0];
    for (auto& v : out.data) v *= k;
    return push(Op::ScaleVar, std::move(out), x, s);
  }

  // out = k * x + c with plain constants.
  Var affine(Var x, T k, T c = T{0}) {
    Tensor<T> out = value_checked(x);
    for (auto& v : out.data) v = k * v + c;
    return push(Op::AffineConst, std::move(out), x, -1, -1, false, k, c);
  }

  Var scale(Var x, T k) { return affine(x, k, T{0}); }

  Var tanh_act(Var x) {
    Tensor<T> out = value_checked(x);
    for (auto& v : out.data) v = std::tanh(v);
    return push(Op::Tanh, std::move(out), x);
  }

  Var sigmoid_act(Var x) {
    Tensor<T> out = value_checked(x);
    for (auto& v : out.data) v = T{1} / (T{1} + std::exp(-v));
    return push(Op::Sigmoid, std::move(out), x);
  }

  Var relu_act(Var x) {
    Tensor<T> out = value_checked(x);
    for (auto& v : out.data) v = v > T{0} ? v : T{0};
    return push(Op::Relu, std::move(out), x);
  }

  // Causal dilated convolution. input [C_in x m], kernel [C_out x C_in x F],
  // bias [C_out] -> [C_out x m]. Out-of-range time indices read as zero
  // (left zero-padding of (F-1)*dilation), so length is preserved.
  //
  // Accumulation order per output element is fixed: bias, then kernel taps
  // in (tap, input-channel) order. The naive reference in the tests relies
  // on this for bit-exact agreement. Computation runs on time-major scratch
  // so the hot inner loops are contiguous over channels.
  Var conv1d_causal(Var input, Var kernel, Var bias, int dilation) {
    const Tensor<T>& in = value_checked(input);
    const Tensor<T>& ker = value_checked(kernel);
    const Tensor<T>& b = value_checked(bias);
    if (in.rank() != 2 || ker.rank() != 3 || b.rank() != 1) {
      throw InvalidInput("conv1d_causal: expected input [C_in x m], kernel [C_out x C_in x F], bias [C_out]");
    }
    const int cin = in.dim(0), m = in.dim(1);
    const int cout = ker.dim(0), kcin = ker.dim(1), f = ker.dim(2);
    if (kcin != cin) throw InvalidInput("conv1d_causal: kernel input-channel mismatch");
    if (b.dim(0) != cout) throw InvalidInput("conv1d_causal: bias length mismatch");
    if (f < 1) throw InvalidInput("conv1d_causal: kernel size must be >= 1");
    if (dilation < 1) throw InvalidInput("conv1d_causal: dilation must be >= 1");

    auto& scratch = conv_scratch();
    std::vector<T>& in_t = scratch.a;     // [m][cin]
    std::vector<T>& ker_t = scratch.b;    // [f][cin][cout]
    std::vector<T>& out_t = scratch.c;    // [m][cout]
    in_t.assign(static_cast<size_t>(m) * cin, T{0});
    ker_t.assign(static_cast<size_t>(f) * cin * cout, T{0});
    out_t.assign(static_cast<size_t>(m) * cout, T{0});
    for (int i = 0; i < cin; ++i) {
      for (int t = 0; t < m; ++t) in_t[static_cast<size_t>(t) * cin + i] = in.at(i, t);
    }
    for (int c = 0; c < cout; ++c) {
      for (int i = 0; i < cin; ++i) {
        for (int k = 0; k < f; ++k) {
          ker_t[(static_cast<size_t>(k) * cin + i) * cout + c] =
              ker.data[(static_cast<size_t>(c) * cin + i) * f + k];
        }
      }
    }
    for (int t = 0; t < m; ++t) {
      T* orow = &out_t[static_cast<size_t>(t) * cout];
      for (int c = 0; c < cout; ++c) orow[c] = b[static_cast<size_t>(c)];
      for (int k = 0; k < f; ++k) {
        const int src = t - dilation * k;
        if (src < 0) continue;
        const T* irow = &in_t[static_cast<size_t>(src) * cin];
        for (int i = 0; i < cin; ++i) {
          const T a = irow[i];
          const T* krow = &ker_t[(static_cast<size_t>(k) * cin + i) * cout];
          for (int c = 0; c < cout; ++c) orow[c] += a * krow[c];
        }
      }
    }
    Tensor<T> out({cout, m});
    for (int t = 0; t < m; ++t) {
      for (int c = 0; c < cout; ++c) {
        out.at(c, t) = out_t[static_cast<size_t>(t) * cout + c];
      }
    }
    Var id = push(Op::Conv1dCausal, std::move(out), input, kernel, bias);
    nodes_[static_cast<size_t>(id)].iarg = dilation;
    return id;
  }

  // Per-time-step normalization over the channel axis (mean 0, variance 1
  // across C, eps = 1e-5), then affine gain/bias. input [C x m].
  Var layer_norm(Var input, Var gain, Var bias) {
    const Tensor<T>& in = value_checked(input);
    const Tensor<T>& g = value_checked(gain);
    const Tensor<T>& b = value_checked(bias);
    if (in.rank() != 2) throw InvalidInput("layer_norm: expected [C x m] input");
    const int c = in.dim(0), m = in.dim(1);
    if (g.rank() != 1 || g.dim(0) != c || b.rank() != 1 || b.dim(0) != c) {
      throw InvalidInput("layer_norm: gain/bias length mismatch");
    }
    constexpr double kEps = 1e-5;
    Tensor<T> out({c, m});
    Tensor<T> xhat({c, m});
    Tensor<T> inv_std({m});
    for (int t = 0; t < m; ++t) {
      T mean = 0;
      for (int ch = 0; ch < c; ++ch) mean += in.at(ch, t);
      mean /= static_cast<T>(c);
      T var = 0;
      for (int ch = 0; ch < c; ++ch) {
        const T d = in.at(ch, t) - mean;
        var += d * d;
      }
      var /= static_cast<T>(c);
      const T inv = T{1} / std::sqrt(var + static_cast<T>(kEps));
      inv_std[static_cast<size_t>(t)] = inv;
      for (int ch = 0; ch < c; ++ch) {
        const T xh = (in.at(ch, t) - mean) * inv;
        xhat.at(ch, t) = xh;
        out.at(ch, t) = g[static_cast<size_t>(ch)] * xh + b[static_cast<size_t>(ch)];
      }
    }
    Var id = push(Op::LayerNorm, std::move(out), input, gain, bias);
    nodes_[static_cast<size_t>(id)].aux = std::move(xhat);
    nodes_[static_cast<size_t>(id)].aux2 = std::move(inv_std);
    return id;
  }

  // Effective kernel = magnitude * direction / ||direction|| per output
  // channel (Euclidean norm over the remaining axes).
  Var weight_norm_reparam(Var direction, Var magnitude) {
    const Tensor<T>& v = value_checked(direction);
    const Tensor<T>& g = value_checked(magnitude);
    if (v.rank() < 1) throw InvalidInput("weight_norm_reparam: direction must have rank >= 1");
    const int cout = v.dim(0);
    if (g.rank() != 1 || g.dim(0) != cout) {
      throw InvalidInput("weight_norm_reparam: magnitude must have one scalar per output channel");
    }
    const size_t rest = v.numel() / static_cast<size_t>(cout);
    Tensor<T> out = v;
    Tensor<T> norms({cout});
    for (int c = 0; c < cout; ++c) {
      const T* src = &v.data[static_cast<size_t>(c) * rest];
      T sq = 0;
      for (size_t i = 0; i < rest; ++i) sq += src[i] * src[i];
      const T n = std::sqrt(sq);
      if (!(n > T{0})) throw InvalidState("weight_norm_reparam: zero-norm direction");
      norms[static_cast<size_t>(c)] = n;
      const T k = g[static_cast<size_t>(c)] / n;
      T* dst = &out.data[static_cast<size_t>(c) * rest];
      for (size_t i = 0; i < rest; ++i) dst[i] = k * src[i];
    }
    Var id = push(Op::WeightNorm, std::move(out), direction, magnitude);
    nodes_[static_cast<size_t>(id)].aux = std::move(norms);
    return id;
  }

  // Inverted dropout: in training mode each element is zeroed with
  // probability p and survivors are scaled by 1/(1-p); eval mode is the
  // identity.
  Var dropout(Var x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("dropout: p must be in [0, 1)");
    const Tensor<T>& in = value_checked(x);
    if (!training || p == 0.0) {
      Tensor<T> out = in;
      return push(Op::AffineConst, std::move(out), x, -1, -1, false, T{1}, T{0});
    }
    Tensor<T> mask = Tensor<T>::zeros_like(in);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (size_t i = 0; i < mask.numel(); ++i) {
      mask[i] = rng.uniform() >= p ? keep_scale : T{0};
    }
    Tensor<T> out = in;
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
    Var id = push(Op::Dropout, std::move(out), x);
    nodes_[static_cast<size_t>(id)].aux = std::move(mask);
    return id;
  }

  // Mean over the temporal axis: [C x m] -> [C].
  Var global_avg_pool(Var x) {
    const Tensor<T>& in = value_checked(x);
    if (in.rank() != 2) throw InvalidInput("global_avg_pool: expected [C x m] input");
    const int c = in.dim(0), m = in.dim(1);
    Tensor<T> out({c});
    for (int ch = 0; ch < c; ++ch) {
      T s = 0;
      for (int t = 0; t < m; ++t) s += in.at(ch, t);
      out[static_cast<size_t>(ch)] = s / static_cast<T>(m);
    }
    return push(Op::Gap, std::move(out), x);
  }

  // Sum of squared errors for a single sample ([D]) or mean over rows of
  // per-row sums for a batch ([B x D]).
  Var mse_loss(Var pred, Var target) {
    const Tensor<T>& p = value_checked(pred);
    const Tensor<T>& t = value_checked(target);
    if (!p.same_shape(t)) throw InvalidInput("mse_loss: shape mismatch");
    const size_t batch = p.rank() == 2 ? static_cast<size_t>(p.dim(0)) : 1;
    T acc = 0;
    for (size_t i = 0; i < p.numel(); ++i) {
      const T d = p[i] - t[i];
      acc += d * d;
    }
    acc /= static_cast<T>(batch);
    Var id = push(Op::MseLoss, Tensor<T>::scalar(acc), pred, target);
    nodes_[static_cast<size_t>(id)].s0 = static_cast<T>(batch);
    return id;
  }

  Var sum_all(Var x) {
    const Tensor<T>& in = value_checked(x);
    T s = 0;
    for (const T& v : in.data) s += v;
    return push(Op::SumAll, Tensor<T>::scalar(s), x);
  }

  // --- backward ------------------------------------------------------------

  // Reverse sweep from a scalar loss node. Every trainable Parameter
  // reachable from the loss gets its gradient accumulated; anything else is
  // left untouched.
  void backward(Var loss, T seed = T{1}) {
    if (nodes_.empty()) throw InvalidState("backward: no forward pass recorded");
    if (backward_done_) throw InvalidState("backward: called twice without reset");
    Node& top = node_mut(loss);
    if (top.value.numel() != 1) throw InvalidInput("backward: loss must be scalar");
    backward_done_ = true;
    if (!top.requires_grad) return;  // loss does not depend on any parameter

    ensure_grad(loss);
    node_mut(loss).grad[0] = seed;

    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || n.grad.numel() == 0) continue;
      backward_node(n);
      if (n.param != nullptr) {
        for (size_t i = 0; i < n.grad.numel(); ++i) n.param->grad[i] += n.grad[i];
      }
    }
  }

 private:
  const Node& node(Var id) const { return nodes_.at(static_cast<size_t>(id)); }
  Node& node_mut(Var id) { return nodes_.at(static_cast<size_t>(id)); }
  const Tensor<T>& value_checked(Var id) const { return node(id).value; }

  Var push(Op op, Tensor<T> value, int a, int b = -1, int c = -1, bool param_grad = false,
           T s0 = T{0}, T s1 = T{0}) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c = c;
    n.s0 = s0;
    n.s1 = s1;
    n.value = std::move(value);
    n.requires_grad = op == Op::Param ? param_grad : false;
    for (int in : {a, b, c}) {
      if (in >= 0 && nodes_[static_cast<size_t>(in)].requires_grad) n.requires_grad = true;
    }
    if (finite_checks_enabled() && !n.value.all_finite()) {
      throw NumericDegeneracy("non-finite value produced by tape op");
    }
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  void ensure_grad(Var id) {
    Node& n = node_mut(id);
    if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros_like(n.value);
  }

  // Adds into input grad buffers for one node.
  void backward_node(Node& n) {
    const Tensor<T>& g = n.grad;
    auto want = [&](int id) { return id >= 0 && nodes_[static_cast<size_t>(id)].requires_grad; };
    auto gbuf = [&](int id) -> Tensor<T>& {
      ensure_grad(id);
      return nodes_[static_cast<size_t>(id)].grad;
    };

    switch (n.op) {
      case Op::Constant:
      case Op::Param:
        break;
      case Op::Add: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (want(n.b)) {
          Tensor<T>& gb = gbuf(n.b);
          for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor<T>& x = nodes_[static_cast<size_t>(n.a)].value;
        const Tensor<T>& y = nodes_[static_cast<size_t>(n.b)].value;
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
        }
        if (want(n.b)) {
          Tensor<T>& gb = gbuf(n.b);
          for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * x[i];
        }
        break;
      }
      case Op::ScaleVar: {
        const Tensor<T>& x = nodes_[static_cast<size_t>(n.a)].value;
        const T s = nodes_[static_cast<size_t>(n.b)].value[0];
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
        }
        if (want(n.b)) {
          Tensor<T>& gs = gbuf(n.b);
          T acc = 0;
          for (size_t i = 0; i < g.numel(); ++i) acc += g[i] * x[i];
          gs[0] += acc;
        }
        break;
      }
      case Op::AffineConst: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.s0;
        }
        break;
      }
      case Op::Tanh: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) {
            const T y = n.value[i];
            ga[i] += g[i] * (T{1} - y * y);
          }
        }
        break;
      }
      case Op::Sigmoid: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) {
            const T y = n.value[i];
            ga[i] += g[i] * y * (T{1} - y);
          }
        }
        break;
      }
      case Op::Relu: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < g.numel(); ++i) {
            if (n.value[i] > T{0}) ga[i] += g[i];
          }
        }
        break;
      }
      case Op::Conv1dCausal: {
        const Tensor<T>& in = nodes_[static_cast<size_t>(n.a)].value;
        const Tensor<T>& ker = nodes_[static_cast<size_t>(n.b)].value;
        const int cin = in.dim(0), m = in.dim(1);
        const int cout = ker.dim(0), f = ker.dim(2);
        const int d = n.iarg;

        auto& scratch = conv_scratch();
        std::vector<T>& g_t = scratch.a;  // [m][cout]
        g_t.assign(static_cast<size_t>(m) * cout, T{0});
        for (int c = 0; c < cout; ++c) {
          for (int t = 0; t < m; ++t) g_t[static_cast<size_t>(t) * cout + c] = g.at(c, t);
        }
        if (want(n.a)) {
          // dIn[i, t] += sum_{c,k} ker[c,i,k] * g[c, t + d*k]
          std::vector<T>& ker_ci = scratch.b;  // [f][cout][cin], contiguous over cin
          std::vector<T>& din_t = scratch.c;   // [m][cin]
          ker_ci.assign(static_cast<size_t>(f) * cout * cin, T{0});
          din_t.assign(static_cast<size_t>(m) * cin, T{0});
          for (int c = 0; c < cout; ++c) {
            for (int i = 0; i < cin; ++i) {
              for (int k = 0; k < f; ++k) {
                ker_ci[(static_cast<size_t>(k) * cout + c) * cin + i] =
                    ker.data[(static_cast<size_t>(c) * cin + i) * f + k];
              }
            }
          }
          for (int t = 0; t < m; ++t) {
            T* drow = &din_t[static_cast<size_t>(t) * cin];
            for (int k = 0; k < f; ++k) {
              const int src = t + d * k;
              if (src >= m) break;
              const T* grow = &g_t[static_cast<size_t>(src) * cout];
              for (int c = 0; c < cout; ++c) {
                const T a = grow[c];
                const T* krow = &ker_ci[(static_cast<size_t>(k) * cout + c) * cin];
                for (int i = 0; i < cin; ++i) drow[i] += a * krow[i];
              }
            }
          }
          Tensor<T>& gin = gbuf(n.a);
          for (int i = 0; i < cin; ++i) {
            for (int t = 0; t < m; ++t) gin.at(i, t) += din_t[static_cast<size_t>(t) * cin + i];
          }
        }
        if (want(n.b)) {
          // dK[c,i,k] += sum_t g[c,t] * in[i, t - d*k]
          std::vector<T>& in_t = scratch.b;   // [m][cin]
          std::vector<T>& dk_t = scratch.d;   // [f][cin][cout]
          in_t.assign(static_cast<size_t>(m) * cin, T{0});
          dk_t.assign(static_cast<size_t>(f) * cin * cout, T{0});
          for (int i = 0; i < cin; ++i) {
            for (int t = 0; t < m; ++t) in_t[static_cast<size_t>(t) * cin + i] = in.at(i, t);
          }
          for (int t = 0; t < m; ++t) {
            const T* grow = &g_t[static_cast<size_t>(t) * cout];
            for (int k = 0; k < f; ++k) {
              const int src = t - d * k;
              if (src < 0) continue;
              const T* irow = &in_t[static_cast<size_t>(src) * cin];
              for (int i = 0; i < cin; ++i) {
                const T a = irow[i];
                T* krow = &dk_t[(static_cast<size_t>(k) * cin + i) * cout];
                for (int c = 0; c < cout; ++c) krow[c] += a * grow[c];
              }
            }
          }
          Tensor<T>& gker = gbuf(n.b);
          for (int c = 0; c < cout; ++c) {
            for (int i = 0; i < cin; ++i) {
              for (int k = 0; k < f; ++k) {
                gker.data[(static_cast<size_t>(c) * cin + i) * f + k] +=
                    dk_t[(static_cast<size_t>(k) * cin + i) * cout + c];
              }
            }
          }
        }
        if (want(n.c)) {
          Tensor<T>& gb = gbuf(n.c);
          for (int c = 0; c < cout; ++c) {
            const T* grow = &g.data[static_cast<size_t>(c) * m];
            T acc = 0;
            for (int t = 0; t < m; ++t) acc += grow[t];
            gb[static_cast<size_t>(c)] += acc;
          }
        }
        break;
      }
      case Op::LayerNorm: {
        const Tensor<T>& gain = nodes_[static_cast<size_t>(n.b)].value;
        const Tensor<T>& xhat = n.aux;
        const Tensor<T>& inv_std = n.aux2;
        const int c = n.value.dim(0), m = n.value.dim(1);
        if (want(n.b)) {
          Tensor<T>& gg = gbuf(n.b);
          for (int ch = 0; ch < c; ++ch) {
            T acc = 0;
            for (int t = 0; t < m; ++t) acc += g.at(ch, t) * xhat.at(ch, t);
            gg[static_cast<size_t>(ch)] += acc;
          }
        }
        if (want(n.c)) {
          Tensor<T>& gb = gbuf(n.c);
          for (int ch = 0; ch < c; ++ch) {
            T acc = 0;
            for (int t = 0; t < m; ++t) acc += g.at(ch, t);
            gb[static_cast<size_t>(ch)] += acc;
          }
        }
        if (want(n.a)) {
          Tensor<T>& gx = gbuf(n.a);
          for (int t = 0; t < m; ++t) {
            T mean_u = 0, mean_ux = 0;
            for (int ch = 0; ch < c; ++ch) {
              const T u = g.at(ch, t) * gain[static_cast<size_t>(ch)];
              mean_u += u;
              mean_ux += u * xhat.at(ch, t);
            }
            mean_u /= static_cast<T>(c);
            mean_ux /= static_cast<T>(c);
            const T inv = inv_std[static_cast<size_t>(t)];
            for (int ch = 0; ch < c; ++ch) {
              const T u = g.at(ch, t) * gain[static_cast<size_t>(ch)];
              gx.at(ch, t) += inv * (u - mean_u - xhat.at(ch, t) * mean_ux);
            }
          }
        }
        break;
      }
      case Op::WeightNorm: {
        const Tensor<T>& v = nodes_[static_cast<size_t>(n.a)].value;
        const Tensor<T>& mag = nodes_[static_cast<size_t>(n.b)].value;
        const Tensor<T>& norms = n.aux;
        const int cout = v.dim(0);
        const size_t rest = v.numel() / static_cast<size_t>(cout);
        for (int c = 0; c < cout; ++c) {
          const T* vrow = &v.data[static_cast<size_t>(c) * rest];
          const T* grow = &g.data[static_cast<size_t>(c) * rest];
          const T norm = norms[static_cast<size_t>(c)];
          T dot = 0;
          for (size_t i = 0; i < rest; ++i) dot += vrow[i] * grow[i];
          if (want(n.b)) gbuf(n.b)[static_cast<size_t>(c)] += dot / norm;
          if (want(n.a)) {
            Tensor<T>& gv = gbuf(n.a);
            T* gvrow = &gv.data[static_cast<size_t>(c) * rest];
            const T gc = mag[static_cast<size_t>(c)];
            const T k1 = gc / norm;
            const T k2 = gc * dot / (norm * norm * norm);
            for (size_t i = 0; i < rest; ++i) gvrow[i] += k1 * grow[i] - k2 * vrow[i];
          }
        }
        break;
      }
      case Op::Dropout: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          const Tensor<T>& mask = n.aux;
          for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * mask[i];
        }
        break;
      }
      case Op::Gap: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          const int c = ga.dim(0), m = ga.dim(1);
          for (int ch = 0; ch < c; ++ch) {
            const T gc = g[static_cast<size_t>(ch)] / static_cast<T>(m);
            for (int t = 0; t < m; ++t) ga.at(ch, t) += gc;
          }
        }
        break;
      }
      case Op::MseLoss: {
        const Tensor<T>& p = nodes_[static_cast<size_t>(n.a)].value;
        const Tensor<T>& tgt = nodes_[static_cast<size_t>(n.b)].value;
        const T k = T{2} * g[0] / n.s0;
        if (want(n.a)) {
          Tensor<T>& gp = gbuf(n.a);
          for (size_t i = 0; i < p.numel(); ++i) gp[i] += k * (p[i] - tgt[i]);
        }
        if (want(n.b)) {
          Tensor<T>& gt = gbuf(n.b);
          for (size_t i = 0; i < p.numel(); ++i) gt[i] -= k * (p[i] - tgt[i]);
        }
        break;
      }
      case Op::SumAll: {
        if (want(n.a)) {
          Tensor<T>& ga = gbuf(n.a);
          for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
        }
        break;
      }
    }
  }

  // Reused time-major work buffers for the convolution kernels. A tape is
  // single-threaded, so plain members suffice.
  struct ConvScratch {
    std::vector<T> a, b, c, d;
  };
  ConvScratch& conv_scratch() { return scratch_; }

  std::vector<Node> nodes_;
  ConvScratch scratch_;
  bool backward_done_ = false;
};

// Free-function spellings used throughout the model code.
template <typename T> Var add(Tape<T>& t, Var a, Var b) { return t.add(a, b); }
template <typename T> Var mul(Tape<T>& t, Var a, Var b) { return t.mul(a, b); }
template <typename T> Var scale(Tape<T>& t, Var x, Var s) { return t.scale(x, s); }
template <typename T> Var scale(Tape<T>& t, Var x, T k) { return t.scale(x, k); }
template <typename T> Var tanh_act(Tape<T>& t, Var x) { return t.tanh_act(x); }
template <typename T> Var sigmoid_act(Tape<T>& t, Var x) { return t.sigmoid_act(x); }
template <typename T> Var relu_act(Tape<T>& t, Var x) { return t.relu_act(x); }
template <typename T> Var conv1d_causal(Tape<T>& t, Var in, Var ker, Var bias, int dilation) {
  return t.conv1d_causal(in, ker, bias, dilation);
}
template <typename T> Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias) {
  return t.layer_norm(x, gain, bias);
}
template <typename T> Var weight_norm_reparam(Tape<T>& t, Var dir, Var mag) {
  return t.weight_norm_reparam(dir, mag);
}
template <typename T> Var dropout(Tape<T>& t, Var x, double p, bool training, Rng& rng) {
  return t.dropout(x, p, training, rng);
}
template <typename T> Var global_avg_pool(Tape<T>& t, Var x) { return t.global_avg_pool(x); }
template <typename T> Var mse_loss(Tape<T>& t, Var pred, Var target) {
  return t.mse_loss(pred, target);
}
template <typename T> Var sum_all(Tape<T>& t, Var x) { return t.sum_all(x); }

}  // namespace tcmp

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tcmp/autograd.hpp"
#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/rng.hpp"
#include "tcmp/tensor.hpp"

namespace tcmp {

// How the learned mix between the final block output and the aggregated
// skips is configured. The fixed modes exist for the ablation arms.
enum class AlphaMode : int { Learned = 0, FinalOnly = 1, SkipOnly = 2 };

inline const char* alpha_mode_name(AlphaMode m) {
  switch (m) {
    case AlphaMode::Learned: return "learned";
    case AlphaMode::FinalOnly: return "final_only";
    case AlphaMode::SkipOnly: return "skip_only";
  }
  return "learned";
}

inline AlphaMode alpha_mode_from_name(const std::string& s) {
  if (s == "learned") return AlphaMode::Learned;
  if (s == "final_only") return AlphaMode::FinalOnly;
  if (s == "skip_only") return AlphaMode::SkipOnly;
  throw InvalidInput("unknown alpha mode: " + s);
}

struct NetConfig {
  int num_blocks = 2;        // K
  int layers_per_block = 4;  // L
  int channels = 64;
  int kernel_size = 2;  // F
  double dropout_p = 0.2;
  int max_context = 16;
  int input_dim = 8;
  int output_dim = 4;
  AlphaMode alpha_mode = AlphaMode::Learned;

  void validate() const {
    if (num_blocks < 1 || layers_per_block < 1 || kernel_size < 1) {
      throw InvalidInput("NetConfig: num_blocks, layers_per_block, kernel_size must be >= 1");
    }
    if (channels < output_dim) throw InvalidInput("NetConfig: channels must be >= output_dim");
    if (max_context < 4) throw InvalidInput("NetConfig: max_context must be >= 4");
    if (input_dim < 1 || output_dim < 1) throw InvalidInput("NetConfig: bad input/output dims");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidInput("NetConfig: dropout_p in [0,1)");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// 1 + (F-1) * sum of dilations: the number of most-recent input positions
// that can influence the newest output position.
inline int receptive_field_for(int kernel_size, const std::vector<int>& dilations) {
  int sum = 0;
  for (int d : dilations) sum += d;
  return 1 + (kernel_size - 1) * sum;
}

inline std::vector<int> dilation_schedule(const NetConfig& cfg) {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(cfg.num_blocks) * cfg.layers_per_block);
  for (int k = 0; k < cfg.num_blocks; ++k) {
    for (int l = 0; l < cfg.layers_per_block; ++l) out.push_back(1 << l);
  }
  return out;
}

inline int receptive_field(const NetConfig& cfg) {
  return receptive_field_for(cfg.kernel_size, dilation_schedule(cfg));
}

// All learned state plus the index bundles that name each parameter's role.
// Convolution kernels are stored in weight-norm form (direction + per-output
// magnitude); the effective kernel is rebuilt on every forward pass.
template <typename T>
struct TcmpModelT {
  struct ConvRef {
    int dir = -1, mag = -1, bias = -1;
    int cin = 0, cout = 0, f = 0;
    int stage_slot = -1;  // index into KernelStage::kernels
  };
  struct NormRef {
    int gain = -1, bias = -1;
  };
  struct LayerRef {
    ConvRef filter, gate, skip, out;
    NormRef norm;
    int dilation = 1;
  };

  NetConfig config;
  std::vector<Parameter<T>> params;
  ConvRef input_conv;
  NormRef input_norm;
  std::vector<LayerRef> layers;
  ConvRef head1, head2;
  int alpha_idx = -1;
  int conv_count = 0;

  T alpha() const { return params[static_cast<size_t>(alpha_idx)].value[0]; }

  void zero_grads() {
    for (auto& p : params) p.zero_grad();
  }

  std::vector<const ConvRef*> conv_refs() const {
    std::vector<const ConvRef*> out{&input_conv};
    for (const auto& layer : layers) {
      out.push_back(&layer.filter);
      out.push_back(&layer.gate);
      out.push_back(&layer.skip);
      out.push_back(&layer.out);
    }
    out.push_back(&head1);
    out.push_back(&head2);
    return out;
  }
};

using TcmpModel = TcmpModelT<float>;

namespace detail {

template <typename T>
typename TcmpModelT<T>::ConvRef make_conv(TcmpModelT<T>& model, const std::string& name, int cin,
                                          int cout, int f, Rng& rng) {
  typename TcmpModelT<T>::ConvRef ref;
  ref.cin = cin;
  ref.cout = cout;
  ref.f = f;
  ref.stage_slot = model.conv_count++;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * f);
  Tensor<T> dir({cout, cin, f});
  for (auto& v : dir.data) v = static_cast<T>(rng.uniform(-bound, bound));
  // Magnitude starts at the direction norm so the initial effective kernel
  // equals the sampled direction.
  Tensor<T> mag({cout});
  const size_t rest = static_cast<size_t>(cin) * f;
  for (int c = 0; c < cout; ++c) {
    T sq = 0;
    for (size_t i = 0; i < rest; ++i) {
      const T v = dir.data[static_cast<size_t>(c) * rest + i];
      sq += v * v;
    }
    mag[static_cast<size_t>(c)] = std::sqrt(sq);
  }
  ref.dir = static_cast<int>(model.params.size());
  model.params.emplace_back(name + ".dir", std::move(dir));
  ref.mag = static_cast<int>(model.params.size());
  model.params.emplace_back(name + ".mag", std::move(mag));
  ref.bias = static_cast<int>(model.params.size());
  model.params.emplace_back(name + ".bias", Tensor<T>({cout}));
  return ref;
}

template <typename T>
typename TcmpModelT<T>::NormRef make_norm(TcmpModelT<T>& model, const std::string& name, int c) {
  typename TcmpModelT<T>::NormRef ref;
  ref.gain = static_cast<int>(model.params.size());
  model.params.emplace_back(name + ".gain", Tensor<T>({c}, T{1}));
  ref.bias = static_cast<int>(model.params.size());
  model.params.emplace_back(name + ".bias", Tensor<T>({c}));
  return ref;
}

}  // namespace detail

template <typename T = float>
TcmpModelT<T> make_model(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  TcmpModelT<T> model;
  model.config = cfg;
  model.input_conv = detail::make_conv(model, "input_conv", cfg.input_dim, cfg.channels, 1, rng);
  model.input_norm = detail::make_norm(model, "input_norm", cfg.channels);
  for (int k = 0; k < cfg.num_blocks; ++k) {
    for (int l = 0; l < cfg.layers_per_block; ++l) {
      const std::string base = "block" + std::to_string(k) + ".layer" + std::to_string(l);
      typename TcmpModelT<T>::LayerRef layer;
      layer.dilation = 1 << l;
      layer.filter =
          detail::make_conv(model, base + ".filter", cfg.channels, cfg.channels, cfg.kernel_size, rng);
      layer.gate =
          detail::make_conv(model, base + ".gate", cfg.channels, cfg.channels, cfg.kernel_size, rng);
      layer.skip = detail::make_conv(model, base + ".skip", cfg.channels, cfg.channels, 1, rng);
      layer.out = detail::make_conv(model, base + ".out", cfg.channels, cfg.channels, 1, rng);
      layer.norm = detail::make_norm(model, base + ".norm", cfg.channels);
      model.layers.push_back(layer);
    }
  }
  model.head1 = detail::make_conv(model, "head1", cfg.channels, cfg.channels, 1, rng);
  model.head2 = detail::make_conv(model, "head2", cfg.channels, cfg.output_dim, 1, rng);
  model.alpha_idx = static_cast<int>(model.params.size());
  T alpha_init = T{0.5};
  bool alpha_trainable = true;
  if (cfg.alpha_mode == AlphaMode::FinalOnly) {
    alpha_init = T{1};
    alpha_trainable = false;
  } else if (cfg.alpha_mode == AlphaMode::SkipOnly) {
    alpha_init = T{0};
    alpha_trainable = false;
  }
  model.params.emplace_back("alpha", Tensor<T>::scalar(alpha_init), alpha_trainable);
  return model;
}

// Effective (weight-normalized) kernels shared by every sample of a batch.
// The reparameterization does not depend on the input, so it is computed
// once per optimizer step; kernel gradients accumulate here and a single
// weight-norm VJP per batch maps them back onto direction/magnitude (the
// VJP is linear in the kernel gradient, so this matches per-sample
// application exactly up to rounding).
template <typename T>
struct KernelStage {
  std::vector<Parameter<T>> kernels;
};

template <typename T>
void weight_norm_apply(const Tensor<T>& dir, const Tensor<T>& mag, Tensor<T>& out) {
  const int cout = dir.dim(0);
  const size_t rest = dir.numel() / static_cast<size_t>(cout);
  out = dir;
  for (int c = 0; c < cout; ++c) {
    const T* src = &dir.data[static_cast<size_t>(c) * rest];
    T sq = 0;
    for (size_t i = 0; i < rest; ++i) sq += src[i] * src[i];
    const T norm = std::sqrt(sq);
    if (!(norm > T{0})) throw InvalidState("weight_norm: zero-norm direction");
    const T k = mag[static_cast<size_t>(c)] / norm;
    T* dst = &out.data[static_cast<size_t>(c) * rest];
    for (size_t i = 0; i < rest; ++i) dst[i] = k * src[i];
  }
}

template <typename T>
void weight_norm_vjp(const Tensor<T>& dir, const Tensor<T>& mag, const Tensor<T>& dkernel,
                     Tensor<T>& ddir, Tensor<T>& dmag) {
  const int cout = dir.dim(0);
  const size_t rest = dir.numel() / static_cast<size_t>(cout);
  for (int c = 0; c < cout; ++c) {
    const T* vrow = &dir.data[static_cast<size_t>(c) * rest];
    const T* grow = &dkernel.data[static_cast<size_t>(c) * rest];
    T sq = 0;
    for (size_t i = 0; i < rest; ++i) sq += vrow[i] * vrow[i];
    const T norm = std::sqrt(sq);
    T dot = 0;
    for (size_t i = 0; i < rest; ++i) dot += vrow[i] * grow[i];
    dmag[static_cast<size_t>(c)] += dot / norm;
    const T gc = mag[static_cast<size_t>(c)];
    const T k1 = gc / norm;
    const T k2 = gc * dot / (norm * norm * norm);
    T* drow = &ddir.data[static_cast<size_t>(c) * rest];
    for (size_t i = 0; i < rest; ++i) drow[i] += k1 * grow[i] - k2 * vrow[i];
  }
}

template <typename T>
KernelStage<T> stage_kernels(const TcmpModelT<T>& model) {
  KernelStage<T> stage;
  stage.kernels.reserve(static_cast<size_t>(model.conv_count));
  for (const auto* ref : model.conv_refs()) {
    Tensor<T> w;
    weight_norm_apply(model.params[static_cast<size_t>(ref->dir)].value,
                      model.params[static_cast<size_t>(ref->mag)].value, w);
    stage.kernels.emplace_back("staged_kernel", std::move(w));
  }
  return stage;
}

// Maps the accumulated kernel gradients back onto direction/magnitude grads.
template <typename T>
void unstage_kernel_grads(TcmpModelT<T>& model, const KernelStage<T>& stage) {
  for (const auto* ref : model.conv_refs()) {
    const auto& staged = stage.kernels[static_cast<size_t>(ref->stage_slot)];
    weight_norm_vjp(model.params[static_cast<size_t>(ref->dir)].value,
                    model.params[static_cast<size_t>(ref->mag)].value, staged.grad,
                    model.params[static_cast<size_t>(ref->dir)].grad,
                    model.params[static_cast<size_t>(ref->mag)].grad);
  }
}

// Intermediate features of one forward pass (tape-level).
struct ForwardVars {
  Var final_block = -1;  // z^K, pre-GAP
  Var skip_sum = -1;     // aggregated skips
  Var mixed = -1;        // alpha-blend, pre-GAP
  Var prediction = -1;   // [output_dim]
};

// Value-level copy of the interesting intermediates.
template <typename T>
struct ForwardTraceT {
  Tensor<T> final_block;
  Tensor<T> skip_sum;
  Tensor<T> mixed;
  Tensor<T> prediction;
};

using ForwardTrace = ForwardTraceT<float>;

namespace detail {

template <typename T>
Var apply_conv(Tape<T>& tape, TcmpModelT<T>& model, const typename TcmpModelT<T>::ConvRef& ref,
               Var input, int dilation, KernelStage<T>* stage) {
  Var w;
  if (stage != nullptr) {
    w = tape.param(stage->kernels[static_cast<size_t>(ref.stage_slot)]);
  } else {
    w = tape.weight_norm_reparam(tape.param(model.params[static_cast<size_t>(ref.dir)]),
                                 tape.param(model.params[static_cast<size_t>(ref.mag)]));
  }
  return tape.conv1d_causal(input, w, tape.param(model.params[static_cast<size_t>(ref.bias)]),
                            dilation);
}

template <typename T>
Var apply_norm(Tape<T>& tape, TcmpModelT<T>& model, const typename TcmpModelT<T>::NormRef& ref,
               Var input) {
  return tape.layer_norm(input, tape.param(model.params[static_cast<size_t>(ref.gain)]),
                         tape.param(model.params[static_cast<size_t>(ref.bias)]));
}

template <typename T>
Tensor<T> window_to_tensor(const ContextWindow& window) {
  const int m = static_cast<int>(window.length());
  Tensor<T> x({8, m});
  for (int t = 0; t < m; ++t) {
    const ContextEntry& e = window.entries[static_cast<size_t>(t)];
    for (int j = 0; j < 8; ++j) x.at(j, t) = static_cast<T>(e[static_cast<size_t>(j)]);
  }
  return x;
}

}  // namespace detail

// Full pipeline on an existing tape. Windows longer than max_context are
// truncated to their newest entries first (the surviving oldest entry's
// motion becomes zero, the same encoding a fresh trajectory start gets).
// When a KernelStage is supplied, the pre-reparameterized kernels are used
// and kernel gradients accumulate on the stage instead of direction and
// magnitude.
template <typename T>
ForwardVars forward_on_tape(Tape<T>& tape, TcmpModelT<T>& model, const ContextWindow& window,
                            bool training, Rng& rng, KernelStage<T>* stage = nullptr) {
  if (window.empty()) throw InvalidInput("forward: empty context window");
  const NetConfig& cfg = model.config;
  const ContextWindow local = window.tail(static_cast<size_t>(cfg.max_context));

  Var h = tape.constant(detail::window_to_tensor<T>(local));
  h = detail::apply_conv(tape, model, model.input_conv, h, 1, stage);
  h = detail::apply_norm(tape, model, model.input_norm, h);
  h = tape.relu_act(h);
  h = tape.dropout(h, cfg.dropout_p, training, rng);

  static const T kInvSqrt2 = static_cast<T>(1.0 / std::sqrt(2.0));
  Var skip_sum = -1;
  for (auto& layer : model.layers) {
    const Var filt = detail::apply_conv(tape, model, layer.filter, h, layer.dilation, stage);
    const Var gate = detail::apply_conv(tape, model, layer.gate, h, layer.dilation, stage);
    const Var gated = tape.mul(tape.tanh_act(filt), tape.sigmoid_act(gate));
    const Var skip = detail::apply_conv(tape, model, layer.skip, gated, 1, stage);
    skip_sum = skip_sum < 0 ? skip : tape.add(skip_sum, skip);
    const Var residual = tape.scale(
        tape.add(detail::apply_conv(tape, model, layer.out, gated, 1, stage), h), kInvSqrt2);
    h = detail::apply_norm(tape, model, layer.norm, residual);
    h = tape.relu_act(h);
    h = tape.dropout(h, cfg.dropout_p, training, rng);
  }

  ForwardVars vars;
  vars.final_block = h;
  vars.skip_sum = skip_sum;

  Var alpha;
  if (cfg.alpha_mode == AlphaMode::Learned) {
    alpha = tape.param(model.params[static_cast<size_t>(model.alpha_idx)]);
  } else {
    alpha = tape.constant(Tensor<T>::scalar(model.alpha()));
  }
  const Var one_minus_alpha = tape.affine(alpha, T{-1}, T{1});
  vars.mixed = tape.add(tape.scale(vars.final_block, alpha), tape.scale(vars.skip_sum, one_minus_alpha));

  Var y = tape.relu_act(vars.mixed);
  y = detail::apply_conv(tape, model, model.head1, y, 1, stage);
  y = tape.relu_act(y);
  y = detail::apply_conv(tape, model, model.head2, y, 1, stage);
  vars.prediction = tape.global_avg_pool(y);
  return vars;
}

template <typename T>
ForwardTraceT<T> forward(TcmpModelT<T>& model, const ContextWindow& window, bool training,
                         Rng& rng) {
  Tape<T> tape;
  const ForwardVars vars = forward_on_tape(tape, model, window, training, rng);
  ForwardTraceT<T> trace;
  trace.final_block = tape.value(vars.final_block);
  trace.skip_sum = tape.value(vars.skip_sum);
  trace.mixed = tape.value(vars.mixed);
  trace.prediction = tape.value(vars.prediction);
  return trace;
}

// Deterministic eval-mode prediction in normalized units.
template <typename T>
std::array<double, 4> predict_motion_normalized(TcmpModelT<T>& model, const ContextWindow& window,
                                                KernelStage<T>* stage = nullptr) {
  Rng unused(0);
  Tape<T> tape;
  const ForwardVars vars = forward_on_tape(tape, model, window, /*training=*/false, unused, stage);
  const Tensor<T>& p = tape.value(vars.prediction);
  return {static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2]),
          static_cast<double>(p[3])};
}

// Eval-mode prediction denormalized to pixel deltas.
template <typename T>
MotionDelta predict_motion(TcmpModelT<T>& model, const ContextWindow& window,
                           const ImageGeometry& geom, KernelStage<T>* stage = nullptr) {
  const auto p = predict_motion_normalized(model, window, stage);
  return denormalize_delta(p[0], p[1], p[2], p[3], geom);
}

// Next-frame box from a pixel-space history.
template <typename T>
BoundingBox predict_next_box(TcmpModelT<T>& model, const std::vector<BoundingBox>& history,
                             const ImageGeometry& geom, KernelStage<T>* stage = nullptr) {
  if (history.empty()) throw InvalidInput("predict_next_box: empty history");
  const ContextWindow window = build_context(history, geom);
  return apply_motion(history.back(), predict_motion(model, window, geom, stage));
}

template <typename T>
struct WindowTarget {
  ContextWindow window;
  std::array<T, 4> target;  // normalized next-frame motion
};

// Mean over the batch of per-sample squared-error sums, eval mode.
template <typename T>
double batch_loss(TcmpModelT<T>& model, const std::vector<WindowTarget<T>>& batch) {
  if (batch.empty()) throw InvalidInput("batch_loss: empty batch");
  Rng unused(0);
  double total = 0;
  for (const auto& sample : batch) {
    Tape<T> tape;
    const ForwardVars vars = forward_on_tape(tape, model, sample.window, false, unused);
    const Tensor<T>& p = tape.value(vars.prediction);
    double acc = 0;
    for (int i = 0; i < 4; ++i) {
      const double d = static_cast<double>(p[static_cast<size_t>(i)]) -
                       static_cast<double>(sample.target[static_cast<size_t>(i)]);
      acc += d * d;
    }
    total += acc;
  }
  return total / static_cast<double>(batch.size());
}

template <typename T>
long count_params(const TcmpModelT<T>& model) {
  long n = 0;
  for (const auto& p : model.params) n += static_cast<long>(p.value.numel());
  return n;
}

// Forward-pass FLOPs at context length m. Convention: one multiply-accumulate
// counts as 2 FLOPs; convolutions and head only, norms and activations
// excluded. cmd_inspect prints the convention next to the number.
inline constexpr const char* kFlopConvention = "mac=2, convolutions and head only";

template <typename T>
long count_flops(const TcmpModelT<T>& model, int m) {
  if (m < 1) throw InvalidInput("count_flops: context length must be >= 1");
  auto conv_flops = [m](const typename TcmpModelT<T>::ConvRef& c) {
    return 2L * c.cin * c.cout * c.f * m;
  };
  long total = conv_flops(model.input_conv);
  for (const auto& layer : model.layers) {
    total += conv_flops(layer.filter) + conv_flops(layer.gate) + conv_flops(layer.skip) +
             conv_flops(layer.out);
  }
  total += conv_flops(model.head1) + conv_flops(model.head2);
  return total;
}

}  // namespace tcmp

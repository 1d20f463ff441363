#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcmp/adam.hpp"
#include "tcmp/augment.hpp"
#include "tcmp/checkpoint.hpp"
#include "tcmp/dataset.hpp"
#include "tcmp/net.hpp"
#include "tcmp/parallel.hpp"
#include "tcmp/rng.hpp"

namespace tcmp {

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 30;
  uint64_t seed = 0;
  int max_context = 16;
  bool augment = true;
  NoiseSpec noise;
  TruncationSpec truncation;
  double validation_fraction = 0.1;
  int threads = 0;  // 0 = default_thread_count()

  void validate() const {
    if (batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw InvalidInput("TrainConfig: epochs must be >= 0");
    if (!(learning_rate > 0)) throw InvalidInput("TrainConfig: learning_rate must be > 0");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw InvalidInput("TrainConfig: validation_fraction in [0, 1)");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epsilon", c.epsilon},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"max_context", c.max_context},
       {"augment", c.augment},
       {"noise_mean", c.noise.mean},
       {"noise_stddev", c.noise.stddev},
       {"truncation_min_len", c.truncation.min_len},
       {"validation_fraction", c.validation_fraction},
       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig defaults;
  c.batch_size = j.value("batch_size", defaults.batch_size);
  c.learning_rate = j.value("learning_rate", defaults.learning_rate);
  c.beta1 = j.value("beta1", defaults.beta1);
  c.beta2 = j.value("beta2", defaults.beta2);
  c.epsilon = j.value("epsilon", defaults.epsilon);
  c.epochs = j.value("epochs", defaults.epochs);
  c.seed = j.value("seed", defaults.seed);
  c.max_context = j.value("max_context", defaults.max_context);
  c.augment = j.value("augment", defaults.augment);
  c.noise.mean = j.value("noise_mean", defaults.noise.mean);
  c.noise.stddev = j.value("noise_stddev", defaults.noise.stddev);
  c.truncation.min_len = j.value("truncation_min_len", defaults.truncation.min_len);
  c.validation_fraction = j.value("validation_fraction", defaults.validation_fraction);
  c.threads = j.value("threads", defaults.threads);
}

struct TrainReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch
  std::vector<double> alpha;       // per epoch
  double final_alpha = 0.5;
  double best_val_loss = 0;
  int best_epoch = -1;
  double wall_clock_sec = 0;
  std::string checkpoint_path;
};

inline void to_json(nlohmann::json& j, const TrainReport& r) {
  j = {{"train_loss", r.train_loss},   {"val_loss", r.val_loss},
       {"alpha", r.alpha},             {"final_alpha", r.final_alpha},
       {"best_val_loss", r.best_val_loss}, {"best_epoch", r.best_epoch},
       {"wall_clock_sec", r.wall_clock_sec}, {"checkpoint_path", r.checkpoint_path}};
}

namespace detail {

// Parallel eval-mode loss; per-sample losses land in an index-addressed
// array, so the reduction order (and hence the result) does not depend on
// the thread count.
inline double parallel_batch_loss(TcmpModel& model, const std::vector<WindowTarget<float>>& set,
                                  int threads) {
  if (set.empty()) throw InvalidInput("batch_loss: empty batch");
  std::vector<double> losses(set.size(), 0.0);
  KernelStage<float> stage = stage_kernels(model);  // shared read-only
  parallel_chunks(set.size(), threads, [&](int, size_t begin, size_t end) {
    Rng unused(0);
    for (size_t s = begin; s < end; ++s) {
      Tape<float> tape;
      const ForwardVars vars = forward_on_tape(tape, model, set[s].window, false, unused, &stage);
      const Tensor<float>& p = tape.value(vars.prediction);
      double acc = 0;
      for (int i = 0; i < 4; ++i) {
        const double d = static_cast<double>(p[static_cast<size_t>(i)]) -
                         static_cast<double>(set[s].target[static_cast<size_t>(i)]);
        acc += d * d;
      }
      losses[s] = acc;
    }
  });
  double total = 0;
  for (double l : losses) total += l;
  return total / static_cast<double>(set.size());
}

template <typename T>
std::vector<WindowTarget<T>> to_window_targets(const WindowDataset& ds,
                                               const std::vector<size_t>& indices) {
  std::vector<WindowTarget<T>> out;
  out.reserve(indices.size());
  for (size_t i : indices) {
    WindowTarget<T> wt;
    wt.window = ds[i].window;
    for (int k = 0; k < 4; ++k) {
      wt.target[static_cast<size_t>(k)] = static_cast<T>(ds[i].target[static_cast<size_t>(k)]);
    }
    out.push_back(std::move(wt));
  }
  return out;
}

}  // namespace detail

// Shuffled mini-batch training with the two training-time augmentations
// applied per batch, Adam updates, and a best-validation checkpoint.
// Deterministic for a fixed (seed, data, thread count): per-batch and
// per-sample RNG streams are keyed by (seed, epoch, batch, sample), worker
// chunks are static, and gradients are merged in chunk order.
inline TrainReport train(TcmpModel& model, const WindowDataset& dataset, const TrainConfig& config,
                         const std::filesystem::path& checkpoint_path = {}) {
  config.validate();
  if (dataset.empty()) throw InvalidInput("train: empty dataset");
  const auto t_start = std::chrono::steady_clock::now();
  const int threads = config.threads > 0 ? config.threads : default_thread_count();

  Rng master(config.seed);

  // Deterministic train/validation split.
  std::vector<size_t> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = master.child(1);
  split_rng.shuffle(order);
  size_t val_count = static_cast<size_t>(std::floor(
      config.validation_fraction * static_cast<double>(dataset.size())));
  if (val_count >= dataset.size()) val_count = dataset.size() - 1;
  std::vector<size_t> train_idx(order.begin(), order.end() - static_cast<ptrdiff_t>(val_count));
  std::vector<size_t> val_idx(order.end() - static_cast<ptrdiff_t>(val_count), order.end());
  // With no held-out samples, validation falls back to the train set.
  const auto val_set = detail::to_window_targets<float>(dataset, val_idx.empty() ? train_idx : val_idx);

  AdamState<float> adam;
  adam.learning_rate = config.learning_rate;
  adam.beta1 = config.beta1;
  adam.beta2 = config.beta2;
  adam.epsilon = config.epsilon;
  adam.init(model.params);

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  report.checkpoint_path = checkpoint_path.string();

  auto save_best = [&](int epoch, double val) {
    report.best_val_loss = val;
    report.best_epoch = epoch;
    if (!checkpoint_path.empty()) save_model(model, checkpoint_path);
  };

  if (config.epochs == 0 && !checkpoint_path.empty()) {
    save_model(model, checkpoint_path);  // checkpoint equals initialization
  }

  long global_batch = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng = master.child(2, static_cast<uint64_t>(epoch));
    epoch_rng.shuffle(train_idx);

    double epoch_loss_sum = 0;
    size_t epoch_samples = 0;
    for (size_t start = 0; start < train_idx.size(); start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(train_idx.size(), start + static_cast<size_t>(config.batch_size));
      const std::vector<size_t> batch_idx(train_idx.begin() + static_cast<ptrdiff_t>(start),
                                          train_idx.begin() + static_cast<ptrdiff_t>(end));
      auto batch = detail::to_window_targets<float>(dataset, batch_idx);
      const size_t bsz = batch.size();

      if (config.augment) {
        std::vector<ContextWindow> windows;
        windows.reserve(bsz);
        for (auto& s : batch) windows.push_back(std::move(s.window));
        Rng noise_rng = master.child(3, static_cast<uint64_t>(epoch), static_cast<uint64_t>(global_batch));
        add_noise(windows, config.noise, noise_rng);
        Rng trunc_rng = master.child(4, static_cast<uint64_t>(epoch), static_cast<uint64_t>(global_batch));
        random_truncate(windows, config.truncation, trunc_rng);
        for (size_t i = 0; i < bsz; ++i) batch[i].window = std::move(windows[i]);
      }

      model.zero_grads();
      const Rng sample_streams =
          master.child(5, static_cast<uint64_t>(epoch), static_cast<uint64_t>(global_batch));
      const float inv_batch = 1.0f / static_cast<float>(bsz);

      std::vector<double> sample_losses(bsz, 0.0);
      std::vector<TcmpModel> workers(static_cast<size_t>(threads));
      std::vector<KernelStage<float>> worker_stages(static_cast<size_t>(threads));
      parallel_chunks(bsz, threads, [&](int worker, size_t chunk_begin, size_t chunk_end) {
        TcmpModel& local = workers[static_cast<size_t>(worker)];
        local = model;
        local.zero_grads();
        KernelStage<float>& stage = worker_stages[static_cast<size_t>(worker)];
        stage = stage_kernels(local);
        for (size_t s = chunk_begin; s < chunk_end; ++s) {
          Rng sample_rng = sample_streams.child(static_cast<uint64_t>(s));
          Tape<float> tape;
          const ForwardVars vars =
              forward_on_tape(tape, local, batch[s].window, true, sample_rng, &stage);
          const Var target = tape.constant(
              Tensor<float>({4}, {batch[s].target[0], batch[s].target[1], batch[s].target[2],
                                  batch[s].target[3]}));
          const Var loss = tape.mse_loss(vars.prediction, target);
          sample_losses[s] = static_cast<double>(tape.value(loss)[0]);
          tape.backward(loss, inv_batch);
        }
      });
      // Merge worker gradients in chunk order, then fold the staged kernel
      // gradients back onto direction/magnitude.
      KernelStage<float> master_stage = stage_kernels(model);
      for (size_t w = 0; w < workers.size(); ++w) {
        if (workers[w].params.size() != model.params.size()) continue;  // idle worker
        for (size_t p = 0; p < model.params.size(); ++p) {
          auto& dst = model.params[p].grad.data;
          const auto& src = workers[w].params[p].grad.data;
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
        for (size_t k = 0; k < master_stage.kernels.size(); ++k) {
          auto& dst = master_stage.kernels[k].grad.data;
          const auto& src = worker_stages[w].kernels[k].grad.data;
          for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      unstage_kernel_grads(model, master_stage);

      double batch_loss_sum = 0;
      for (double l : sample_losses) batch_loss_sum += l;
      if (!std::isfinite(batch_loss_sum)) {
        throw DivergedTraining("train: non-finite loss", global_batch);
      }
      epoch_loss_sum += batch_loss_sum;
      epoch_samples += bsz;

      adam_step(model.params, adam);
      ++global_batch;
    }

    const double train_loss = epoch_loss_sum / static_cast<double>(epoch_samples);
    const double val_loss = detail::parallel_batch_loss(model, val_set, threads);
    report.train_loss.push_back(train_loss);
    report.val_loss.push_back(val_loss);
    report.alpha.push_back(static_cast<double>(model.alpha()));
    if (val_loss < report.best_val_loss) save_best(epoch, val_loss);
  }

  report.final_alpha = static_cast<double>(model.alpha());
  if (report.best_epoch < 0) {
    report.best_val_loss = config.epochs == 0 ? 0.0 : report.val_loss.back();
  }
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

// One-step prediction quality of a model over a window dataset.
struct PredictionMetrics {
  double ade_center = 0;    // mean Euclidean center displacement, pixels
  double box_iou_mean = 0;  // mean IoU of predicted vs true next box
  std::array<double, 4> rmse{};  // per (x, y, w, h), pixels
  size_t samples = 0;
};

// Generic core so tests can plug in oracle predictors; `predict` returns the
// normalized motion for a sample.
inline PredictionMetrics evaluate_prediction_with(
    const std::function<std::array<double, 4>(const WindowSample&)>& predict,
    const WindowDataset& dataset) {
  if (dataset.empty()) throw InvalidInput("evaluate_prediction: empty dataset");
  PredictionMetrics out;
  std::array<double, 4> sq_sum{};
  for (const WindowSample& s : dataset) {
    const auto p = predict(s);
    const MotionDelta pred_px = denormalize_delta(p[0], p[1], p[2], p[3], s.geometry);
    const MotionDelta true_px = denormalize_delta(s.target[0], s.target[1], s.target[2],
                                                  s.target[3], s.geometry);
    const BoundingBox pred_box = apply_motion(s.last_box, pred_px);
    const BoundingBox true_box = apply_motion(s.last_box, true_px);
    out.ade_center += std::hypot(pred_box.cx() - true_box.cx(), pred_box.cy() - true_box.cy());
    out.box_iou_mean += iou(pred_box, true_box);
    sq_sum[0] += (pred_px.dx - true_px.dx) * (pred_px.dx - true_px.dx);
    sq_sum[1] += (pred_px.dy - true_px.dy) * (pred_px.dy - true_px.dy);
    sq_sum[2] += (pred_px.dw - true_px.dw) * (pred_px.dw - true_px.dw);
    sq_sum[3] += (pred_px.dh - true_px.dh) * (pred_px.dh - true_px.dh);
  }
  const double n = static_cast<double>(dataset.size());
  out.ade_center /= n;
  out.box_iou_mean /= n;
  for (int i = 0; i < 4; ++i) out.rmse[static_cast<size_t>(i)] = std::sqrt(sq_sum[static_cast<size_t>(i)] / n);
  out.samples = dataset.size();
  return out;
}

inline PredictionMetrics evaluate_prediction(TcmpModel& model, const WindowDataset& dataset) {
  return evaluate_prediction_with(
      [&model](const WindowSample& s) { return predict_motion_normalized(model, s.window); },
      dataset);
}

}  // namespace tcmp

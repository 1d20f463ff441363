#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "tcmp/geometry.hpp"
#include "tcmp/kalman.hpp"
#include "tcmp/net.hpp"

namespace tcmp {

// Per-track motion model. predict() is side-effect-free; observe()/coast()
// advance internal state by exactly one frame (matched / unmatched).
class MotionPredictor {
 public:
  virtual ~MotionPredictor() = default;
  virtual BoundingBox predict(const std::vector<BoundingBox>& context) const = 0;
  virtual void observe(const BoundingBox& /*matched*/) {}
  virtual void coast() {}
};

using PredictorFactory =
    std::function<std::unique_ptr<MotionPredictor>(const BoundingBox& first_box)>;

class StaticPredictor final : public MotionPredictor {
 public:
  BoundingBox predict(const std::vector<BoundingBox>& context) const override {
    return static_predict(context);
  }
};

class TcmpPredictor final : public MotionPredictor {
 public:
  // The kernel stage precomputes the weight-normalized kernels once for the
  // frozen model; predictors only read it.
  TcmpPredictor(TcmpModel& model, const ImageGeometry& geom,
                std::shared_ptr<KernelStage<float>> stage = nullptr)
      : model_(&model), geom_(geom), stage_(std::move(stage)) {}

  BoundingBox predict(const std::vector<BoundingBox>& context) const override {
    return predict_next_box(*model_, context, geom_, stage_.get());
  }

 private:
  TcmpModel* model_;
  ImageGeometry geom_;
  std::shared_ptr<KernelStage<float>> stage_;
};

class KalmanPredictor final : public MotionPredictor {
 public:
  explicit KalmanPredictor(const BoundingBox& first, const KalmanNoise& noise = {})
      : state_(kf_init(first, noise)) {}

  BoundingBox predict(const std::vector<BoundingBox>&) const override {
    KalmanState scratch = state_;
    return kf_predict(scratch);
  }

  void observe(const BoundingBox& matched) override {
    kf_predict(state_);
    kf_update(state_, matched);
  }

  void coast() override { kf_predict(state_); }

  const KalmanState& state() const { return state_; }

 private:
  KalmanState state_;
};

inline PredictorFactory make_static_factory() {
  return [](const BoundingBox&) { return std::make_unique<StaticPredictor>(); };
}

inline PredictorFactory make_kalman_factory(const KalmanNoise& noise = {}) {
  return [noise](const BoundingBox& first) { return std::make_unique<KalmanPredictor>(first, noise); };
}

inline PredictorFactory make_tcmp_factory(TcmpModel& model, const ImageGeometry& geom) {
  auto stage = std::make_shared<KernelStage<float>>(stage_kernels(model));
  return [&model, geom, stage](const BoundingBox&) {
    return std::make_unique<TcmpPredictor>(model, geom, stage);
  };
}

// One-step-ahead prediction errors along a gapless trajectory: entry t-1
// holds the error of predicting frame t from frames [0, t).
struct OneStepErrors {
  std::vector<double> center_error;  // pixels
  std::vector<double> box_iou;
};

inline OneStepErrors one_step_errors(const PredictorFactory& factory,
                                     const std::vector<BoundingBox>& trajectory) {
  OneStepErrors out;
  if (trajectory.size() < 2) return out;
  auto predictor = factory(trajectory.front());
  std::vector<BoundingBox> history{trajectory.front()};
  for (size_t t = 1; t < trajectory.size(); ++t) {
    const BoundingBox pred = predictor->predict(history);
    const BoundingBox& truth = trajectory[t];
    out.center_error.push_back(std::hypot(pred.cx() - truth.cx(), pred.cy() - truth.cy()));
    out.box_iou.push_back(iou(pred, truth));
    predictor->observe(truth);
    history.push_back(truth);
  }
  return out;
}

}  // namespace tcmp

#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/hungarian.hpp"
#include "tcmp/predictor.hpp"

namespace tcmp {

struct Detection {
  BoundingBox box;
  double score = 0;
  int frame = 0;

  bool valid() const { return box.valid() && score >= 0.0 && score <= 1.0; }
};

enum class TrackState { Active, Lost, Removed };

struct Track {
  int id = 0;
  TrackState state = TrackState::Active;
  // Matched detections only; what the track reports as its trajectory.
  std::vector<BoundingBox> observations;
  // Observations plus coasted predictions at the tail; feeds the predictor.
  std::vector<BoundingBox> context;
  BoundingBox predicted_box;
  int miss_count = 0;
  std::unique_ptr<MotionPredictor> predictor;
};

struct TrackerConfig {
  double tau_high = 0.6;
  double tau_low = 0.4;
  double first_gate_iou = 0.3;
  double second_gate_iou = 0.4;
  int max_age = 30;  // 0 recovers immediate deletion of unmatched tracks

  void validate() const {
    if (!(tau_low >= 0.0 && tau_low < tau_high && tau_high <= 1.0)) {
      throw InvalidInput("TrackerConfig: need 0 <= tau_low < tau_high <= 1");
    }
    if (max_age < 0) throw InvalidInput("TrackerConfig: max_age must be >= 0");
  }
};

struct ScoreSplit {
  std::vector<Detection> high, low, discarded;
};

// Strict comparisons on both thresholds: scores equal to tau_high fall in
// neither band and are discarded.
inline ScoreSplit split_by_score(const std::vector<Detection>& dets, double tau_high,
                                 double tau_low) {
  ScoreSplit split;
  for (const Detection& d : dets) {
    if (d.score > tau_high) {
      split.high.push_back(d);
    } else if (d.score > tau_low && d.score < tau_high) {
      split.low.push_back(d);
    } else {
      split.discarded.push_back(d);
    }
  }
  return split;
}

// IoU association between predicted track boxes and detections: Hungarian on
// 1 - IoU, then pairs below the gate are demoted to unmatched.
inline Assignment associate(const std::vector<BoundingBox>& predicted,
                            const std::vector<Detection>& dets, double gate_iou) {
  if (predicted.empty() || dets.empty()) {
    Assignment a;
    for (int r = 0; r < static_cast<int>(predicted.size()); ++r) a.unmatched_rows.push_back(r);
    for (int c = 0; c < static_cast<int>(dets.size()); ++c) a.unmatched_cols.push_back(c);
    return a;
  }
  std::vector<std::vector<double>> cost(predicted.size(),
                                        std::vector<double>(dets.size(), 0.0));
  for (size_t r = 0; r < predicted.size(); ++r) {
    for (size_t c = 0; c < dets.size(); ++c) {
      cost[r][c] = 1.0 - iou(predicted[r], dets[c].box);
    }
  }
  Assignment a = hungarian(cost);
  std::vector<std::pair<int, int>> kept;
  for (auto [r, c] : a.matched) {
    if (iou(predicted[static_cast<size_t>(r)], dets[static_cast<size_t>(c)].box) >= gate_iou) {
      kept.emplace_back(r, c);
    } else {
      a.unmatched_rows.push_back(r);
      a.unmatched_cols.push_back(c);
    }
  }
  a.matched = std::move(kept);
  return a;
}

struct TrackOutput {
  int id = 0;
  BoundingBox box;
  double score = 0;
};

// Two-stage association tracker: high-scoring detections are matched against
// every live track first, low-scoring ones pick up the leftovers, unmatched
// high-scoring detections spawn tracks, and unmatched tracks coast on their
// own predictions until max_age expires.
class Tracker {
 public:
  Tracker(TrackerConfig config, PredictorFactory factory)
      : config_(config), factory_(std::move(factory)) {
    config_.validate();
  }

  // Processes one frame; frames must arrive in increasing order. Returns the
  // (id, box) pairs matched this frame.
  std::vector<TrackOutput> step(int frame, const std::vector<Detection>& detections) {
    if (last_frame_ >= 0 && frame <= last_frame_) {
      throw InvalidInput("Tracker::step: out-of-order frame index");
    }
    last_frame_ = frame;

    const ScoreSplit split = split_by_score(detections, config_.tau_high, config_.tau_low);

    // Motion prediction for every live track.
    std::vector<BoundingBox> predicted(tracks_.size());
    for (size_t i = 0; i < tracks_.size(); ++i) {
      tracks_[i].predicted_box = tracks_[i].predictor->predict(tracks_[i].context);
      predicted[i] = tracks_[i].predicted_box;
    }

    std::vector<TrackOutput> emitted;
    std::vector<char> track_matched(tracks_.size(), 0);

    // First association: all live tracks vs high-score detections. The
    // similarity hook would fuse appearance here; IoU only for now.
    const Assignment first = associate(predicted, split.high, config_.first_gate_iou);
    for (auto [r, c] : first.matched) {
      apply_match(tracks_[static_cast<size_t>(r)], split.high[static_cast<size_t>(c)], emitted);
      track_matched[static_cast<size_t>(r)] = 1;
    }

    // Second association: remaining tracks vs low-score detections, IoU only.
    std::vector<int> remaining;
    std::vector<BoundingBox> remaining_boxes;
    for (size_t i = 0; i < tracks_.size(); ++i) {
      if (!track_matched[i]) {
        remaining.push_back(static_cast<int>(i));
        remaining_boxes.push_back(predicted[i]);
      }
    }
    const Assignment second = associate(remaining_boxes, split.low, config_.second_gate_iou);
    for (auto [r, c] : second.matched) {
      const int ti = remaining[static_cast<size_t>(r)];
      apply_match(tracks_[static_cast<size_t>(ti)], split.low[static_cast<size_t>(c)], emitted);
      track_matched[static_cast<size_t>(ti)] = 1;
    }

    // Unmatched tracks coast or die.
    for (size_t i = 0; i < tracks_.size(); ++i) {
      if (track_matched[i]) continue;
      Track& t = tracks_[i];
      t.miss_count += 1;
      if (t.miss_count > config_.max_age) {
        t.state = TrackState::Removed;
        ++removed_count_;
      } else {
        t.state = TrackState::Lost;
        t.context.push_back(t.predicted_box);
        t.predictor->coast();
      }
    }
    std::erase_if(tracks_, [](const Track& t) { return t.state == TrackState::Removed; });

    // Unmatched high-score detections spawn tracks; they are not emitted
    // until their first match.
    for (int c : first.unmatched_cols) {
      spawn(split.high[static_cast<size_t>(c)]);
    }

    std::sort(emitted.begin(), emitted.end(),
              [](const TrackOutput& a, const TrackOutput& b) { return a.id < b.id; });
    return emitted;
  }

  const std::vector<Track>& tracks() const { return tracks_; }
  int removed_count() const { return removed_count_; }
  int next_id() const { return next_id_; }

 private:
  void apply_match(Track& t, const Detection& det, std::vector<TrackOutput>& emitted) {
    if (t.miss_count > 0) {
      // Replace the coasted tail with an interpolation between the last
      // observation and the matching detection; the track history stays
      // "matched detections only".
      const BoundingBox& from = t.observations.back();
      const BoundingBox& to = det.box;
      const int gaps = t.miss_count;
      const size_t tail_start = t.context.size() - static_cast<size_t>(gaps);
      for (int g = 1; g <= gaps; ++g) {
        const double a = static_cast<double>(g) / static_cast<double>(gaps + 1);
        t.context[tail_start + static_cast<size_t>(g - 1)] =
            BoundingBox{from.x + a * (to.x - from.x), from.y + a * (to.y - from.y),
                        from.w + a * (to.w - from.w), from.h + a * (to.h - from.h)};
      }
    }
    t.context.push_back(det.box);
    t.observations.push_back(det.box);
    t.miss_count = 0;
    t.state = TrackState::Active;
    t.predictor->observe(det.box);
    emitted.push_back({t.id, det.box, det.score});
  }

  void spawn(const Detection& det) {
    Track t;
    t.id = next_id_++;
    t.state = TrackState::Active;
    t.observations.push_back(det.box);
    t.context.push_back(det.box);
    t.predicted_box = det.box;
    t.predictor = factory_(det.box);
    tracks_.push_back(std::move(t));
  }

  TrackerConfig config_;
  PredictorFactory factory_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int last_frame_ = -1;
  int removed_count_ = 0;
};

}  // namespace tcmp

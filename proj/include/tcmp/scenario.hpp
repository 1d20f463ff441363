#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcmp/dataset.hpp"
#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/rng.hpp"
#include "tcmp/tracker.hpp"

namespace tcmp {

enum class MotionKind : int { Linear = 0, Sinusoidal = 1, SharpTurn = 2, StopGo = 3 };

inline const char* motion_kind_name(MotionKind k) {
  switch (k) {
    case MotionKind::Linear: return "linear";
    case MotionKind::Sinusoidal: return "sinusoidal";
    case MotionKind::SharpTurn: return "sharp_turn";
    case MotionKind::StopGo: return "stop_go";
  }
  return "linear";
}

inline MotionKind motion_kind_from_name(const std::string& s) {
  if (s == "linear") return MotionKind::Linear;
  if (s == "sinusoidal") return MotionKind::Sinusoidal;
  if (s == "sharp_turn") return MotionKind::SharpTurn;
  if (s == "stop_go") return MotionKind::StopGo;
  throw InvalidInput("unknown motion kind: " + s);
}

// Piecewise-analytic center motion; sizes change linearly via grow_rate.
struct MotionProgram {
  MotionKind kind = MotionKind::Linear;
  double vx = 0, vy = 0;
  double turn_angle_deg = 0;
  int turn_frame = 0;
  int stop_frame = 0, stop_duration = 0;
  double amplitude = 0, period = 40, phase = 0;
  double grow_rate = 0;  // px per frame added to w and h
};

struct ObjectSpec {
  int id = 0;
  BoundingBox start;  // box at appear_frame
  MotionProgram program;
  int appear_frame = 1;
  int disappear_frame = 0;  // 0 = lives until the last frame
};

// Detector failure scripted onto one object. Dropping is the default; with
// emit_low_score the detection survives but lands in the low band.
struct OcclusionWindow {
  int object_id = 0;
  int frame_begin = 0, frame_end = 0;  // inclusive
  bool emit_low_score = false;
};

// Score bands aligned with tau_high = 0.6 / tau_low = 0.4 so both
// association stages get exercised.
struct ScoreModel {
  double matched_lo = 0.7, matched_hi = 1.0;
  double clutter_lo = 0.41, clutter_hi = 0.6;
};

struct ScenarioSpec {
  ImageGeometry geometry{640, 480};
  int frame_count = 100;
  std::vector<ObjectSpec> objects;
  int randomize_objects = 0;  // > 0: synthesize this many programs from the seed
  double detection_noise_px = 0;
  double miss_probability = 0;
  double clutter_rate = 0;  // expected clutter boxes per frame
  std::vector<OcclusionWindow> occlusions;
  ScoreModel score_model;
  uint64_t seed = 0;

  void validate() const {
    if (frame_count < 2) throw InvalidInput("ScenarioSpec: frame_count must be >= 2");
    if (!geometry.valid()) throw InvalidInput("ScenarioSpec: invalid geometry");
    if (!(miss_probability >= 0 && miss_probability <= 1)) {
      throw InvalidInput("ScenarioSpec: miss_probability in [0, 1]");
    }
    if (detection_noise_px < 0 || clutter_rate < 0) {
      throw InvalidInput("ScenarioSpec: negative noise or clutter rate");
    }
  }
};

struct GtObject {
  int id = 0;
  int first_frame = 1;
  std::vector<BoundingBox> boxes;  // one per frame starting at first_frame
  std::vector<int> event_frames;   // frames where the velocity jumps
  bool clipped = false;

  bool present(int frame) const {
    return frame >= first_frame && frame < first_frame + static_cast<int>(boxes.size());
  }
  const BoundingBox& box_at(int frame) const {
    return boxes[static_cast<size_t>(frame - first_frame)];
  }
};

struct GroundTruthSet {
  ImageGeometry geometry;
  int frame_count = 0;
  std::vector<GtObject> objects;
  bool any_clipped = false;  // some program left the image and was clamped
};

namespace detail {

inline std::pair<double, double> program_center(const MotionProgram& p, double cx0, double cy0,
                                                int tau) {
  const double t = static_cast<double>(tau);
  switch (p.kind) {
    case MotionKind::Linear:
      return {cx0 + p.vx * t, cy0 + p.vy * t};
    case MotionKind::Sinusoidal: {
      const double speed = std::hypot(p.vx, p.vy);
      double nx = 0, ny = 1;
      if (speed > 0) {
        nx = -p.vy / speed;
        ny = p.vx / speed;
      }
      const double s = p.amplitude * std::sin(6.283185307179586 * t / p.period + p.phase);
      return {cx0 + p.vx * t + nx * s, cy0 + p.vy * t + ny * s};
    }
    case MotionKind::SharpTurn: {
      const double tt = static_cast<double>(p.turn_frame);
      if (t < tt) return {cx0 + p.vx * t, cy0 + p.vy * t};
      const double rad = p.turn_angle_deg * 3.141592653589793 / 180.0;
      const double rvx = p.vx * std::cos(rad) - p.vy * std::sin(rad);
      const double rvy = p.vx * std::sin(rad) + p.vy * std::cos(rad);
      return {cx0 + p.vx * tt + rvx * (t - tt), cy0 + p.vy * tt + rvy * (t - tt)};
    }
    case MotionKind::StopGo: {
      const double s0 = static_cast<double>(p.stop_frame);
      const double s1 = s0 + static_cast<double>(p.stop_duration);
      const double moving = t - std::max(0.0, std::min(t, s1) - s0);
      return {cx0 + p.vx * moving, cy0 + p.vy * moving};
    }
  }
  return {cx0, cy0};
}

}  // namespace detail

// Deterministic ground truth. Motion programs produce their analytic
// trajectories exactly; noise only enters in simulate_detections. Boxes that
// would leave the image are clamped and flagged.
inline GroundTruthSet generate(const ScenarioSpec& spec) {
  spec.validate();
  GroundTruthSet gt;
  gt.geometry = spec.geometry;
  gt.frame_count = spec.frame_count;

  std::vector<ObjectSpec> objects = spec.objects;
  if (spec.randomize_objects > 0) {
    Rng rng = Rng(spec.seed).child(0x0b);
    std::vector<std::pair<double, double>> centers;
    for (int i = 0; i < spec.randomize_objects; ++i) {
      ObjectSpec obj;
      obj.id = static_cast<int>(objects.size()) + 1;
      const double w = rng.uniform(30, 70);
      const double h = rng.uniform(50, 130);
      double cx = 0, cy = 0;
      for (int attempt = 0; attempt < 40; ++attempt) {
        cx = rng.uniform(0.15 * spec.geometry.width, 0.85 * spec.geometry.width);
        cy = rng.uniform(0.2 * spec.geometry.height, 0.8 * spec.geometry.height);
        bool ok = true;
        for (auto [ox, oy] : centers) {
          if (std::hypot(cx - ox, cy - oy) < 85.0) {
            ok = false;
            break;
          }
        }
        if (ok) break;
      }
      centers.emplace_back(cx, cy);
      obj.start = {cx - 0.5 * w, cy - 0.5 * h, w, h};

      MotionProgram& prog = obj.program;
      const double speed = rng.uniform(1.0, 4.5);
      const double angle = rng.uniform(0.0, 6.283185307179586);
      prog.vx = speed * std::cos(angle);
      prog.vy = speed * std::sin(angle);
      prog.grow_rate = rng.uniform(-0.05, 0.05);
      const double kind_draw = rng.uniform();
      if (kind_draw < 0.30) {
        prog.kind = MotionKind::Linear;
      } else if (kind_draw < 0.55) {
        prog.kind = MotionKind::Sinusoidal;
        prog.amplitude = rng.uniform(12, 35);
        prog.period = rng.uniform(24, 70);
        prog.phase = rng.uniform(0.0, 6.283185307179586);
      } else if (kind_draw < 0.80) {
        prog.kind = MotionKind::SharpTurn;
        prog.turn_frame = static_cast<int>(rng.uniform_int(spec.frame_count / 4,
                                                           3 * spec.frame_count / 4));
        prog.turn_angle_deg = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(35, 110);
      } else {
        prog.kind = MotionKind::StopGo;
        prog.stop_frame = static_cast<int>(rng.uniform_int(spec.frame_count / 4,
                                                           3 * spec.frame_count / 4));
        prog.stop_duration = static_cast<int>(rng.uniform_int(8, 30));
      }
      objects.push_back(obj);
    }
  }

  for (const ObjectSpec& obj : objects) {
    GtObject out;
    out.id = obj.id;
    out.first_frame = obj.appear_frame;
    const int last = obj.disappear_frame > 0 ? obj.disappear_frame : spec.frame_count;
    const double cx0 = obj.start.cx();
    const double cy0 = obj.start.cy();
    for (int frame = obj.appear_frame; frame <= last; ++frame) {
      const int tau = frame - obj.appear_frame;
      auto [cx, cy] = detail::program_center(obj.program, cx0, cy0, tau);
      double w = std::max(1.0, obj.start.w + obj.program.grow_rate * tau);
      double h = std::max(1.0, obj.start.h + obj.program.grow_rate * tau);
      w = std::min(w, spec.geometry.width);
      h = std::min(h, spec.geometry.height);
      BoundingBox box{cx - 0.5 * w, cy - 0.5 * h, w, h};
      const double max_x = spec.geometry.width - w;
      const double max_y = spec.geometry.height - h;
      const double clamped_x = std::clamp(box.x, 0.0, max_x);
      const double clamped_y = std::clamp(box.y, 0.0, max_y);
      if (clamped_x != box.x || clamped_y != box.y) {
        out.clipped = true;
        gt.any_clipped = true;
        box.x = clamped_x;
        box.y = clamped_y;
      }
      out.boxes.push_back(box);
    }
    switch (obj.program.kind) {
      case MotionKind::SharpTurn:
        out.event_frames.push_back(obj.appear_frame + obj.program.turn_frame);
        break;
      case MotionKind::StopGo:
        out.event_frames.push_back(obj.appear_frame + obj.program.stop_frame);
        out.event_frames.push_back(obj.appear_frame + obj.program.stop_frame +
                                   obj.program.stop_duration);
        break;
      default:
        break;
    }
    gt.objects.push_back(std::move(out));
  }
  return gt;
}

namespace detail {

inline bool occluded(const std::vector<OcclusionWindow>& occlusions, int object_id, int frame,
                     bool& low_score) {
  for (const OcclusionWindow& w : occlusions) {
    if (w.object_id == object_id && frame >= w.frame_begin && frame <= w.frame_end) {
      low_score = w.emit_low_score;
      return true;
    }
  }
  return false;
}

inline int poisson_draw(Rng& rng, double rate) {
  if (rate <= 0) return 0;
  const double limit = std::exp(-rate);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > limit);
  return k - 1;
}

}  // namespace detail

// Per-frame detections: present ground-truth boxes with Gaussian corner
// noise and a matched-band score, unless dropped by the miss probability or
// an occlusion window; clutter boxes arrive at the clutter rate with
// low-band scores. Index 0 of the result is frame 1.
inline std::vector<std::vector<Detection>> simulate_detections(const GroundTruthSet& gt,
                                                               const ScenarioSpec& spec) {
  std::vector<std::vector<Detection>> frames(static_cast<size_t>(gt.frame_count));
  const Rng master = Rng(spec.seed);
  for (int frame = 1; frame <= gt.frame_count; ++frame) {
    Rng rng = master.child(0xde7, static_cast<uint64_t>(frame));
    std::vector<Detection>& dets = frames[static_cast<size_t>(frame - 1)];
    for (const GtObject& obj : gt.objects) {
      if (!obj.present(frame)) continue;
      bool low_score = false;
      const bool occ = detail::occluded(spec.occlusions, obj.id, frame, low_score);
      if (occ && !low_score) continue;
      if (spec.miss_probability > 0 && rng.bernoulli(spec.miss_probability)) continue;
      const BoundingBox& b = obj.box_at(frame);
      Detection d;
      d.frame = frame;
      d.box = {b.x + rng.normal(0, spec.detection_noise_px),
               b.y + rng.normal(0, spec.detection_noise_px),
               std::max(1.0, b.w + rng.normal(0, spec.detection_noise_px)),
               std::max(1.0, b.h + rng.normal(0, spec.detection_noise_px))};
      d.score = (occ && low_score)
                    ? rng.uniform(spec.score_model.clutter_lo, spec.score_model.clutter_hi)
                    : rng.uniform(spec.score_model.matched_lo, spec.score_model.matched_hi);
      dets.push_back(d);
    }
    const int clutter = detail::poisson_draw(rng, spec.clutter_rate);
    for (int i = 0; i < clutter; ++i) {
      const double w = rng.uniform(25, 75);
      const double h = rng.uniform(35, 120);
      Detection d;
      d.frame = frame;
      d.box = {rng.uniform(0.0, spec.geometry.width - w), rng.uniform(0.0, spec.geometry.height - h),
               w, h};
      d.score = rng.uniform(spec.score_model.clutter_lo, spec.score_model.clutter_hi);
      dets.push_back(d);
    }
  }
  return frames;
}

// Trajectories (for training / one-step evaluation) from the ground truth.
inline std::vector<Trajectory> gt_trajectories(const GroundTruthSet& gt) {
  std::vector<Trajectory> out;
  for (const GtObject& obj : gt.objects) {
    out.push_back({obj.boxes, gt.geometry});
  }
  return out;
}

// Named scenario presets. case1-case4 reproduce the qualitative failure
// cases at desk scale; `linear` is the trivially trackable control;
// `mixed_corpus` is the randomized training distribution.
inline ScenarioSpec preset(const std::string& name) {
  ScenarioSpec spec;
  if (name == "case1") {
    // Short-term missed detections: one object, a 3-frame detector gap.
    spec.frame_count = 100;
    spec.detection_noise_px = 0.4;
    spec.seed = 11;
    ObjectSpec obj;
    obj.id = 1;
    obj.start = {75, 150, 50, 100};
    obj.program.kind = MotionKind::Linear;
    obj.program.vx = 3.0;
    obj.program.vy = 1.0;
    spec.objects.push_back(obj);
    spec.occlusions.push_back({1, 45, 47, false});
  } else if (name == "case2") {
    // Long-term missed detections: a 25-frame gap.
    spec.frame_count = 130;
    spec.detection_noise_px = 0.4;
    spec.seed = 12;
    ObjectSpec obj;
    obj.id = 1;
    obj.start = {55, 110, 50, 100};
    obj.program.kind = MotionKind::Linear;
    obj.program.vx = 2.5;
    obj.program.vy = 0.6;
    spec.objects.push_back(obj);
    spec.occlusions.push_back({1, 50, 74, false});
  } else if (name == "case3") {
    // Severe occlusion with crossing trajectories; the paths intersect at
    // exactly one frame (frame 56) and one object is dropped around it.
    spec.frame_count = 110;
    spec.detection_noise_px = 0.4;
    spec.seed = 13;
    ObjectSpec a;
    a.id = 1;
    a.start = {77.5, 135, 45, 90};  // center (100, 180)
    a.program.kind = MotionKind::Linear;
    a.program.vx = 4.0;
    a.program.vy = 1.5;
    ObjectSpec b;
    b.id = 2;
    b.start = {517.5, 300, 45, 90};  // center (540, 345)
    b.program.kind = MotionKind::Linear;
    b.program.vx = -4.0;
    b.program.vy = -1.5;
    spec.objects.push_back(a);
    spec.objects.push_back(b);
    spec.occlusions.push_back({2, 54, 58, false});
  } else if (name == "case4") {
    // Close overlap with complex motions: two objects 70 px apart
    // (1.46 box-widths) on anti-phase sinusoids.
    spec.frame_count = 120;
    spec.detection_noise_px = 0.4;
    spec.seed = 14;
    ObjectSpec a;
    a.id = 1;
    a.start = {176, 192, 48, 96};  // center (200, 240)
    a.program.kind = MotionKind::Sinusoidal;
    a.program.vx = 2.0;
    a.program.vy = 0.0;
    a.program.amplitude = 22;
    a.program.period = 40;
    a.program.phase = 0;
    ObjectSpec b = a;
    b.id = 2;
    b.start = {246, 192, 48, 96};  // center (270, 240)
    b.program.phase = 3.141592653589793;
    spec.objects.push_back(a);
    spec.objects.push_back(b);
  } else if (name == "linear") {
    spec.frame_count = 100;
    spec.seed = 15;
    const double starts[3][4] = {{55, 55, 50, 90}, {535, 135, 50, 90}, {295, 15, 50, 90}};
    const double vels[3][2] = {{2.0, 0.0}, {-2.0, 0.5}, {0.0, 1.5}};
    for (int i = 0; i < 3; ++i) {
      ObjectSpec obj;
      obj.id = i + 1;
      obj.start = {starts[i][0], starts[i][1], starts[i][2], starts[i][3]};
      obj.program.kind = MotionKind::Linear;
      obj.program.vx = vels[i][0];
      obj.program.vy = vels[i][1];
      spec.objects.push_back(obj);
    }
  } else if (name == "mixed_corpus") {
    spec.frame_count = 240;
    spec.randomize_objects = 12;
    spec.detection_noise_px = 0.8;
    spec.miss_probability = 0.05;
    spec.clutter_rate = 0.3;
    spec.seed = 42;
  } else {
    throw InvalidInput("unknown preset: " + name);
  }
  return spec;
}

// --- JSON (de)serialization -------------------------------------------------

inline void to_json(nlohmann::json& j, const MotionProgram& p) {
  j = {{"kind", motion_kind_name(p.kind)},
       {"vx", p.vx},
       {"vy", p.vy},
       {"turn_angle_deg", p.turn_angle_deg},
       {"turn_frame", p.turn_frame},
       {"stop_frame", p.stop_frame},
       {"stop_duration", p.stop_duration},
       {"amplitude", p.amplitude},
       {"period", p.period},
       {"phase", p.phase},
       {"grow_rate", p.grow_rate}};
}

inline void from_json(const nlohmann::json& j, MotionProgram& p) {
  MotionProgram d;
  p.kind = motion_kind_from_name(j.value("kind", std::string("linear")));
  p.vx = j.value("vx", d.vx);
  p.vy = j.value("vy", d.vy);
  p.turn_angle_deg = j.value("turn_angle_deg", d.turn_angle_deg);
  p.turn_frame = j.value("turn_frame", d.turn_frame);
  p.stop_frame = j.value("stop_frame", d.stop_frame);
  p.stop_duration = j.value("stop_duration", d.stop_duration);
  p.amplitude = j.value("amplitude", d.amplitude);
  p.period = j.value("period", d.period);
  p.phase = j.value("phase", d.phase);
  p.grow_rate = j.value("grow_rate", d.grow_rate);
}

inline void to_json(nlohmann::json& j, const ObjectSpec& o) {
  j = {{"id", o.id},
       {"start", {o.start.x, o.start.y, o.start.w, o.start.h}},
       {"program", o.program},
       {"appear_frame", o.appear_frame},
       {"disappear_frame", o.disappear_frame}};
}

inline void from_json(const nlohmann::json& j, ObjectSpec& o) {
  o.id = j.at("id").get<int>();
  const auto s = j.at("start").get<std::vector<double>>();
  if (s.size() != 4) throw InvalidInput("ObjectSpec: start must have 4 entries");
  o.start = {s[0], s[1], s[2], s[3]};
  o.program = j.value("program", MotionProgram{});
  o.appear_frame = j.value("appear_frame", 1);
  o.disappear_frame = j.value("disappear_frame", 0);
}

inline void to_json(nlohmann::json& j, const OcclusionWindow& w) {
  j = {{"object_id", w.object_id},
       {"frame_begin", w.frame_begin},
       {"frame_end", w.frame_end},
       {"emit_low_score", w.emit_low_score}};
}

inline void from_json(const nlohmann::json& j, OcclusionWindow& w) {
  w.object_id = j.at("object_id").get<int>();
  w.frame_begin = j.at("frame_begin").get<int>();
  w.frame_end = j.at("frame_end").get<int>();
  w.emit_low_score = j.value("emit_low_score", false);
}

inline void to_json(nlohmann::json& j, const ScenarioSpec& s) {
  j = {{"width", s.geometry.width},
       {"height", s.geometry.height},
       {"frame_count", s.frame_count},
       {"objects", s.objects},
       {"randomize_objects", s.randomize_objects},
       {"detection_noise_px", s.detection_noise_px},
       {"miss_probability", s.miss_probability},
       {"clutter_rate", s.clutter_rate},
       {"occlusions", s.occlusions},
       {"matched_score_lo", s.score_model.matched_lo},
       {"matched_score_hi", s.score_model.matched_hi},
       {"clutter_score_lo", s.score_model.clutter_lo},
       {"clutter_score_hi", s.score_model.clutter_hi},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, ScenarioSpec& s) {
  ScenarioSpec d;
  s.geometry.width = j.value("width", d.geometry.width);
  s.geometry.height = j.value("height", d.geometry.height);
  s.frame_count = j.value("frame_count", d.frame_count);
  s.objects = j.value("objects", std::vector<ObjectSpec>{});
  s.randomize_objects = j.value("randomize_objects", 0);
  s.detection_noise_px = j.value("detection_noise_px", 0.0);
  s.miss_probability = j.value("miss_probability", 0.0);
  s.clutter_rate = j.value("clutter_rate", 0.0);
  s.occlusions = j.value("occlusions", std::vector<OcclusionWindow>{});
  s.score_model.matched_lo = j.value("matched_score_lo", d.score_model.matched_lo);
  s.score_model.matched_hi = j.value("matched_score_hi", d.score_model.matched_hi);
  s.score_model.clutter_lo = j.value("clutter_score_lo", d.score_model.clutter_lo);
  s.score_model.clutter_hi = j.value("clutter_score_hi", d.score_model.clutter_hi);
  s.seed = j.value("seed", d.seed);
}

}  // namespace tcmp

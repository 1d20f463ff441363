#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tcmp/errors.hpp"

namespace tcmp {

// Axis-aligned box, (x, y) = top-left corner, all values in pixels.
struct BoundingBox {
  double x = 0, y = 0, w = 0, h = 0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h);
  }
  bool valid() const { return finite() && w > 0 && h > 0; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Per-frame change of a box, pixels per frame.
struct MotionDelta {
  double dx = 0, dy = 0, dw = 0, dh = 0;

  bool finite() const {
    return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dw) && std::isfinite(dh);
  }
  friend bool operator==(const MotionDelta&, const MotionDelta&) = default;
};

struct ImageGeometry {
  double width = 0, height = 0;

  bool valid() const {
    return std::isfinite(width) && std::isfinite(height) && width > 0 && height > 0;
  }
  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

// One time step of model input: normalized box followed by its normalized
// per-frame change.
struct ContextEntry {
  double x = 0, y = 0, w = 0, h = 0;
  double dx = 0, dy = 0, dw = 0, dh = 0;

  double operator[](size_t i) const { return (&x)[i]; }
  double& operator[](size_t i) { return (&x)[i]; }
  static constexpr size_t size() { return 8; }

  friend bool operator==(const ContextEntry&, const ContextEntry&) = default;
};

// Ordered context entries, oldest first. Invariant: every entry's motion
// equals the box difference to its predecessor; the first entry's motion is
// zero when the trajectory starts there.
struct ContextWindow {
  std::vector<ContextEntry> entries;

  size_t length() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  const ContextEntry& back() const { return entries.back(); }

  // Newest `n` entries. The surviving oldest entry's motion is zeroed: it
  // lost its predecessor, which matches how a trajectory start is encoded.
  ContextWindow tail(size_t n) const {
    if (n >= entries.size()) return *this;
    ContextWindow out;
    out.entries.assign(entries.end() - static_cast<ptrdiff_t>(n), entries.end());
    out.entries.front().dx = 0;
    out.entries.front().dy = 0;
    out.entries.front().dw = 0;
    out.entries.front().dh = 0;
    return out;
  }

  bool self_consistent(double tol = 1e-6) const {
    for (size_t t = 1; t < entries.size(); ++t) {
      const ContextEntry& p = entries[t - 1];
      const ContextEntry& c = entries[t];
      if (std::abs(c.dx - (c.x - p.x)) > tol || std::abs(c.dy - (c.y - p.y)) > tol ||
          std::abs(c.dw - (c.w - p.w)) > tol || std::abs(c.dh - (c.h - p.h)) > tol) {
        return false;
      }
    }
    return true;
  }
};

inline MotionDelta motion_of(const BoundingBox& curr, const BoundingBox& prev) {
  if (!curr.finite() || !prev.finite()) {
    throw InvalidInput("motion_of: non-finite bounding box");
  }
  return {curr.x - prev.x, curr.y - prev.y, curr.w - prev.w, curr.h - prev.h};
}

// Inverse of motion_of, with w and h clamped to >= 1 px so a track never
// holds a degenerate box.
inline BoundingBox apply_motion(const BoundingBox& box, const MotionDelta& m) {
  BoundingBox out{box.x + m.dx, box.y + m.dy, box.w + m.dw, box.h + m.dh};
  out.w = std::max(out.w, 1.0);
  out.h = std::max(out.h, 1.0);
  return out;
}

inline ContextEntry normalize_box(const BoundingBox& b, const ImageGeometry& g) {
  ContextEntry e;
  e.x = b.x / g.width;
  e.y = b.y / g.height;
  e.w = b.w / g.width;
  e.h = b.h / g.height;
  return e;
}

inline BoundingBox denormalize(const ContextEntry& e, const ImageGeometry& g) {
  return {e.x * g.width, e.y * g.height, e.w * g.width, e.h * g.height};
}

inline MotionDelta denormalize_delta(double dx, double dy, double dw, double dh,
                                     const ImageGeometry& g) {
  return {dx * g.width, dy * g.height, dw * g.width, dh * g.height};
}

// Normalized context from a box trajectory; the first entry's motion is the
// zero vector (the window has no predecessor for it).
inline ContextWindow build_context(const std::vector<BoundingBox>& boxes,
                                   const ImageGeometry& geom) {
  if (boxes.empty()) throw InvalidInput("build_context: empty box list");
  if (!geom.valid()) throw InvalidInput("build_context: invalid image geometry");
  ContextWindow window;
  window.entries.reserve(boxes.size());
  for (size_t t = 0; t < boxes.size(); ++t) {
    if (!boxes[t].finite()) throw InvalidInput("build_context: non-finite box");
    ContextEntry e = normalize_box(boxes[t], geom);
    if (t > 0) {
      const ContextEntry& p = window.entries[t - 1];
      e.dx = e.x - p.x;
      e.dy = e.y - p.y;
      e.dw = e.w - p.w;
      e.dh = e.h - p.h;
    }
    window.entries.push_back(e);
  }
  return window;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  // All areas are computed from the same edge arithmetic as the
  // intersection, so iou(a, a) is exactly 1 and the result never leaves
  // [0, 1] to rounding.
  const double ar = a.x + a.w, ab = a.y + a.h;
  const double br = b.x + b.w, bb = b.y + b.h;
  const double iw = std::min(ar, br) - std::max(a.x, b.x);
  const double ih = std::min(ab, bb) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (ar - a.x) * (ab - a.y);
  const double area_b = (br - b.x) * (bb - b.y);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace tcmp

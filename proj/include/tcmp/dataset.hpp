#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "tcmp/geometry.hpp"
#include "tcmp/net.hpp"

namespace tcmp {

// One training sample: a context window ending at `frame_index` of its
// source trajectory plus the true next-frame motion in normalized units.
struct WindowSample {
  ContextWindow window;
  std::array<float, 4> target{};  // normalized
  int sequence_id = 0;
  int frame_index = 0;  // 1-based index of the window's last frame
  ImageGeometry geometry;
  BoundingBox last_box;  // pixel-space box at frame_index
};

using WindowDataset = std::vector<WindowSample>;

struct Trajectory {
  std::vector<BoundingBox> boxes;
  ImageGeometry geometry;
};

// For every trajectory and every frame t >= 1 (1-based), emits one sample
// whose window holds the newest min(t, max_context) entries ending at t and
// whose target is the motion into frame t+1. Trajectories shorter than two
// boxes contribute nothing.
inline WindowDataset extract_windows(const std::vector<Trajectory>& trajectories,
                                     int max_context) {
  if (max_context < 1) throw InvalidInput("extract_windows: max_context must be >= 1");
  WindowDataset dataset;
  for (size_t s = 0; s < trajectories.size(); ++s) {
    const auto& traj = trajectories[s];
    const size_t n = traj.boxes.size();
    if (n < 2) continue;
    for (size_t t = 0; t + 1 < n; ++t) {
      const size_t begin = t + 1 >= static_cast<size_t>(max_context)
                               ? t + 1 - static_cast<size_t>(max_context)
                               : 0;
      std::vector<BoundingBox> slice(traj.boxes.begin() + static_cast<ptrdiff_t>(begin),
                                     traj.boxes.begin() + static_cast<ptrdiff_t>(t + 1));
      WindowSample sample;
      sample.window = build_context(slice, traj.geometry);
      const MotionDelta d = motion_of(traj.boxes[t + 1], traj.boxes[t]);
      sample.target = {static_cast<float>(d.dx / traj.geometry.width),
                       static_cast<float>(d.dy / traj.geometry.height),
                       static_cast<float>(d.dw / traj.geometry.width),
                       static_cast<float>(d.dh / traj.geometry.height)};
      sample.sequence_id = static_cast<int>(s);
      sample.frame_index = static_cast<int>(t) + 1;
      sample.geometry = traj.geometry;
      sample.last_box = traj.boxes[t];
      dataset.push_back(std::move(sample));
    }
  }
  return dataset;
}

}  // namespace tcmp

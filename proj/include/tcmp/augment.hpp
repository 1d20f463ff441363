#pragma once

#include <cstddef>
#include <vector>

#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"
#include "tcmp/rng.hpp"

namespace tcmp {

// Gaussian box noise, applied in normalized coordinates.
struct NoiseSpec {
  double mean = 0.0;
  double stddev = 0.001;
};

// Random context truncation to a uniform length in {min_len, ..., m}.
struct TruncationSpec {
  int min_len = 4;
};

// Adds independent Gaussian noise to the four box components of every entry,
// then recomputes the motion components from the noised boxes so the window
// invariant still holds. The first entry's motion stays zero.
inline void add_noise(std::vector<ContextWindow>& batch, const NoiseSpec& spec, Rng& rng) {
  if (spec.stddev < 0) throw InvalidInput("add_noise: negative stddev");
  for (ContextWindow& window : batch) {
    for (ContextEntry& e : window.entries) {
      e.x += rng.normal(spec.mean, spec.stddev);
      e.y += rng.normal(spec.mean, spec.stddev);
      e.w += rng.normal(spec.mean, spec.stddev);
      e.h += rng.normal(spec.mean, spec.stddev);
    }
    for (size_t t = window.entries.size(); t-- > 1;) {
      ContextEntry& c = window.entries[t];
      const ContextEntry& p = window.entries[t - 1];
      c.dx = c.x - p.x;
      c.dy = c.y - p.y;
      c.dw = c.w - p.w;
      c.dh = c.h - p.h;
    }
    window.entries.front().dx = 0;
    window.entries.front().dy = 0;
    window.entries.front().dw = 0;
    window.entries.front().dh = 0;
  }
}

struct TruncationResult {
  // Windows shorter than min_len are left untouched and flagged here.
  std::vector<size_t> skipped;
};

// Keeps only the newest m' entries of each window, m' uniform over
// {min_len, ..., length}. The surviving oldest entry's motion is zeroed (it
// lost its predecessor).
inline TruncationResult random_truncate(std::vector<ContextWindow>& batch,
                                        const TruncationSpec& spec, Rng& rng) {
  if (spec.min_len < 4) throw InvalidInput("random_truncate: min_len must be >= 4");
  TruncationResult result;
  for (size_t i = 0; i < batch.size(); ++i) {
    ContextWindow& window = batch[i];
    const int len = static_cast<int>(window.length());
    if (len < spec.min_len) {
      result.skipped.push_back(i);
      continue;
    }
    const int keep = static_cast<int>(rng.uniform_int(spec.min_len, len));
    window = window.tail(static_cast<size_t>(keep));
    // tail() already zeroes the boundary motion when it drops entries; when
    // keep == len the window is unchanged except for that same reset rule.
    window.entries.front().dx = 0;
    window.entries.front().dy = 0;
    window.entries.front().dw = 0;
    window.entries.front().dh = 0;
  }
  return result;
}

}  // namespace tcmp

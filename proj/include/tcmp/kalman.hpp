#pragma once

#include <array>
#include <cmath>

#include "tcmp/errors.hpp"
#include "tcmp/geometry.hpp"

namespace tcmp {

// Constant-velocity filter over (cx, cy, w, h) and their velocities. Noise
// scales follow the SORT lineage: both process and measurement stddevs are
// proportional to the box height.
struct KalmanNoise {
  double position_weight = 1.0 / 20.0;
  double velocity_weight = 1.0 / 160.0;
};

struct KalmanState {
  static constexpr int kDim = 8;
  static constexpr int kMeas = 4;

  std::array<double, kDim> mean{};                  // cx, cy, w, h, vcx, vcy, vw, vh
  std::array<double, kDim * kDim> covariance{};     // row-major
  KalmanNoise noise;

  double cov(int r, int c) const { return covariance[static_cast<size_t>(r) * kDim + c]; }
  double& cov(int r, int c) { return covariance[static_cast<size_t>(r) * kDim + c]; }

  bool covariance_symmetric(double tol = 1e-9) const {
    for (int r = 0; r < kDim; ++r) {
      for (int c = r + 1; c < kDim; ++c) {
        if (std::abs(cov(r, c) - cov(c, r)) > tol) return false;
      }
    }
    return true;
  }
};

namespace detail {

// Cholesky-style positive-definiteness probe with a small negative slack.
inline bool psd_check(const std::array<double, 64>& m, int n) {
  std::array<double, 64> a = m;
  double scale = 0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[static_cast<size_t>(i) * 8 + i]));
  const double slack = -1e-9 * std::max(scale, 1.0);
  for (int k = 0; k < n; ++k) {
    double pivot = a[static_cast<size_t>(k) * 8 + k];
    if (pivot < slack) return false;
    pivot = std::max(pivot, 1e-300);
    for (int i = k + 1; i < n; ++i) {
      const double f = a[static_cast<size_t>(i) * 8 + k] / pivot;
      for (int j = k; j < n; ++j) {
        a[static_cast<size_t>(i) * 8 + j] -= f * a[static_cast<size_t>(k) * 8 + j];
      }
    }
  }
  return true;
}

inline double state_height(const KalmanState& s) { return std::max(s.mean[3], 1.0); }

}  // namespace detail

inline BoundingBox kf_state_box(const KalmanState& s) {
  const double w = std::max(s.mean[2], 1.0);
  const double h = std::max(s.mean[3], 1.0);
  return {s.mean[0] - 0.5 * w, s.mean[1] - 0.5 * h, w, h};
}

// Position from the box (center form), zero velocities, diagonal covariance
// with large velocity uncertainty.
inline KalmanState kf_init(const BoundingBox& box, const KalmanNoise& noise = {}) {
  if (!box.valid()) throw InvalidInput("kf_init: invalid box");
  KalmanState s;
  s.noise = noise;
  s.mean = {box.cx(), box.cy(), box.w, box.h, 0, 0, 0, 0};
  const double p = 2.0 * noise.position_weight * box.h;
  const double v = 10.0 * noise.velocity_weight * box.h;
  for (int i = 0; i < 4; ++i) s.cov(i, i) = p * p;
  for (int i = 4; i < 8; ++i) s.cov(i, i) = v * v;
  return s;
}

// x <- F x (constant velocity), P <- F P F^T + Q; returns the corner-form
// predicted box.
inline BoundingBox kf_predict(KalmanState& s) {
  if (!s.covariance_symmetric()) {
    throw NumericDegeneracy("kf_predict: covariance not symmetric");
  }
  if (!detail::psd_check(s.covariance, KalmanState::kDim)) {
    throw NumericDegeneracy("kf_predict: covariance not positive semi-definite");
  }
  for (int i = 0; i < 4; ++i) s.mean[static_cast<size_t>(i)] += s.mean[static_cast<size_t>(i) + 4];

  // F P F^T for F = [I I; 0 I] in 4-block form.
  std::array<double, 64> p = s.covariance;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 8; ++c) {
      p[static_cast<size_t>(r) * 8 + c] += p[static_cast<size_t>(r + 4) * 8 + c];
    }
  }
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 4; ++c) {
      p[static_cast<size_t>(r) * 8 + c] += p[static_cast<size_t>(r) * 8 + c + 4];
    }
  }
  const double h = detail::state_height(s);
  const double qp = s.noise.position_weight * h;
  const double qv = s.noise.velocity_weight * h;
  for (int i = 0; i < 4; ++i) p[static_cast<size_t>(i) * 8 + i] += qp * qp;
  for (int i = 4; i < 8; ++i) p[static_cast<size_t>(i) * 8 + i] += qv * qv;
  // Re-symmetrize against accumulated rounding.
  for (int r = 0; r < 8; ++r) {
    for (int c = r + 1; c < 8; ++c) {
      const double avg = 0.5 * (p[static_cast<size_t>(r) * 8 + c] + p[static_cast<size_t>(c) * 8 + r]);
      p[static_cast<size_t>(r) * 8 + c] = avg;
      p[static_cast<size_t>(c) * 8 + r] = avg;
    }
  }
  s.covariance = p;
  return kf_state_box(s);
}

// Standard gain update on the four observed components, Joseph-form
// covariance, then explicit symmetrization.
inline void kf_update(KalmanState& s, const BoundingBox& meas) {
  if (!meas.valid()) throw InvalidInput("kf_update: invalid measurement");
  constexpr int n = KalmanState::kDim;
  constexpr int m = KalmanState::kMeas;
  const double h = detail::state_height(s);
  const double rp = s.noise.position_weight * h;

  // S = H P H^T + R: top-left 4x4 block of P plus R.
  std::array<double, 16> innov{};
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c < m; ++c) innov[static_cast<size_t>(r) * 4 + c] = s.cov(r, c);
    innov[static_cast<size_t>(r) * 4 + r] += rp * rp;
  }

  // Cholesky factor of S; failure means a singular innovation covariance.
  std::array<double, 16> chol{};
  for (int r = 0; r < m; ++r) {
    for (int c = 0; c <= r; ++c) {
      double acc = innov[static_cast<size_t>(r) * 4 + c];
      for (int k = 0; k < c; ++k) {
        acc -= chol[static_cast<size_t>(r) * 4 + k] * chol[static_cast<size_t>(c) * 4 + k];
      }
      if (r == c) {
        if (acc <= 0) throw NumericDegeneracy("kf_update: singular innovation covariance");
        chol[static_cast<size_t>(r) * 4 + r] = std::sqrt(acc);
      } else {
        chol[static_cast<size_t>(r) * 4 + c] = acc / chol[static_cast<size_t>(c) * 4 + c];
      }
    }
  }
  // Solve S X = (P H^T)^T rows via the factor to form K = P H^T S^-1.
  auto solve4 = [&](std::array<double, 4>& b) {
    for (int r = 0; r < m; ++r) {
      double acc = b[static_cast<size_t>(r)];
      for (int k = 0; k < r; ++k) acc -= chol[static_cast<size_t>(r) * 4 + k] * b[static_cast<size_t>(k)];
      b[static_cast<size_t>(r)] = acc / chol[static_cast<size_t>(r) * 4 + r];
    }
    for (int r = m - 1; r >= 0; --r) {
      double acc = b[static_cast<size_t>(r)];
      for (int k = r + 1; k < m; ++k) acc -= chol[static_cast<size_t>(k) * 4 + r] * b[static_cast<size_t>(k)];
      b[static_cast<size_t>(r)] = acc / chol[static_cast<size_t>(r) * 4 + r];
    }
  };

  std::array<double, n * m> gain{};  // K, n x m
  for (int r = 0; r < n; ++r) {
    std::array<double, 4> row{};
    for (int c = 0; c < m; ++c) row[static_cast<size_t>(c)] = s.cov(r, c);  // (P H^T) row
    solve4(row);
    for (int c = 0; c < m; ++c) gain[static_cast<size_t>(r) * m + c] = row[static_cast<size_t>(c)];
  }

  const std::array<double, 4> z{meas.cx(), meas.cy(), meas.w, meas.h};
  std::array<double, 4> resid{};
  for (int i = 0; i < m; ++i) resid[static_cast<size_t>(i)] = z[static_cast<size_t>(i)] - s.mean[static_cast<size_t>(i)];
  for (int r = 0; r < n; ++r) {
    double acc = 0;
    for (int c = 0; c < m; ++c) acc += gain[static_cast<size_t>(r) * m + c] * resid[static_cast<size_t>(c)];
    s.mean[static_cast<size_t>(r)] += acc;
  }

  // Joseph form: P <- (I - K H) P (I - K H)^T + K R K^T.
  std::array<double, 64> ikh{};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) ikh[static_cast<size_t>(r) * 8 + c] = (r == c) ? 1.0 : 0.0;
    for (int c = 0; c < m; ++c) ikh[static_cast<size_t>(r) * 8 + c] -= gain[static_cast<size_t>(r) * m + c];
  }
  std::array<double, 64> tmp{};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += ikh[static_cast<size_t>(r) * 8 + k] * s.cov(k, c);
      tmp[static_cast<size_t>(r) * 8 + c] = acc;
    }
  }
  std::array<double, 64> next{};
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += tmp[static_cast<size_t>(r) * 8 + k] * ikh[static_cast<size_t>(c) * 8 + k];
      next[static_cast<size_t>(r) * 8 + c] = acc;
    }
  }
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0;
      for (int k = 0; k < m; ++k) {
        acc += gain[static_cast<size_t>(r) * m + k] * (rp * rp) * gain[static_cast<size_t>(c) * m + k];
      }
      next[static_cast<size_t>(r) * 8 + c] += acc;
    }
  }
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) {
      const double avg = 0.5 * (next[static_cast<size_t>(r) * 8 + c] + next[static_cast<size_t>(c) * 8 + r]);
      s.cov(r, c) = avg;
      s.cov(c, r) = avg;
    }
  }
}

// "IoU only" baseline: the next box is the last observed box.
inline BoundingBox static_predict(const std::vector<BoundingBox>& history) {
  if (history.empty()) throw InvalidInput("static_predict: empty history");
  return history.back();
}

}  // namespace tcmp

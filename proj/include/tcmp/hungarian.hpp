#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "tcmp/errors.hpp"

namespace tcmp {

// Result of a rectangular assignment: min(R, C) matched pairs plus the
// leftovers on both sides. Indices appear at most once each.
struct Assignment {
  std::vector<std::pair<int, int>> matched;  // (row, col)
  std::vector<int> unmatched_rows;
  std::vector<int> unmatched_cols;
  double total_cost = 0;
};

// Minimum-cost complete matching of the smaller side, O(n^3)
// shortest-augmenting-path formulation with potentials. Rectangular inputs
// are padded to square with zero-cost dummies, which leaves the optimal
// real-pair selection unchanged.
inline Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows > 0 ? static_cast<int>(cost[0].size()) : 0;
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != cols) throw InvalidInput("hungarian: ragged cost matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw InvalidInput("hungarian: non-finite cost");
    }
  }

  Assignment result;
  if (rows == 0 || cols == 0) {
    for (int c = 0; c < cols; ++c) result.unmatched_cols.push_back(c);
    for (int r = 0; r < rows; ++r) result.unmatched_rows.push_back(r);
    return result;
  }

  const int n = std::max(rows, cols);
  auto at = [&](int r, int c) -> double {
    return (r < rows && c < cols) ? cost[static_cast<size_t>(r)][static_cast<size_t>(c)] : 0.0;
  };

  // 1-based potentials formulation.
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
  std::vector<int> match_col(static_cast<size_t>(n) + 1, 0);  // col -> row
  std::vector<int> way(static_cast<size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match_col[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n) + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(static_cast<size_t>(n) + 1, 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int i0 = match_col[static_cast<size_t>(j0)];
      double delta = std::numeric_limits<double>::infinity();
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = at(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(match_col[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[static_cast<size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<size_t>(j0)];
      match_col[static_cast<size_t>(j0)] = match_col[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = match_col[static_cast<size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) row_to_col[static_cast<size_t>(i - 1)] = j - 1;
  }
  std::vector<char> col_used(static_cast<size_t>(cols), 0);
  for (int r = 0; r < rows; ++r) {
    const int c = row_to_col[static_cast<size_t>(r)];
    if (c >= 0) {
      result.matched.emplace_back(r, c);
      result.total_cost += cost[static_cast<size_t>(r)][static_cast<size_t>(c)];
      col_used[static_cast<size_t>(c)] = 1;
    } else {
      result.unmatched_rows.push_back(r);
    }
  }
  for (int c = 0; c < cols; ++c) {
    if (!col_used[static_cast<size_t>(c)]) result.unmatched_cols.push_back(c);
  }
  return result;
}

}  // namespace tcmp

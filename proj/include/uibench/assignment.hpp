#pragma once

// Maximum-weight bipartite assignment (Hungarian method, O(n^3)) with a
// deterministic choice among equal-weight optima.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace uibench {

struct Assignment {
  /// row_to_col[i] is the column assigned to row i, or nullopt if unassigned.
  std::vector<std::optional<std::size_t>> row_to_col;
  double total = 0.0;
};

namespace detail {

// Min-cost perfect assignment on a square matrix; returns (row->col, u, v)
// with u[i] + v[j] <= cost(i, j), tight on assigned pairs.
struct HungarianResult {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u;
  std::vector<double> v;
};

inline HungarianResult hungarian_min(std::size_t n, const std::function<double(std::size_t, std::size_t)>& cost) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based internals; index 0 is the virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  HungarianResult r;
  r.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) r.row_to_col[p[j] - 1] = j - 1;
  r.u.assign(u.begin() + 1, u.end());
  r.v.assign(v.begin() + 1, v.end());
  return r;
}

}  // namespace detail

/// Solves max sum weight(i, j) over partial one-to-one assignments of rows to
/// columns (leaving a row unassigned contributes 0). Among optimal
/// assignments, returns the one whose row->col vector is lexicographically
/// smallest, with "unassigned" ordered after every column.
inline Assignment max_weight_assignment(std::size_t rows, std::size_t cols,
                                        const std::function<double(std::size_t, std::size_t)>& weight,
                                        double tolerance = 1e-9) {
  Assignment out;
  out.row_to_col.assign(rows, std::nullopt);
  if (rows == 0 || cols == 0) return out;

  const std::size_t n = std::max(rows, cols);
  std::vector<double> w(n * n, 0.0);  // padded; dummy rows/cols weigh 0
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) w[i * n + j] = weight(i, j);

  auto cost = [&](std::size_t i, std::size_t j) { return -w[i * n + j]; };
  const auto h = detail::hungarian_min(n, cost);

  // Under an optimal dual, the optimal assignments are exactly the perfect
  // matchings of the tight-edge subgraph.
  std::vector<char> tight(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      tight[i * n + j] = std::abs(cost(i, j) - h.u[i] - h.v[j]) <= tolerance;

  std::vector<std::size_t> row_match = h.row_to_col;
  std::vector<std::size_t> col_match(n);
  for (std::size_t i = 0; i < n; ++i) col_match[row_match[i]] = i;
  std::vector<char> row_fixed(n, 0), col_fixed(n, 0);

  // Augmenting path from a free row to a specific free column over unfixed,
  // tight edges.
  std::vector<char> visited(n);
  std::function<bool(std::size_t, std::size_t)> augment = [&](std::size_t r, std::size_t target) -> bool {
    for (std::size_t c = 0; c < n; ++c) {
      if (col_fixed[c] || visited[c] || !tight[r * n + c]) continue;
      visited[c] = 1;
      if (c == target) {
        row_match[r] = c;
        col_match[c] = r;
        return true;
      }
      const std::size_t next = col_match[c];
      if (next == r) continue;
      if (augment(next, target)) {
        row_match[r] = c;
        col_match[c] = r;
        return true;
      }
    }
    return false;
  };

  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (col_fixed[j] || !tight[i * n + j]) continue;
      if (row_match[i] == j) break;
      // Force (i, j): free i's partner column and j's partner row, then try to
      // re-match the displaced row into the freed column.
      const auto saved_rows = row_match;
      const auto saved_cols = col_match;
      const std::size_t freed_col = row_match[i];
      const std::size_t displaced_row = col_match[j];
      row_match[i] = j;
      col_match[j] = i;
      row_fixed[i] = 1;
      col_fixed[j] = 1;
      std::fill(visited.begin(), visited.end(), 0);
      if (augment(displaced_row, freed_col)) break;
      row_match = saved_rows;
      col_match = saved_cols;
      row_fixed[i] = 0;
      col_fixed[j] = 0;
    }
    row_fixed[i] = 1;
    col_fixed[row_match[i]] = 1;
  }

  for (std::size_t i = 0; i < rows; ++i) {
    if (row_match[i] < cols) {
      out.row_to_col[i] = row_match[i];
      out.total += w[i * n + row_match[i]];
    }
  }
  return out;
}

}  // namespace uibench

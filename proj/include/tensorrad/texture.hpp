/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Gray-level texture matrices over a discretized ROI.
//
// All neighbour relations are on the voxel lattice (spacing is ignored). A grid
// with a single z slice uses the 2D conventions: 4 co-occurrence/run directions
// and the 8-neighbour shell; otherwise 13 directions and the 26-neighbour shell.

#include <algorithm>
#include <vector>

#include "tensorrad/discretize.hpp"
#include "tensorrad/volume.hpp"

namespace tensorrad {

using Offset = std::array<int, 3>;

/// Discretized ROI placed back on its grid; level 0 marks voxels outside the mask.
struct LevelGrid {
  Dims dims;
  std::vector<int> levels;
  int ng = 1;

  bool inside(std::size_t idx) const { return levels[idx] > 0; }
  std::size_t roi_size() const {
    return static_cast<std::size_t>(std::count_if(levels.begin(), levels.end(), [](int l) { return l > 0; }));
  }
};

inline LevelGrid make_level_grid(const RoiMask& mask, const DiscretizedRoi& disc) {
  if (mask.count() != disc.levels.size()) throw Error("make_level_grid: mask size differs from discretized values");
  LevelGrid g{mask.dims(), std::vector<int>(mask.dims().size(), 0), disc.ng};
  std::size_t k = 0;
  for (std::size_t i = 0; i < g.levels.size(); ++i)
    if (mask.contains(i)) g.levels[i] = disc.levels[k++];
  return g;
}

/// One offset per unordered direction pair: 13 in 3D, 4 in 2D.
inline std::vector<Offset> direction_offsets(bool is_2d) {
  std::vector<Offset> out;
  for (int dz = is_2d ? 0 : -1; dz <= (is_2d ? 0 : 1); ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const bool positive = dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0);
        if (positive) out.push_back({dx, dy, dz});
      }
  return out;
}

/// Chebyshev-1 shell: 26 neighbours in 3D, 8 in 2D.
inline std::vector<Offset> neighbour_offsets(bool is_2d) {
  std::vector<Offset> out;
  for (int dz = is_2d ? 0 : -1; dz <= (is_2d ? 0 : 1); ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (dx || dy || dz) out.push_back({dx, dy, dz});
  return out;
}

namespace detail {
/// Index of voxel `idx` moved by `o`, or -1 when it leaves the grid.
inline long step(const Dims& d, std::size_t idx, const Offset& o) {
  const auto c = d.coords(idx);
  const long x = static_cast<long>(c[0]) + o[0];
  const long y = static_cast<long>(c[1]) + o[1];
  const long z = static_cast<long>(c[2]) + o[2];
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(d.x) || y >= static_cast<long>(d.y) ||
      z >= static_cast<long>(d.z))
    return -1;
  return static_cast<long>(d.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                   static_cast<std::size_t>(z)));
}
}  // namespace detail

/// Dense integer matrix, row-major; rows are gray levels 1..ng stored at 0..ng-1.
struct CountMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<long long> counts;

  CountMatrix() = default;
  CountMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), counts(r * c, 0) {}
  long long& at(std::size_t r, std::size_t c) { return counts[r * cols + c]; }
  long long at(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
  long long total() const {
    long long s = 0;
    for (auto v : counts) s += v;
    return s;
  }
  friend bool operator==(const CountMatrix&, const CountMatrix&) = default;
};

// ---------------------------------------------------------------------------
// GLCM

struct Glcm {
  int ng = 1;
  std::vector<Offset> directions;
  std::vector<CountMatrix> per_direction;  // symmetrized pair counts
  std::vector<double> p;                   // ng*ng, mean of the normalized non-empty directions
  int valid_directions = 0;

  double at(int i, int j) const { return p[static_cast<std::size_t>((i - 1) * ng + (j - 1))]; }
};

inline Glcm glcm(const LevelGrid& g, const std::vector<Offset>& directions) {
  if (g.ng < 1) throw Error("glcm: ng must be >= 1");
  const auto ng = static_cast<std::size_t>(g.ng);
  Glcm out;
  out.ng = g.ng;
  out.directions = directions;
  out.p.assign(ng * ng, 0.0);
  for (const auto& o : directions) {
    CountMatrix m(ng, ng);
    for (std::size_t idx = 0; idx < g.levels.size(); ++idx) {
      if (!g.inside(idx)) continue;
      const long nb = detail::step(g.dims, idx, o);
      if (nb < 0 || !g.inside(static_cast<std::size_t>(nb))) continue;
      const auto a = static_cast<std::size_t>(g.levels[idx] - 1);
      const auto b = static_cast<std::size_t>(g.levels[static_cast<std::size_t>(nb)] - 1);
      ++m.at(a, b);
      ++m.at(b, a);
    }
    const long long total = m.total();
    if (total > 0) {
      ++out.valid_directions;
      for (std::size_t k = 0; k < m.counts.size(); ++k)
        out.p[k] += static_cast<double>(m.counts[k]) / static_cast<double>(total);
    }
    out.per_direction.push_back(std::move(m));
  }
  if (out.valid_directions > 0)
    for (auto& v : out.p) v /= out.valid_directions;
  return out;
}

inline Glcm glcm(const LevelGrid& g) { return glcm(g, direction_offsets(g.dims.is_2d())); }

// ---------------------------------------------------------------------------
// GLRLM

struct Glrlm {
  int ng = 1;
  std::vector<Offset> directions;
  std::vector<CountMatrix> per_direction;  // rows level, cols run length - 1
  std::size_t n_voxels = 0;

  /// Mean over directions of the raw run counts.
  std::vector<double> averaged() const {
    std::vector<double> avg(per_direction.empty() ? 0 : per_direction.front().counts.size(), 0.0);
    for (const auto& m : per_direction)
      for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += static_cast<double>(m.counts[k]);
    for (auto& v : avg) v /= static_cast<double>(per_direction.size());
    return avg;
  }
  std::size_t max_run() const { return per_direction.empty() ? 0 : per_direction.front().cols; }
};

inline Glrlm glrlm(const LevelGrid& g, const std::vector<Offset>& directions) {
  const std::size_t n_roi = g.roi_size();
  if (n_roi == 0) throw Error("glrlm: empty ROI");
  const auto ng = static_cast<std::size_t>(g.ng);
  const std::size_t max_run = std::max({g.dims.x, g.dims.y, g.dims.z});
  Glrlm out;
  out.ng = g.ng;
  out.directions = directions;
  out.n_voxels = n_roi;
  for (const auto& o : directions) {
    CountMatrix m(ng, max_run);
    const Offset back{-o[0], -o[1], -o[2]};
    for (std::size_t idx = 0; idx < g.levels.size(); ++idx) {
      if (!g.inside(idx)) continue;
      const int level = g.levels[idx];
      const long prev = detail::step(g.dims, idx, back);
      if (prev >= 0 && g.levels[static_cast<std::size_t>(prev)] == level) continue;  // not a run start
      std::size_t len = 1;
      long cur = detail::step(g.dims, idx, o);
      while (cur >= 0 && g.levels[static_cast<std::size_t>(cur)] == level) {
        ++len;
        cur = detail::step(g.dims, static_cast<std::size_t>(cur), o);
      }
      ++m.at(static_cast<std::size_t>(level - 1), len - 1);
    }
    out.per_direction.push_back(std::move(m));
  }
  return out;
}

inline Glrlm glrlm(const LevelGrid& g) { return glrlm(g, direction_offsets(g.dims.is_2d())); }

// ---------------------------------------------------------------------------
// GLSZM

struct Glszm {
  int ng = 1;
  CountMatrix counts;  // rows level, cols zone size - 1 (cols = largest zone)
  std::size_t n_voxels = 0;
};

inline Glszm glszm(const LevelGrid& g) {
  const std::size_t n_roi = g.roi_size();
  if (n_roi == 0) throw Error("glszm: empty ROI");
  const auto nbrs = neighbour_offsets(g.dims.is_2d());
  std::vector<char> seen(g.levels.size(), 0);
  std::vector<std::pair<int, std::size_t>> zones;
  std::vector<std::size_t> stack;
  std::size_t largest = 1;
  for (std::size_t idx = 0; idx < g.levels.size(); ++idx) {
    if (!g.inside(idx) || seen[idx]) continue;
    const int level = g.levels[idx];
    std::size_t size = 0;
    stack.assign(1, idx);
    seen[idx] = 1;
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      for (const auto& o : nbrs) {
        const long nb = detail::step(g.dims, cur, o);
        if (nb < 0) continue;
        const auto n = static_cast<std::size_t>(nb);
        if (!seen[n] && g.levels[n] == level) {
          seen[n] = 1;
          stack.push_back(n);
        }
      }
    }
    zones.emplace_back(level, size);
    largest = std::max(largest, size);
  }
  Glszm out;
  out.ng = g.ng;
  out.n_voxels = n_roi;
  out.counts = CountMatrix(static_cast<std::size_t>(g.ng), largest);
  for (const auto& [level, size] : zones) ++out.counts.at(static_cast<std::size_t>(level - 1), size - 1);
  return out;
}

// ---------------------------------------------------------------------------
// GLDM (alpha = 0)

struct Gldm {
  int ng = 1;
  CountMatrix counts;  // rows level, cols dependence k (k+1 = column index + 1)
  std::size_t n_voxels = 0;
};

inline Gldm gldm(const LevelGrid& g, int alpha = 0) {
  const std::size_t n_roi = g.roi_size();
  if (n_roi == 0) throw Error("gldm: empty ROI");
  const auto nbrs = neighbour_offsets(g.dims.is_2d());
  Gldm out;
  out.ng = g.ng;
  out.n_voxels = n_roi;
  out.counts = CountMatrix(static_cast<std::size_t>(g.ng), nbrs.size() + 1);
  for (std::size_t idx = 0; idx < g.levels.size(); ++idx) {
    if (!g.inside(idx)) continue;
    std::size_t k = 0;
    for (const auto& o : nbrs) {
      const long nb = detail::step(g.dims, idx, o);
      if (nb >= 0 && g.inside(static_cast<std::size_t>(nb)) &&
          std::abs(g.levels[static_cast<std::size_t>(nb)] - g.levels[idx]) <= alpha)
        ++k;
    }
    ++out.counts.at(static_cast<std::size_t>(g.levels[idx] - 1), k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// NGTDM

struct Ngtdm {
  int ng = 1;
  std::vector<double> s;     // per level: sum |i - neighbourhood mean|
  std::vector<long long> n;  // per level: voxels with at least one in-mask neighbour
};

inline Ngtdm ngtdm(const LevelGrid& g) {
  if (g.roi_size() == 0) throw Error("ngtdm: empty ROI");
  const auto nbrs = neighbour_offsets(g.dims.is_2d());
  Ngtdm out;
  out.ng = g.ng;
  out.s.assign(static_cast<std::size_t>(g.ng), 0.0);
  out.n.assign(static_cast<std::size_t>(g.ng), 0);
  for (std::size_t idx = 0; idx < g.levels.size(); ++idx) {
    if (!g.inside(idx)) continue;
    long sum = 0;
    int count = 0;
    for (const auto& o : nbrs) {
      const long nb = detail::step(g.dims, idx, o);
      if (nb >= 0 && g.inside(static_cast<std::size_t>(nb))) {
        sum += g.levels[static_cast<std::size_t>(nb)];
        ++count;
      }
    }
    if (count == 0) continue;
    const int level = g.levels[idx];
    const auto li = static_cast<std::size_t>(level - 1);
    out.s[li] += std::abs(level - static_cast<double>(sum) / count);
    ++out.n[li];
  }
  return out;
}

}  // namespace tensorrad

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

#include <algorithm>
#include <set>
#include <span>
#include <vector>

#include "tensorrad/flavour.hpp"

namespace tensorrad {

enum class BinScheme { FBW, FBC };

/// Integer gray levels (1..ng) for the masked voxels, in the order the values were given.
struct DiscretizedRoi {
  std::vector<int> levels;
  int ng = 1;
  BinScheme scheme = BinScheme::FBW;
  double parameter = 0.0;  // bin width (FBW) or bin count (FBC)
  double anchor_min = 0.0;
  double anchor_max = 0.0;

  /// Occupancy of levels 1..ng (index 0 unused).
  std::vector<std::size_t> histogram() const {
    std::vector<std::size_t> h(static_cast<std::size_t>(ng) + 1, 0);
    for (int l : levels) ++h[static_cast<std::size_t>(l)];
    return h;
  }
};

namespace detail {
inline std::pair<double, double> checked_range(std::span<const double> values, const char* who) {
  if (values.empty()) throw Error(std::string(who) + ": empty input");
  for (double v : values)
    if (!std::isfinite(v)) throw Error(std::string(who) + ": non-finite value");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {*lo, *hi};
}
}  // namespace detail

/// Fixed bin width anchored at the ROI minimum: level = floor((x - min) / width) + 1.
inline DiscretizedRoi discretize_fbw(std::span<const double> values, double width) {
  if (!(width > 0.0) || !std::isfinite(width)) throw Error("discretize_fbw: width must be > 0");
  auto [lo, hi] = detail::checked_range(values, "discretize_fbw");
  DiscretizedRoi out;
  out.scheme = BinScheme::FBW;
  out.parameter = width;
  out.anchor_min = lo;
  out.anchor_max = hi;
  out.levels.reserve(values.size());
  for (double v : values) out.levels.push_back(static_cast<int>(std::floor((v - lo) / width)) + 1);
  out.ng = static_cast<int>(std::floor((hi - lo) / width)) + 1;
  return out;
}

/// Fixed bin count: level = min(N, floor(N (x - min) / (max - min)) + 1).
inline DiscretizedRoi discretize_fbc(std::span<const double> values, int count) {
  if (count < 2) throw Error("discretize_fbc: bin count must be >= 2");
  auto [lo, hi] = detail::checked_range(values, "discretize_fbc");
  DiscretizedRoi out;
  out.scheme = BinScheme::FBC;
  out.parameter = count;
  out.anchor_min = lo;
  out.anchor_max = hi;
  out.levels.reserve(values.size());
  if (hi == lo) {
    out.levels.assign(values.size(), 1);
    out.ng = 1;
    return out;
  }
  const double range = hi - lo;
  for (double v : values) {
    const int l = static_cast<int>(std::floor(count * (v - lo) / range)) + 1;
    out.levels.push_back(std::min(count, l));
  }
  out.ng = count;
  return out;
}

/// One BIN_WIDTH key per width then one BIN_COUNT key per count.
inline std::vector<FlavourKey> bin_flavour_grid(std::span<const double> widths, std::span<const int> counts) {
  std::vector<FlavourKey> out;
  std::set<double> seen_w;
  for (double w : widths) {
    if (!(w > 0.0)) throw Error("bin_flavour_grid: widths must be positive");
    if (!seen_w.insert(w).second) throw Error("bin_flavour_grid: duplicate width " + format_double(w));
    out.push_back(FlavourKey(FlavourAxis::BIN_WIDTH).set("width", w));
  }
  std::set<int> seen_c;
  for (int c : counts) {
    if (c < 2) throw Error("bin_flavour_grid: counts must be >= 2");
    if (!seen_c.insert(c).second) throw Error("bin_flavour_grid: duplicate count " + std::to_string(c));
    out.push_back(FlavourKey(FlavourAxis::BIN_COUNT).set("count", c));
  }
  return out;
}

}  // namespace tensorrad

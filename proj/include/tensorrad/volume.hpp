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
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tensorrad/common.hpp"

namespace tensorrad {

/// Grid extent. Voxel order everywhere is x-fastest, then y, then z.
struct Dims {
  std::size_t x = 1, y = 1, z = 1;

  constexpr std::size_t size() const { return x * y * z; }
  constexpr std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + x * (j + y * k);
  }
  constexpr std::array<std::size_t, 3> coords(std::size_t idx) const {
    return {idx % x, (idx / x) % y, idx / (x * y)};
  }
  /// Single-slice grids use 2D neighbourhoods and direction sets.
  constexpr bool is_2d() const { return z == 1; }
  constexpr std::size_t operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d.x) + "x" + std::to_string(d.y) + "x" + std::to_string(d.z);
}

struct Spacing {
  double x = 1.0, y = 1.0, z = 1.0;
  constexpr double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

enum class Unit { HU, SUV, ARBITRARY };

inline std::string to_string(Unit u) {
  switch (u) {
    case Unit::HU: return "HU";
    case Unit::SUV: return "SUV";
    case Unit::ARBITRARY: return "ARBITRARY";
  }
  return "ARBITRARY";
}

inline Unit unit_from_string(const std::string& s) {
  if (s == "HU") return Unit::HU;
  if (s == "SUV") return Unit::SUV;
  if (s == "ARBITRARY") return Unit::ARBITRARY;
  throw Error("unknown intensity unit '" + s + "'");
}

/// Immutable 3D scalar image with physical spacing.
class Volume {
public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, Unit unit, std::vector<double> data)
      : dims_(dims), spacing_(spacing), unit_(unit), data_(std::move(data)) {
    if (dims_.x == 0 || dims_.y == 0 || dims_.z == 0) throw Error("volume dims must be positive");
    if (!(spacing_.x > 0 && spacing_.y > 0 && spacing_.z > 0))
      throw Error("volume spacing must be strictly positive");
    if (data_.size() != dims_.size())
      throw Error("volume data length " + std::to_string(data_.size()) + " does not match dims " +
                  to_string(dims_));
    for (double v : data_)
      if (!std::isfinite(v)) throw Error("volume contains a non-finite value");
  }

  /// Constant-filled volume.
  static Volume filled(Dims dims, Spacing spacing, Unit unit, double value) {
    return Volume(dims, spacing, unit, std::vector<double>(dims.size(), value));
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  Unit unit() const { return unit_; }
  std::span<const double> data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  double operator[](std::size_t idx) const { return data_[idx]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data_[dims_.index(i, j, k)]; }

  /// Same geometry, new samples.
  Volume with_data(std::vector<double> data, std::optional<Unit> unit = std::nullopt) const {
    return Volume(dims_, spacing_, unit.value_or(unit_), std::move(data));
  }

private:
  Dims dims_{};
  Spacing spacing_{};
  Unit unit_ = Unit::ARBITRARY;
  std::vector<double> data_ = std::vector<double>(1, 0.0);
};

/// Binary segmentation aligned to a Volume grid.
class RoiMask {
public:
  RoiMask() = default;
  RoiMask(Dims dims, std::vector<std::uint8_t> inside) : dims_(dims), inside_(std::move(inside)) {
    if (inside_.size() != dims_.size()) throw Error("mask length does not match dims " + to_string(dims_));
    for (auto& v : inside_) v = v ? 1 : 0;
  }

  static RoiMask empty(Dims dims) { return RoiMask(dims, std::vector<std::uint8_t>(dims.size(), 0)); }
  static RoiMask full(Dims dims) { return RoiMask(dims, std::vector<std::uint8_t>(dims.size(), 1)); }

  /// Builds a mask from (i,j,k) grid coordinates; out-of-range coordinates are rejected.
  static RoiMask from_coords(Dims dims, std::span<const std::array<std::size_t, 3>> coords) {
    RoiMask m = empty(dims);
    for (const auto& c : coords) {
      if (c[0] >= dims.x || c[1] >= dims.y || c[2] >= dims.z)
        throw Error("mask index (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                    std::to_string(c[2]) + ") outside dims " + to_string(dims));
      m.inside_[dims.index(c[0], c[1], c[2])] = 1;
    }
    return m;
  }

  const Dims& dims() const { return dims_; }
  bool contains(std::size_t idx) const { return inside_[idx] != 0; }
  bool contains(std::size_t i, std::size_t j, std::size_t k) const { return inside_[dims_.index(i, j, k)] != 0; }
  std::span<const std::uint8_t> bits() const { return inside_; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(inside_.begin(), inside_.end(), 1)); }
  bool is_empty() const { return count() == 0; }

  /// Included voxel indices in canonical order.
  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < inside_.size(); ++i)
      if (inside_[i]) out.push_back(i);
    return out;
  }

  friend bool operator==(const RoiMask&, const RoiMask&) = default;

private:
  Dims dims_{};
  std::vector<std::uint8_t> inside_ = std::vector<std::uint8_t>(1, 0);
};

/// One lesion: volumes keyed by intensity unit, a shared mask, a patient grouping key.
struct Case {
  std::string case_id;
  std::string patient_id;
  std::map<Unit, Volume> volumes;
  RoiMask mask;
  std::optional<int> label;

  /// Checks the cross-field invariants; throws on violation.
  void validate() const {
    if (patient_id.empty()) throw Error("case '" + case_id + "' has an empty patient_id");
    if (volumes.empty()) throw Error("case '" + case_id + "' has no volumes");
    for (const auto& [unit, vol] : volumes)
      if (vol.dims() != mask.dims())
        throw Error("case '" + case_id + "': " + to_string(unit) + " volume dims differ from mask");
    if (label && *label != 0 && *label != 1) throw Error("case '" + case_id + "': label must be 0 or 1");
  }

  /// Volume for `unit`, or the first volume when the case is single-modality and unit is unset.
  const Volume& volume(std::optional<Unit> unit = std::nullopt) const {
    if (!unit) return volumes.begin()->second;
    auto it = volumes.find(*unit);
    if (it == volumes.end()) throw Error("case '" + case_id + "' has no " + to_string(*unit) + " volume");
    return it->second;
  }
};

/// Intensities of the masked voxels in canonical order.
inline std::vector<double> roi_values(const Volume& volume, const RoiMask& mask) {
  if (volume.dims() != mask.dims()) throw Error("roi_values: volume/mask dims mismatch");
  std::vector<double> out;
  out.reserve(mask.count());
  auto data = volume.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (mask.contains(i)) out.push_back(data[i]);
  if (out.empty()) throw Error("roi_values: empty mask");
  return out;
}

enum class Interp { NEAREST, TRILINEAR };

/// Samples the volume at x + shift (voxel units), clamping out-of-field samples to the edge.
inline Volume resample_translate(const Volume& volume, std::array<double, 3> shift, Interp interp) {
  for (double s : shift) {
    if (!std::isfinite(s)) throw Error("resample_translate: non-finite shift");
    if (std::abs(s) > 2.0) throw Error("resample_translate: shift component exceeds 2 voxels");
  }
  const Dims& d = volume.dims();
  auto clampi = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
  };
  std::vector<double> out(d.size());
  for (std::size_t k = 0; k < d.z; ++k)
    for (std::size_t j = 0; j < d.y; ++j)
      for (std::size_t i = 0; i < d.x; ++i) {
        const double p[3] = {i + shift[0], j + shift[1], k + shift[2]};
        double v = 0.0;
        if (interp == Interp::NEAREST) {
          v = volume.at(clampi(std::lround(std::floor(p[0] + 0.5)), d.x),
                        clampi(std::lround(std::floor(p[1] + 0.5)), d.y),
                        clampi(std::lround(std::floor(p[2] + 0.5)), d.z));
        } else {
          long base[3];
          double frac[3];
          for (int a = 0; a < 3; ++a) {
            const double f = std::floor(p[a]);
            base[a] = static_cast<long>(f);
            frac[a] = p[a] - f;
          }
          for (int c = 0; c < 8; ++c) {
            double w = 1.0;
            std::size_t q[3];
            for (int a = 0; a < 3; ++a) {
              const int bit = (c >> a) & 1;
              w *= bit ? frac[a] : 1.0 - frac[a];
              q[a] = clampi(base[a] + bit, d[a]);
            }
            if (w != 0.0) v += w * volume.at(q[0], q[1], q[2]);
          }
        }
        out[d.index(i, j, k)] = v;
      }
  return volume.with_data(std::move(out));
}

}  // namespace tensorrad

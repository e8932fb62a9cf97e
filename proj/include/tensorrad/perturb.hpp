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

// Segmentation perturbations: translation (T), volume adaptation (V) and
// contour randomization (C), always composed in that order.

#include <random>
#include <span>
#include <vector>

#include "tensorrad/filters.hpp"
#include "tensorrad/flavour.hpp"
#include "tensorrad/random.hpp"
#include "tensorrad/texture.hpp"
#include "tensorrad/volume.hpp"

namespace tensorrad {

struct Translation {
  std::array<double, 3> shift{0.0, 0.0, 0.0};  // voxels
};

struct ContourNoise {
  double sigma_mm = 2.0;
  double amplitude = 1.0;  // mm of signed-distance displacement per unit noise
  std::uint64_t seed = 0;
};

struct PerturbSpec {
  std::optional<Translation> translate;
  std::optional<int> volume_level;
  std::optional<ContourNoise> contour;
  std::size_t min_roi_voxels = 8;
  int max_level = 3;

  void validate() const {
    if (volume_level && std::abs(*volume_level) > max_level)
      throw Error("volume adaptation level exceeds +/-" + std::to_string(max_level));
    if (contour && !(contour->amplitude > 0.0)) throw Error("contour amplitude must be > 0");
    if (contour && !(contour->sigma_mm > 0.0)) throw Error("contour sigma must be > 0");
  }

  FlavourKey key() const {
    FlavourKey k(FlavourAxis::PERTURB);
    if (translate) {
      k.set("tx", translate->shift[0]);
      k.set("ty", translate->shift[1]);
      k.set("tz", translate->shift[2]);
    }
    if (volume_level) k.set("level", *volume_level);
    if (contour) {
      k.set("sigma_mm", contour->sigma_mm);
      k.set("amplitude", contour->amplitude);
      k.set("seed", static_cast<unsigned long>(contour->seed));
    }
    return k;
  }

  static PerturbSpec from_key(const FlavourKey& key) {
    if (key.axis() != FlavourAxis::PERTURB) throw Error("not a PERTURB flavour: " + key.str());
    PerturbSpec s;
    if (key.has("tx") || key.has("ty") || key.has("tz"))
      s.translate = Translation{{parse_double(key.get_or("tx", "0")), parse_double(key.get_or("ty", "0")),
                                 parse_double(key.get_or("tz", "0"))}};
    if (key.has("level")) s.volume_level = static_cast<int>(key.get_int("level"));
    if (key.has("amplitude"))
      s.contour = ContourNoise{parse_double(key.get_or("sigma_mm", "2")), key.get_double("amplitude"),
                               static_cast<std::uint64_t>(key.get_int("seed"))};
    s.validate();
    return s;
  }
};

/// Outcome of a mask operation that may shrink the ROI below the usable minimum.
struct PerturbedMask {
  RoiMask mask;
  bool degenerate = false;
};

namespace detail {
inline std::vector<Offset> cross_offsets(bool is_2d) {
  std::vector<Offset> o{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  if (!is_2d) {
    o.push_back({0, 0, 1});
    o.push_back({0, 0, -1});
  }
  return o;
}

inline RoiMask morph_step(const RoiMask& m, bool dilate) {
  const Dims& d = m.dims();
  const auto offs = cross_offsets(d.is_2d());
  std::vector<std::uint8_t> out(d.size(), 0);
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    if (dilate) {
      bool hit = m.contains(idx);
      for (std::size_t k = 0; !hit && k < offs.size(); ++k) {
        const long nb = step(d, idx, offs[k]);
        hit = nb >= 0 && m.contains(static_cast<std::size_t>(nb));
      }
      out[idx] = hit;
    } else {
      bool keep = m.contains(idx);
      for (std::size_t k = 0; keep && k < offs.size(); ++k) {
        const long nb = step(d, idx, offs[k]);
        keep = nb >= 0 && m.contains(static_cast<std::size_t>(nb));
      }
      out[idx] = keep;
    }
  }
  return RoiMask(d, std::move(out));
}
}  // namespace detail

inline RoiMask dilate(const RoiMask& m) { return detail::morph_step(m, true); }
inline RoiMask erode(const RoiMask& m) { return detail::morph_step(m, false); }

/// |level| dilations (level > 0) or erosions (level < 0) with the unit cross
/// (4-neighbour + centre in 2D, 6-neighbour + centre in 3D).
inline PerturbedMask volume_adapt(const RoiMask& mask, int level, std::size_t min_roi_voxels = 8) {
  if (mask.is_empty()) throw Error("volume_adapt: empty mask");
  RoiMask cur = mask;
  for (int i = 0; i < std::abs(level); ++i) cur = level > 0 ? dilate(cur) : erode(cur);
  const bool degenerate = cur.count() < min_roi_voxels;
  return {std::move(cur), degenerate};
}

/// Signed Euclidean distance in mm: positive inside (distance to the nearest outside
/// voxel), negative outside (minus the distance to the nearest inside voxel).
inline std::vector<double> signed_distance(const RoiMask& mask, const Spacing& sp) {
  const Dims& d = mask.dims();
  const auto offs = detail::cross_offsets(d.is_2d());
  // The nearest voxel of the opposite class always has a face neighbour in this class.
  std::vector<std::array<double, 3>> border_in, border_out;
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    bool border = false;
    for (const auto& o : offs) {
      const long nb = detail::step(d, idx, o);
      if (nb >= 0 && mask.contains(static_cast<std::size_t>(nb)) != mask.contains(idx)) border = true;
    }
    if (!border) continue;
    const auto c = d.coords(idx);
    std::array<double, 3> p{c[0] * sp.x, c[1] * sp.y, c[2] * sp.z};
    (mask.contains(idx) ? border_in : border_out).push_back(p);
  }
  const double far = 1e9;
  std::vector<double> out(d.size());
  for (std::size_t idx = 0; idx < d.size(); ++idx) {
    const auto c = d.coords(idx);
    const std::array<double, 3> p{c[0] * sp.x, c[1] * sp.y, c[2] * sp.z};
    const bool in = mask.contains(idx);
    const auto& targets = in ? border_out : border_in;
    double best = far;
    for (const auto& q : targets) {
      const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    const double dist = best == far ? far : std::sqrt(best);
    out[idx] = in ? dist : -dist;
  }
  return out;
}

/// Seeded white noise smoothed by a Gaussian (sigma in mm) and rescaled to unit variance.
inline std::vector<double> smooth_noise_field(const Dims& d, const Spacing& sp, double sigma_mm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> field(d.size());
  for (auto& v : field) v = normal01(rng);
  std::array<std::vector<double>, 3> taps;
  std::array<long, 3> origins{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    auto& t = taps[static_cast<std::size_t>(a)];
    if (d[a] == 1) {
      t = {1.0};
      continue;
    }
    const auto f = log_axis_factors(sigma_mm, sp[a]);
    t = f.gauss;
    double s = 0.0;
    for (double x : t) s += x;
    for (double& x : t) x /= s;
    origins[static_cast<std::size_t>(a)] = f.radius;
  }
  field = detail::convolve_separable(field, d, taps, origins);
  double mean = 0.0, var = 0.0;
  for (double v : field) mean += v;
  mean /= static_cast<double>(field.size());
  for (double v : field) var += (v - mean) * (v - mean);
  var /= static_cast<double>(field.size());
  const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
  for (double& v : field) v = (v - mean) / sd;
  return field;
}

/// Re-thresholds signed distance + amplitude * smoothed noise at zero.
inline PerturbedMask contour_randomize(const RoiMask& mask, const Spacing& spacing, const ContourNoise& noise,
                                       std::size_t min_roi_voxels = 8) {
  if (mask.is_empty()) throw Error("contour_randomize: empty mask");
  if (!(noise.amplitude > 0.0)) throw Error("contour_randomize: amplitude must be > 0");
  const auto sd = signed_distance(mask, spacing);
  const auto field = smooth_noise_field(mask.dims(), spacing, noise.sigma_mm, noise.seed);
  std::vector<std::uint8_t> out(sd.size());
  for (std::size_t i = 0; i < sd.size(); ++i) out[i] = sd[i] + noise.amplitude * field[i] > 0.0;
  RoiMask m(mask.dims(), std::move(out));
  const bool degenerate = m.count() < min_roi_voxels;
  return {std::move(m), degenerate};
}

/// Perturbed image/mask pair for one case volume.
struct PerturbedRoi {
  Volume volume;
  RoiMask mask;
  bool degenerate = false;
};

/// T shifts the image (trilinear, edge clamp); V then C act on the mask.
inline PerturbedRoi apply_perturbation(const Volume& volume, const RoiMask& mask, const PerturbSpec& spec) {
  spec.validate();
  PerturbedRoi out{volume, mask, false};
  if (spec.translate) out.volume = resample_translate(volume, spec.translate->shift, Interp::TRILINEAR);
  if (spec.volume_level) {
    auto r = volume_adapt(out.mask, *spec.volume_level, spec.min_roi_voxels);
    out.mask = std::move(r.mask);
    out.degenerate = out.degenerate || r.degenerate;
  }
  if (spec.contour && !out.mask.is_empty()) {
    auto r = contour_randomize(out.mask, volume.spacing(), *spec.contour, spec.min_roi_voxels);
    out.mask = std::move(r.mask);
    out.degenerate = out.degenerate || r.degenerate;
  }
  out.degenerate = out.degenerate || out.mask.count() < spec.min_roi_voxels;
  return out;
}

/// V-only keys (levels -K..-1, 1..K) followed by the TVC product
/// translations x levels x contour seeds; only VANILLA when everything is empty.
inline std::vector<FlavourKey> perturbation_flavour_grid(int max_volume_level, std::span<const Translation> shifts,
                                                         std::span<const int> tvc_levels,
                                                         std::span<const std::uint64_t> contour_seeds,
                                                         double contour_sigma_mm = 2.0, double contour_amplitude = 1.0) {
  std::vector<FlavourKey> out;
  for (int k = -max_volume_level; k <= max_volume_level; ++k) {
    if (k == 0) continue;
    PerturbSpec s;
    s.volume_level = k;
    s.max_level = std::max(3, max_volume_level);
    out.push_back(s.key());
  }
  for (const auto& t : shifts)
    for (int level : tvc_levels)
      for (auto seed : contour_seeds) {
        PerturbSpec s;
        s.translate = t;
        s.volume_level = level;
        s.contour = ContourNoise{contour_sigma_mm, contour_amplitude, seed};
        out.push_back(s.key());
      }
  if (out.empty()) out.push_back(vanilla_flavour());
  return out;
}

}  // namespace tensorrad

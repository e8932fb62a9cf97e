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

#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tensorrad/flavour.hpp"
#include "tensorrad/volume.hpp"

namespace tensorrad {

enum class FilterKind { NONE, LOG, WAVELET, EXPONENTIAL, GRADIENT, LOGARITHM, SQUARE, SQRT };

inline std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::NONE: return "NONE";
    case FilterKind::LOG: return "LOG";
    case FilterKind::WAVELET: return "WAVELET";
    case FilterKind::EXPONENTIAL: return "EXPONENTIAL";
    case FilterKind::GRADIENT: return "GRADIENT";
    case FilterKind::LOGARITHM: return "LOGARITHM";
    case FilterKind::SQUARE: return "SQUARE";
    case FilterKind::SQRT: return "SQRT";
  }
  return "NONE";
}

inline FilterKind filter_kind_from_string(const std::string& s) {
  for (auto k : {FilterKind::NONE, FilterKind::LOG, FilterKind::WAVELET, FilterKind::EXPONENTIAL,
                 FilterKind::GRADIENT, FilterKind::LOGARITHM, FilterKind::SQUARE, FilterKind::SQRT})
    if (to_string(k) == s) return k;
  throw Error("unknown filter kind '" + s + "'");
}

inline const std::vector<std::string>& wavelet_bands() {
  static const std::vector<std::string> bands = {"HHH", "HHL", "HLH", "HLL", "LHH", "LHL", "LLH", "LLL"};
  return bands;
}

struct FilterSpec {
  FilterKind kind = FilterKind::NONE;
  double sigma_mm = 0.0;  // LOG only
  std::string band;       // WAVELET only, letter i filters axis i

  void validate() const {
    if (kind == FilterKind::LOG && !(sigma_mm > 0.0)) throw Error("LOG filter needs sigma_mm > 0");
    if (kind == FilterKind::WAVELET) {
      bool ok = false;
      for (const auto& b : wavelet_bands()) ok = ok || b == band;
      if (!ok) throw Error("unknown wavelet band '" + band + "'");
    }
  }

  FlavourKey key() const {
    FlavourKey k(FlavourAxis::FILTER);
    k.set("kind", to_string(kind));
    if (kind == FilterKind::LOG) k.set("sigma_mm", sigma_mm);
    if (kind == FilterKind::WAVELET) k.set("band", band);
    return k;
  }

  static FilterSpec from_key(const FlavourKey& key) {
    if (key.axis() != FlavourAxis::FILTER) throw Error("not a FILTER flavour: " + key.str());
    FilterSpec s;
    s.kind = filter_kind_from_string(key.get("kind"));
    if (s.kind == FilterKind::LOG) s.sigma_mm = key.get_double("sigma_mm");
    if (s.kind == FilterKind::WAVELET) s.band = key.get("band");
    s.validate();
    return s;
  }
};

namespace detail {

/// Half-sample symmetric reflection (edge sample repeated), valid for any offset.
inline std::size_t reflect_index(long i, std::size_t n) {
  const long len = static_cast<long>(n);
  const long period = 2 * len;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < len ? m : period - 1 - m);
}

/// out[p] = sum_t taps[t] * in[p + t - origin] along `axis`, reflective boundary.
inline std::vector<double> convolve_axis(std::span<const double> in, const Dims& d, int axis,
                                         std::span<const double> taps, long origin) {
  std::vector<double> out(in.size(), 0.0);
  const std::size_t n = d[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.x : d.x * d.y;
  for (std::size_t idx = 0; idx < in.size(); ++idx) {
    const std::size_t pos = d.coords(idx)[static_cast<std::size_t>(axis)];
    const std::size_t line0 = idx - pos * stride;
    double acc = 0.0;
    for (std::size_t t = 0; t < taps.size(); ++t) {
      const long src = static_cast<long>(pos) + static_cast<long>(t) - origin;
      acc += taps[t] * in[line0 + reflect_index(src, n) * stride];
    }
    out[idx] = acc;
  }
  return out;
}

inline std::vector<double> convolve_separable(std::span<const double> in, const Dims& d,
                                              const std::array<std::vector<double>, 3>& taps,
                                              const std::array<long, 3>& origins) {
  std::vector<double> cur(in.begin(), in.end());
  for (int a = 0; a < 3; ++a) {
    if (taps[static_cast<std::size_t>(a)].size() == 1 && taps[static_cast<std::size_t>(a)][0] == 1.0) continue;
    cur = convolve_axis(cur, d, a, taps[static_cast<std::size_t>(a)], origins[static_cast<std::size_t>(a)]);
  }
  return cur;
}

}  // namespace detail

/// Sampled 1D factors of the Laplacian-of-Gaussian on one axis: Gaussian g and its
/// second derivative g'' at offsets -r..r voxels, r = floor(4 sigma / spacing).
struct LogAxisFactors {
  std::vector<double> gauss;
  std::vector<double> second;
  long radius = 0;
};

inline LogAxisFactors log_axis_factors(double sigma_mm, double spacing_mm) {
  LogAxisFactors f;
  f.radius = static_cast<long>(std::floor(4.0 * sigma_mm / spacing_mm));
  const double s2 = sigma_mm * sigma_mm;
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma_mm);
  for (long i = -f.radius; i <= f.radius; ++i) {
    const double x = static_cast<double>(i) * spacing_mm;
    const double g = norm * std::exp(-x * x / (2.0 * s2));
    f.gauss.push_back(g);
    f.second.push_back(g * (x * x / (s2 * s2) - 1.0 / s2));
  }
  return f;
}

/// Laplacian of Gaussian with sigma in mm. The sampled kernel (truncated at 4 sigma per axis)
/// has its mean subtracted so it sums to zero; evaluated as three separable terms plus a box
/// correction. Single-slice volumes use the 2D operator.
inline Volume apply_log(const Volume& volume, double sigma_mm, std::vector<std::string>* warnings = nullptr) {
  if (!(sigma_mm > 0.0) || !std::isfinite(sigma_mm)) throw Error("apply_log: sigma must be > 0");
  const Dims& d = volume.dims();
  const Spacing& sp = volume.spacing();
  const int naxes = d.is_2d() ? 2 : 3;
  double min_sp = sp.x;
  for (int a = 1; a < naxes; ++a) min_sp = std::min(min_sp, sp[a]);
  if (warnings && sigma_mm < 0.5 * min_sp)
    warnings->push_back("apply_log: sigma " + format_double(sigma_mm) + " mm is below half the voxel spacing");

  std::array<LogAxisFactors, 3> f;
  for (int a = 0; a < 3; ++a) {
    if (a < naxes) {
      f[static_cast<std::size_t>(a)] = log_axis_factors(sigma_mm, sp[a]);
    } else {
      f[static_cast<std::size_t>(a)].gauss = {1.0};
      f[static_cast<std::size_t>(a)].second = {0.0};
    }
  }
  auto sum = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  };
  std::array<long, 3> origins{f[0].radius, f[1].radius, f[2].radius};

  std::vector<double> out(volume.size(), 0.0);
  double kernel_sum = 0.0;
  for (int term = 0; term < naxes; ++term) {
    std::array<std::vector<double>, 3> taps;
    double term_sum = 1.0;
    for (int a = 0; a < 3; ++a) {
      const auto& fa = f[static_cast<std::size_t>(a)];
      taps[static_cast<std::size_t>(a)] = a == term ? fa.second : fa.gauss;
      term_sum *= sum(taps[static_cast<std::size_t>(a)]);
    }
    kernel_sum += term_sum;
    auto part = detail::convolve_separable(volume.data(), d, taps, origins);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += part[i];
  }
  // Subtract the kernel mean: equivalent to convolving with K - mean(K).
  std::size_t support = 1;
  std::array<std::vector<double>, 3> box;
  for (int a = 0; a < 3; ++a) {
    const auto n = f[static_cast<std::size_t>(a)].gauss.size();
    support *= n;
    box[static_cast<std::size_t>(a)] = std::vector<double>(n, 1.0);
    if (n == 1) box[static_cast<std::size_t>(a)][0] = 1.0;
  }
  const double mean = kernel_sum / static_cast<double>(support);
  auto boxed = detail::convolve_separable(volume.data(), d, box, origins);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= mean * boxed[i];
  return volume.with_data(std::move(out), Unit::ARBITRARY);
}

/// Single-level undecimated Haar band; L = [1/2, 1/2], H = [1/2, -1/2] applied as
/// out[i] = (x[i] +/- x[i+1]) / 2 with the last sample reflected.
inline Volume apply_wavelet_band(const Volume& volume, const std::string& band) {
  FilterSpec{FilterKind::WAVELET, 0.0, band}.validate();
  const Dims& d = volume.dims();
  for (int a = 0; a < 3; ++a)
    if (d[a] < 2) throw Error("apply_wavelet_band: axis " + std::to_string(a) + " has length 1");
  std::vector<double> cur(volume.data().begin(), volume.data().end());
  for (int a = 0; a < 3; ++a) {
    const bool high = band[static_cast<std::size_t>(a)] == 'H';
    const std::vector<double> taps = high ? std::vector<double>{0.5, -0.5} : std::vector<double>{0.5, 0.5};
    cur = detail::convolve_axis(cur, d, a, taps, 0);
  }
  return volume.with_data(std::move(cur), Unit::ARBITRARY);
}

/// Pointwise intensity maps and the gradient magnitude.
inline Volume apply_intensity_transform(const Volume& volume, FilterKind kind) {
  const auto in = volume.data();
  std::vector<double> out(in.size());
  auto sgn = [](double x) { return x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0; };
  switch (kind) {
    case FilterKind::NONE:
      return volume;
    case FilterKind::SQUARE:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i] * sgn(in[i]);
      break;
    case FilterKind::SQRT:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sgn(in[i]) * std::sqrt(std::abs(in[i]));
      break;
    case FilterKind::LOGARITHM:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sgn(in[i]) * std::log1p(std::abs(in[i]));
      break;
    case FilterKind::EXPONENTIAL: {
      double c = 0.0;
      for (double v : in) c = std::max(c, std::abs(v));
      if (c == 0.0) c = 1.0;
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i] / c);
      break;
    }
    case FilterKind::GRADIENT: {
      const Dims& d = volume.dims();
      const Spacing& sp = volume.spacing();
      for (std::size_t idx = 0; idx < in.size(); ++idx) {
        const auto c = d.coords(idx);
        double g2 = 0.0;
        for (int a = 0; a < 3; ++a) {
          const std::size_t n = d[a];
          if (n < 2) continue;
          const std::size_t stride = a == 0 ? 1 : a == 1 ? d.x : d.x * d.y;
          const std::size_t p = c[static_cast<std::size_t>(a)];
          double deriv = 0.0;
          if (p == 0)
            deriv = (in[idx + stride] - in[idx]) / sp[a];
          else if (p == n - 1)
            deriv = (in[idx] - in[idx - stride]) / sp[a];
          else
            deriv = (in[idx + stride] - in[idx - stride]) / (2.0 * sp[a]);
          g2 += deriv * deriv;
        }
        out[idx] = std::sqrt(g2);
      }
      break;
    }
    case FilterKind::LOG:
    case FilterKind::WAVELET:
      throw Error("apply_intensity_transform: " + to_string(kind) + " is not a pointwise transform");
  }
  return volume.with_data(std::move(out), Unit::ARBITRARY);
}

inline Volume apply_filter(const Volume& volume, const FilterSpec& spec, std::vector<std::string>* warnings = nullptr) {
  spec.validate();
  switch (spec.kind) {
    case FilterKind::LOG: return apply_log(volume, spec.sigma_mm, warnings);
    case FilterKind::WAVELET: return apply_wavelet_band(volume, spec.band);
    default: return apply_intensity_transform(volume, spec.kind);
  }
}

/// LOG keys, then WAVELET keys, then pointwise kinds, each in the given order.
inline std::vector<FlavourKey> filter_flavour_grid(std::span<const double> log_sigmas,
                                                   std::span<const std::string> bands,
                                                   std::span<const FilterKind> scalar_kinds) {
  std::vector<FlavourKey> out;
  std::set<std::string> seen;
  auto push = [&](const FilterSpec& s) {
    s.validate();
    auto key = s.key();
    if (!seen.insert(key.str()).second) throw Error("filter_flavour_grid: duplicate " + key.str());
    out.push_back(std::move(key));
  };
  for (double s : log_sigmas) push({FilterKind::LOG, s, {}});
  for (const auto& b : bands) push({FilterKind::WAVELET, 0.0, b});
  for (auto k : scalar_kinds) {
    if (k == FilterKind::LOG || k == FilterKind::WAVELET)
      throw Error("filter_flavour_grid: LOG/WAVELET belong in their own lists");
    push({k, 0.0, {}});
  }
  return out;
}

}  // namespace tensorrad

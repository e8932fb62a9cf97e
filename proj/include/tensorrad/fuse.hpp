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

// Two-volume image fusion: weighted, PCA-weighted, Laplacian pyramid, ratio
// pyramid and decimated Haar wavelet. Multi-scale methods operate only on axes
// longer than one voxel, so single-slice volumes fuse in 2D.

#include <numbers>
#include <vector>

#include "tensorrad/flavour.hpp"
#include "tensorrad/volume.hpp"

namespace tensorrad {

enum class FusionMethod { WEIGHTED, PCA, LP, RP, DWT };

inline std::string to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::WEIGHTED: return "WEIGHTED";
    case FusionMethod::PCA: return "PCA";
    case FusionMethod::LP: return "LP";
    case FusionMethod::RP: return "RP";
    case FusionMethod::DWT: return "DWT";
  }
  return "WEIGHTED";
}

inline FusionMethod fusion_method_from_string(const std::string& s) {
  for (auto m : {FusionMethod::WEIGHTED, FusionMethod::PCA, FusionMethod::LP, FusionMethod::RP, FusionMethod::DWT})
    if (to_string(m) == s) return m;
  throw Error("unknown fusion method '" + s + "'");
}

/// A plain sample grid used inside the multi-scale transforms.
struct Grid {
  Dims dims;
  std::vector<double> v;

  double& at(std::size_t i, std::size_t j, std::size_t k) { return v[dims.index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return v[dims.index(i, j, k)]; }
};

inline Grid to_grid(const Volume& vol) { return {vol.dims(), {vol.data().begin(), vol.data().end()}}; }

/// Largest usable pyramid depth: floor(log2) of the shortest non-singleton axis.
inline int max_fusion_levels(const Dims& d) {
  std::size_t shortest = 0;
  for (int a = 0; a < 3; ++a)
    if (d[a] > 1) shortest = shortest == 0 ? d[a] : std::min(shortest, d[a]);
  int levels = 0;
  while (shortest >= 2) {
    shortest /= 2;
    ++levels;
  }
  return levels;
}

namespace detail {

inline void check_levels(const Dims& d, int levels, const char* who) {
  if (levels < 1 || levels > max_fusion_levels(d))
    throw Error(std::string(who) + ": levels must be in [1, " + std::to_string(max_fusion_levels(d)) + "]");
}

inline void check_pair(const Volume& a, const Volume& b, const char* who) {
  if (a.dims() != b.dims()) throw Error(std::string(who) + ": dims mismatch");
}

/// Edge-replicating pad so every non-singleton axis is a multiple of `multiple`.
inline Grid pad_to_multiple(const Grid& g, std::size_t multiple) {
  Dims d = g.dims;
  Dims p = d;
  for (int a = 0; a < 3; ++a) {
    std::size_t& n = a == 0 ? p.x : a == 1 ? p.y : p.z;
    if (n > 1) n = (n + multiple - 1) / multiple * multiple;
  }
  if (p == d) return g;
  Grid out{p, std::vector<double>(p.size())};
  for (std::size_t k = 0; k < p.z; ++k)
    for (std::size_t j = 0; j < p.y; ++j)
      for (std::size_t i = 0; i < p.x; ++i)
        out.at(i, j, k) = g.at(std::min(i, d.x - 1), std::min(j, d.y - 1), std::min(k, d.z - 1));
  return out;
}

inline Grid crop(const Grid& g, const Dims& d) {
  if (g.dims == d) return g;
  Grid out{d, std::vector<double>(d.size())};
  for (std::size_t k = 0; k < d.z; ++k)
    for (std::size_t j = 0; j < d.y; ++j)
      for (std::size_t i = 0; i < d.x; ++i) out.at(i, j, k) = g.at(i, j, k);
  return out;
}

inline std::size_t axis_stride(const Dims& d, int axis) { return axis == 0 ? 1 : axis == 1 ? d.x : d.x * d.y; }

/// [1,4,6,4,1]/16 blur along every non-singleton axis, edge-replicated.
inline Grid blur5(const Grid& g) {
  static constexpr double w[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  Grid cur = g;
  for (int a = 0; a < 3; ++a) {
    const std::size_t n = cur.dims[a];
    if (n == 1) continue;
    const std::size_t stride = axis_stride(cur.dims, a);
    Grid next{cur.dims, std::vector<double>(cur.v.size())};
    for (std::size_t idx = 0; idx < cur.v.size(); ++idx) {
      const std::size_t pos = cur.dims.coords(idx)[static_cast<std::size_t>(a)];
      const std::size_t base = idx - pos * stride;
      double acc = 0.0;
      for (int t = -2; t <= 2; ++t) {
        const long q = std::clamp<long>(static_cast<long>(pos) + t, 0, static_cast<long>(n) - 1);
        acc += w[t + 2] * cur.v[base + static_cast<std::size_t>(q) * stride];
      }
      next.v[idx] = acc;
    }
    cur = std::move(next);
  }
  return cur;
}

/// Keeps even samples along every non-singleton axis.
inline Grid decimate(const Grid& g) {
  Dims d = g.dims;
  Dims h{d.x > 1 ? d.x / 2 : 1, d.y > 1 ? d.y / 2 : 1, d.z > 1 ? d.z / 2 : 1};
  Grid out{h, std::vector<double>(h.size())};
  for (std::size_t k = 0; k < h.z; ++k)
    for (std::size_t j = 0; j < h.y; ++j)
      for (std::size_t i = 0; i < h.x; ++i)
        out.at(i, j, k) = g.at(d.x > 1 ? 2 * i : 0, d.y > 1 ? 2 * j : 0, d.z > 1 ? 2 * k : 0);
  return out;
}

/// Interpolating upsample to `target`: even sites (g[i-1] + 6 g[i] + g[i+1]) / 8,
/// odd sites (g[i] + g[i+1]) / 2, edge-replicated. Preserves constants exactly.
inline Grid expand(const Grid& g, const Dims& target) {
  Grid cur = g;
  for (int a = 0; a < 3; ++a) {
    if (target[a] == 1) continue;
    Dims nd = cur.dims;
    (a == 0 ? nd.x : a == 1 ? nd.y : nd.z) = target[a];
    const std::size_t n = cur.dims[a];
    const std::size_t sin = axis_stride(cur.dims, a);
    Grid next{nd, std::vector<double>(nd.size())};
    for (std::size_t idx = 0; idx < next.v.size(); ++idx) {
      auto c = nd.coords(idx);
      const std::size_t pos = c[static_cast<std::size_t>(a)];
      c[static_cast<std::size_t>(a)] = 0;  // start of the same line in the coarse grid
      const std::size_t base_in = cur.dims.index(c[0], c[1], c[2]);
      auto sample = [&](long q) {
        return cur.v[base_in + static_cast<std::size_t>(std::clamp<long>(q, 0, static_cast<long>(n) - 1)) * sin];
      };
      const long i = static_cast<long>(pos / 2);
      next.v[idx] = pos % 2 == 0 ? (sample(i - 1) + 6.0 * sample(i) + sample(i + 1)) / 8.0
                                 : (sample(i) + sample(i + 1)) / 2.0;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace detail

/// Min-max rescale to [0, 1]; a constant volume maps to zeros.
inline Volume normalize_minmax(const Volume& v) {
  auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  const double a = *lo, range = *hi - *lo;
  std::vector<double> out(v.size(), 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (v[i] - a) / range;
  return v.with_data(std::move(out), Unit::ARBITRARY);
}

/// alpha * a' + (1 - alpha) * b' on min-max normalized inputs.
inline Volume fuse_weighted(const Volume& a, const Volume& b, double alpha) {
  detail::check_pair(a, b, "fuse_weighted");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("fuse_weighted: alpha must be in [0, 1]");
  const Volume na = normalize_minmax(a), nb = normalize_minmax(b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * na[i] + (1.0 - alpha) * nb[i];
  return a.with_data(std::move(out), Unit::ARBITRARY);
}

struct PcaWeights {
  double wa = 0.5, wb = 0.5;
  bool fallback = true;
};

/// Weights from the leading eigenvector of the 2x2 covariance of normalized voxel pairs.
inline PcaWeights pca_fusion_weights(const Volume& a, const Volume& b) {
  detail::check_pair(a, b, "fuse_pca");
  const Volume na = normalize_minmax(a), nb = normalize_minmax(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += na[i];
    mb += nb[i];
  }
  ma /= n;
  mb /= n;
  double p = 0, q = 0, r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    p += (na[i] - ma) * (na[i] - ma);
    q += (na[i] - ma) * (nb[i] - mb);
    r += (nb[i] - mb) * (nb[i] - mb);
  }
  double va = 0, vb = 0;
  if (q != 0.0) {
    const double l1 = 0.5 * (p + r) + std::sqrt(0.25 * (p - r) * (p - r) + q * q);
    va = l1 - r;
    vb = q;
  } else if (p > r) {
    va = 1.0;
  } else if (r > p) {
    vb = 1.0;
  } else {
    return {};  // isotropic or all-constant covariance
  }
  if (va < 0.0 || vb < 0.0) {
    if (va <= 0.0 && vb <= 0.0) {
      va = -va;
      vb = -vb;
    } else {
      return {};  // mixed-sign eigenvector
    }
  }
  return {va / (va + vb), vb / (va + vb), false};
}

inline Volume fuse_pca(const Volume& a, const Volume& b) {
  const auto w = pca_fusion_weights(a, b);
  const Volume na = normalize_minmax(a), nb = normalize_minmax(b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.wa * na[i] + w.wb * nb[i];
  return a.with_data(std::move(out), Unit::ARBITRARY);
}

/// Laplacian (or ratio) bands finest-first plus the coarsest Gaussian level.
struct Pyramid {
  std::vector<Grid> bands;
  Grid base;
  Dims original;
  bool ratio = false;
};

inline Pyramid build_pyramid(const Volume& v, int levels, bool ratio) {
  detail::check_levels(v.dims(), levels, ratio ? "ratio_pyramid" : "laplacian_pyramid");
  Pyramid p;
  p.original = v.dims();
  p.ratio = ratio;
  Grid cur = detail::pad_to_multiple(to_grid(v), std::size_t{1} << levels);
  for (int l = 0; l < levels; ++l) {
    Grid next = detail::decimate(detail::blur5(cur));
    Grid up = detail::expand(next, cur.dims);
    Grid band{cur.dims, std::vector<double>(cur.v.size())};
    for (std::size_t i = 0; i < band.v.size(); ++i) band.v[i] = ratio ? cur.v[i] / up.v[i] : cur.v[i] - up.v[i];
    p.bands.push_back(std::move(band));
    cur = std::move(next);
  }
  p.base = std::move(cur);
  return p;
}

inline Pyramid laplacian_pyramid(const Volume& v, int levels) { return build_pyramid(v, levels, false); }

/// Ratio pyramid; the input must be strictly positive.
inline Pyramid ratio_pyramid(const Volume& v, int levels) {
  for (double x : v.data())
    if (!(x > 0.0)) throw Error("ratio_pyramid: input must be strictly positive");
  return build_pyramid(v, levels, true);
}

inline std::vector<double> reconstruct(const Pyramid& p) {
  Grid cur = p.base;
  for (auto it = p.bands.rbegin(); it != p.bands.rend(); ++it) {
    Grid up = detail::expand(cur, it->dims);
    for (std::size_t i = 0; i < up.v.size(); ++i) up.v[i] = p.ratio ? it->v[i] * up.v[i] : it->v[i] + up.v[i];
    cur = std::move(up);
  }
  return detail::crop(cur, p.original).v;
}

/// Band-wise merge: Laplacian bands by max |band|, ratio bands by max |band - 1|, base averaged.
inline Pyramid merge_pyramids(const Pyramid& a, const Pyramid& b) {
  if (a.bands.size() != b.bands.size() || a.ratio != b.ratio || !(a.original == b.original))
    throw Error("merge_pyramids: incompatible pyramids");
  Pyramid out = a;
  const double centre = a.ratio ? 1.0 : 0.0;
  for (std::size_t l = 0; l < a.bands.size(); ++l)
    for (std::size_t i = 0; i < a.bands[l].v.size(); ++i) {
      const double x = a.bands[l].v[i], y = b.bands[l].v[i];
      out.bands[l].v[i] = std::abs(x - centre) >= std::abs(y - centre) ? x : y;
    }
  for (std::size_t i = 0; i < out.base.v.size(); ++i) out.base.v[i] = 0.5 * (a.base.v[i] + b.base.v[i]);
  return out;
}

inline Volume fuse_lp(const Volume& a, const Volume& b, int levels) {
  detail::check_pair(a, b, "fuse_lp");
  const auto merged = merge_pyramids(laplacian_pyramid(a, levels), laplacian_pyramid(b, levels));
  return a.with_data(reconstruct(merged), Unit::ARBITRARY);
}

inline constexpr double kRatioEpsilon = 1e-6;

/// Ratio-pyramid fusion of non-negative volumes (shifted by kRatioEpsilon internally).
inline Volume fuse_rp(const Volume& a, const Volume& b, int levels) {
  detail::check_pair(a, b, "fuse_rp");
  auto shifted = [](const Volume& v) {
    std::vector<double> s(v.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (v[i] < 0.0) throw Error("fuse_rp: inputs must be non-negative");
      s[i] = v[i] + kRatioEpsilon;
    }
    return v.with_data(std::move(s));
  };
  const auto merged = merge_pyramids(ratio_pyramid(shifted(a), levels), ratio_pyramid(shifted(b), levels));
  auto out = reconstruct(merged);
  for (double& x : out) x -= kRatioEpsilon;
  return a.with_data(std::move(out), Unit::ARBITRARY);
}

// ---------------------------------------------------------------------------
// Decimated orthonormal Haar transform, standard (Mallat) layout.

struct HaarTransform {
  Grid coeffs;  // padded grid
  Dims original;
  int levels = 1;

  /// True for coefficients in the final approximation block.
  bool is_approximation(std::size_t idx) const {
    const auto c = coeffs.dims.coords(idx);
    for (int a = 0; a < 3; ++a) {
      const std::size_t n = coeffs.dims[a];
      if (n > 1 && c[static_cast<std::size_t>(a)] >= (n >> levels)) return false;
    }
    return true;
  }
};

namespace detail {
inline void haar_axis(Grid& g, const Dims& active, int axis, bool inverse) {
  const std::size_t n = active[axis];
  if (g.dims[axis] == 1) return;
  const double s = 1.0 / std::numbers::sqrt2;
  std::vector<double> line(n);
  Dims outer = active;
  (axis == 0 ? outer.x : axis == 1 ? outer.y : outer.z) = 1;
  const std::size_t stride = axis_stride(g.dims, axis);
  for (std::size_t k = 0; k < outer.z; ++k)
    for (std::size_t j = 0; j < outer.y; ++j)
      for (std::size_t i = 0; i < outer.x; ++i) {
        const std::size_t base = g.dims.index(i, j, k);
        for (std::size_t t = 0; t < n; ++t) line[t] = g.v[base + t * stride];
        const std::size_t h = n / 2;
        for (std::size_t t = 0; t < h; ++t) {
          if (!inverse) {
            const double x0 = line[2 * t], x1 = line[2 * t + 1];
            g.v[base + t * stride] = (x0 + x1) * s;
            g.v[base + (h + t) * stride] = (x0 - x1) * s;
          } else {
            const double lo = line[t], hi = line[h + t];
            g.v[base + 2 * t * stride] = (lo + hi) * s;
            g.v[base + (2 * t + 1) * stride] = (lo - hi) * s;
          }
        }
      }
}

inline Dims active_dims(const Dims& d, int level) {
  return {d.x > 1 ? d.x >> level : 1, d.y > 1 ? d.y >> level : 1, d.z > 1 ? d.z >> level : 1};
}
}  // namespace detail

inline HaarTransform haar_forward(const Volume& v, int levels) {
  detail::check_levels(v.dims(), levels, "haar_forward");
  HaarTransform t;
  t.original = v.dims();
  t.levels = levels;
  t.coeffs = detail::pad_to_multiple(to_grid(v), std::size_t{1} << levels);
  for (int l = 0; l < levels; ++l) {
    const Dims act = detail::active_dims(t.coeffs.dims, l);
    for (int a = 0; a < 3; ++a) detail::haar_axis(t.coeffs, act, a, false);
  }
  return t;
}

/// Inverse transform, cropped back to the original dims.
inline std::vector<double> haar_inverse(const HaarTransform& t) {
  Grid g = t.coeffs;
  for (int l = t.levels - 1; l >= 0; --l) {
    const Dims act = detail::active_dims(g.dims, l);
    for (int a = 2; a >= 0; --a) detail::haar_axis(g, act, a, true);
  }
  return detail::crop(g, t.original).v;
}

inline Volume fuse_dwt(const Volume& a, const Volume& b, int levels) {
  detail::check_pair(a, b, "fuse_dwt");
  auto ta = haar_forward(a, levels);
  const auto tb = haar_forward(b, levels);
  for (std::size_t i = 0; i < ta.coeffs.v.size(); ++i) {
    const double x = ta.coeffs.v[i], y = tb.coeffs.v[i];
    ta.coeffs.v[i] = ta.is_approximation(i) ? 0.5 * (x + y) : (std::abs(x) >= std::abs(y) ? x : y);
  }
  return a.with_data(haar_inverse(ta), Unit::ARBITRARY);
}

struct FusionSpec {
  FusionMethod method = FusionMethod::WEIGHTED;
  double alpha = 0.5;
  int levels = 2;

  FlavourKey key() const {
    FlavourKey k(FlavourAxis::FUSION);
    k.set("method", to_string(method));
    if (method == FusionMethod::WEIGHTED) k.set("alpha", alpha);
    if (method == FusionMethod::LP || method == FusionMethod::RP || method == FusionMethod::DWT)
      k.set("levels", levels);
    return k;
  }

  static FusionSpec from_key(const FlavourKey& key) {
    if (key.axis() != FlavourAxis::FUSION) throw Error("not a FUSION flavour: " + key.str());
    FusionSpec s;
    s.method = fusion_method_from_string(key.get("method"));
    if (key.has("alpha")) s.alpha = key.get_double("alpha");
    if (key.has("levels")) s.levels = static_cast<int>(key.get_int("levels"));
    return s;
  }
};

/// RMS bound on |fuse(a, a) - normalize(a)| for each method: the pointwise rules are
/// exact up to rounding, the pyramids are limited by their interpolation round trip.
inline double identity_tolerance(FusionMethod m) {
  switch (m) {
    case FusionMethod::WEIGHTED:
    case FusionMethod::PCA: return 1e-12;
    case FusionMethod::LP: return 1e-6;
    case FusionMethod::RP: return 1e-5;
    case FusionMethod::DWT: return 1e-10;
  }
  return 0.0;
}

/// Normalizes both inputs to [0, 1], then fuses with the chosen method.
inline Volume fuse(const Volume& a, const Volume& b, const FusionSpec& spec) {
  detail::check_pair(a, b, "fuse");
  const Volume na = normalize_minmax(a), nb = normalize_minmax(b);
  switch (spec.method) {
    case FusionMethod::WEIGHTED: return fuse_weighted(na, nb, spec.alpha);
    case FusionMethod::PCA: return fuse_pca(na, nb);
    case FusionMethod::LP: return fuse_lp(na, nb, spec.levels);
    case FusionMethod::RP: return fuse_rp(na, nb, spec.levels);
    case FusionMethod::DWT: return fuse_dwt(na, nb, spec.levels);
  }
  throw Error("fuse: unknown method");
}

}  // namespace tensorrad

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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tensorrad/texture.hpp"

namespace tensorrad {

enum class FeatureFamily { FIRST_ORDER, GLCM, GLRLM, GLSZM, GLDM, NGTDM };

struct FeatureInfo {
  std::string name;
  FeatureFamily family;
  bool discretization_dependent;
};

/// The fixed 58-feature catalog, in output order.
inline const std::vector<FeatureInfo>& feature_catalog() {
  static const std::vector<FeatureInfo> catalog = [] {
    std::vector<FeatureInfo> c;
    auto add = [&](FeatureFamily f, std::initializer_list<const char*> names, bool dep) {
      for (const char* n : names) c.push_back({n, f, dep});
    };
    add(FeatureFamily::FIRST_ORDER,
        {"fo_mean", "fo_variance", "fo_skewness", "fo_kurtosis", "fo_energy"}, false);
    add(FeatureFamily::FIRST_ORDER, {"fo_entropy"}, true);
    add(FeatureFamily::FIRST_ORDER, {"fo_min", "fo_max", "fo_range", "fo_mad", "fo_rms"}, false);
    add(FeatureFamily::FIRST_ORDER, {"fo_uniformity"}, true);
    add(FeatureFamily::FIRST_ORDER, {"fo_median", "fo_p10", "fo_p90", "fo_iqr"}, false);
    add(FeatureFamily::GLCM,
        {"glcm_joint_energy", "glcm_contrast", "glcm_correlation", "glcm_joint_entropy", "glcm_idm",
         "glcm_inverse_difference", "glcm_cluster_shade", "glcm_cluster_prominence", "glcm_cluster_tendency",
         "glcm_autocorrelation", "glcm_joint_average", "glcm_difference_entropy"},
        true);
    add(FeatureFamily::GLRLM,
        {"glrlm_sre", "glrlm_lre", "glrlm_gln", "glrlm_glnn", "glrlm_rln", "glrlm_rlnn", "glrlm_rp",
         "glrlm_lglre", "glrlm_hglre", "glrlm_run_entropy"},
        true);
    add(FeatureFamily::GLSZM,
        {"glszm_sae", "glszm_lae", "glszm_zp", "glszm_gln", "glszm_glnn", "glszm_szn", "glszm_sznn",
         "glszm_zone_entropy"},
        true);
    add(FeatureFamily::GLDM,
        {"gldm_sde", "gldm_lde", "gldm_dn", "gldm_dnn", "gldm_gln", "gldm_dependence_entropy",
         "gldm_dependence_variance"},
        true);
    add(FeatureFamily::NGTDM,
        {"ngtdm_coarseness", "ngtdm_contrast", "ngtdm_busyness", "ngtdm_complexity", "ngtdm_strength"}, true);
    return c;
  }();
  return catalog;
}

inline std::vector<std::string> feature_names() {
  std::vector<std::string> out;
  for (const auto& f : feature_catalog()) out.push_back(f.name);
  return out;
}

inline std::size_t feature_index(const std::string& name) {
  const auto& c = feature_catalog();
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i].name == name) return i;
  throw Error("unknown feature '" + name + "'");
}

/// Coarseness reported when the NGTDM s-vector is identically zero.
inline constexpr double kCoarsenessCap = 1e6;

using FeatureMap = std::map<std::string, double>;

/// Catalog-aligned feature values for one (case, flavour).
struct FeatureVector {
  FlavourKey provenance;
  std::vector<MaybeValue> values = std::vector<MaybeValue>(feature_catalog().size());
  std::string diagnostic;

  MaybeValue get(const std::string& name) const { return values[feature_index(name)]; }
  void set(const FeatureMap& m) {
    for (const auto& [name, v] : m) values[feature_index(name)] = v;
  }
  bool all_missing() const {
    for (const auto& v : values)
      if (v) return false;
    return true;
  }
};

namespace detail {

inline double xlog2x(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

/// Linear-interpolation percentile on sorted data, q in [0, 100].
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

/// First-order statistics. Moments use 1/N; entropy and uniformity use the discretized levels.
/// Zero-variance ROIs report skewness 0 and excess kurtosis 0.
inline FeatureMap first_order(std::span<const double> values, const DiscretizedRoi& disc) {
  if (values.empty()) throw Error("first_order: empty ROI");
  const double n = static_cast<double>(values.size());
  double sum = 0.0, sum2 = 0.0;
  for (double v : values) {
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    mad += std::abs(d);
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  mad /= n;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  double entropy = 0.0, uniformity = 0.0;
  const auto hist = disc.histogram();
  const double nlev = static_cast<double>(disc.levels.size());
  for (std::size_t l = 1; l < hist.size(); ++l) {
    const double p = static_cast<double>(hist[l]) / nlev;
    entropy -= detail::xlog2x(p);
    uniformity += p * p;
  }

  FeatureMap f;
  f["fo_mean"] = mean;
  f["fo_variance"] = m2;
  f["fo_skewness"] = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  f["fo_kurtosis"] = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  f["fo_energy"] = sum2;
  f["fo_entropy"] = entropy;
  f["fo_min"] = sorted.front();
  f["fo_max"] = sorted.back();
  f["fo_range"] = sorted.back() - sorted.front();
  f["fo_mad"] = mad;
  f["fo_rms"] = std::sqrt(sum2 / n);
  f["fo_uniformity"] = uniformity;
  f["fo_median"] = detail::percentile_sorted(sorted, 50.0);
  f["fo_p10"] = detail::percentile_sorted(sorted, 10.0);
  f["fo_p90"] = detail::percentile_sorted(sorted, 90.0);
  f["fo_iqr"] = detail::percentile_sorted(sorted, 75.0) - detail::percentile_sorted(sorted, 25.0);
  return f;
}

/// GLCM features from the direction-averaged normalized matrix. Empty when no
/// direction had a valid pair. Correlation of a zero-variance matrix is 1.
inline FeatureMap glcm_features(const Glcm& m) {
  FeatureMap f;
  if (m.valid_directions == 0) return f;
  const int ng = m.ng;
  double mu = 0.0;
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) mu += i * m.at(i, j);
  double var = 0.0, energy = 0.0, contrast = 0.0, entropy = 0.0, idm = 0.0, id = 0.0;
  double shade = 0.0, prominence = 0.0, tendency = 0.0, autocorr = 0.0;
  std::vector<double> pdiff(static_cast<std::size_t>(ng), 0.0);
  for (int i = 1; i <= ng; ++i)
    for (int j = 1; j <= ng; ++j) {
      const double p = m.at(i, j);
      if (p == 0.0) continue;
      const double d = i - j;
      const double s = i + j - 2.0 * mu;
      var += (i - mu) * (i - mu) * p;
      energy += p * p;
      contrast += d * d * p;
      entropy -= detail::xlog2x(p);
      idm += p / (1.0 + d * d);
      id += p / (1.0 + std::abs(d));
      shade += s * s * s * p;
      prominence += s * s * s * s * p;
      tendency += s * s * p;
      autocorr += static_cast<double>(i) * j * p;
      pdiff[static_cast<std::size_t>(std::abs(i - j))] += p;
    }
  double diff_entropy = 0.0;
  for (double p : pdiff) diff_entropy -= detail::xlog2x(p);
  f["glcm_joint_energy"] = energy;
  f["glcm_contrast"] = contrast;
  f["glcm_correlation"] = var > 0.0 ? (autocorr - mu * mu) / var : 1.0;
  f["glcm_joint_entropy"] = entropy;
  f["glcm_idm"] = idm;
  f["glcm_inverse_difference"] = id;
  f["glcm_cluster_shade"] = shade;
  f["glcm_cluster_prominence"] = prominence;
  f["glcm_cluster_tendency"] = tendency;
  f["glcm_autocorrelation"] = autocorr;
  f["glcm_joint_average"] = mu;
  f["glcm_difference_entropy"] = diff_entropy;
  return f;
}

/// Run-length features from the direction-averaged run counts.
inline FeatureMap glrlm_features(const Glrlm& m) {
  const auto avg = m.averaged();
  const auto ng = static_cast<std::size_t>(m.ng);
  const std::size_t nl = m.max_run();
  double nr = 0.0;
  for (double v : avg) nr += v;
  FeatureMap f;
  if (nr <= 0.0) return f;
  double sre = 0, lre = 0, lglre = 0, hglre = 0, ent = 0, gln = 0, rln = 0;
  for (std::size_t i = 0; i < ng; ++i) {
    double row = 0.0;
    const double g = static_cast<double>(i + 1);
    for (std::size_t l = 0; l < nl; ++l) {
      const double r = avg[i * nl + l];
      if (r == 0.0) continue;
      const double len = static_cast<double>(l + 1);
      sre += r / (len * len);
      lre += r * len * len;
      lglre += r / (g * g);
      hglre += r * g * g;
      ent -= detail::xlog2x(r / nr);
      row += r;
    }
    gln += row * row;
  }
  for (std::size_t l = 0; l < nl; ++l) {
    double col = 0.0;
    for (std::size_t i = 0; i < ng; ++i) col += avg[i * nl + l];
    rln += col * col;
  }
  f["glrlm_sre"] = sre / nr;
  f["glrlm_lre"] = lre / nr;
  f["glrlm_gln"] = gln / nr;
  f["glrlm_glnn"] = gln / (nr * nr);
  f["glrlm_rln"] = rln / nr;
  f["glrlm_rlnn"] = rln / (nr * nr);
  f["glrlm_rp"] = nr / static_cast<double>(m.n_voxels);
  f["glrlm_lglre"] = lglre / nr;
  f["glrlm_hglre"] = hglre / nr;
  f["glrlm_run_entropy"] = ent;
  return f;
}

namespace detail {
/// Shared size/dependence-style statistics of a (level, size) count matrix.
struct ZoneStats {
  double total = 0, small = 0, large = 0, gln = 0, sn = 0, entropy = 0, mean_size = 0, var_size = 0;
};

inline ZoneStats zone_stats(const CountMatrix& m) {
  ZoneStats z;
  for (auto c : m.counts) z.total += static_cast<double>(c);
  if (z.total <= 0) return z;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double row = 0.0;
    for (std::size_t s = 0; s < m.cols; ++s) {
      const double c = static_cast<double>(m.at(i, s));
      if (c == 0.0) continue;
      const double size = static_cast<double>(s + 1);
      z.small += c / (size * size);
      z.large += c * size * size;
      z.entropy -= xlog2x(c / z.total);
      z.mean_size += c / z.total * size;
      row += c;
    }
    z.gln += row * row;
  }
  for (std::size_t s = 0; s < m.cols; ++s) {
    double col = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) col += static_cast<double>(m.at(i, s));
    z.sn += col * col;
    const double size = static_cast<double>(s + 1);
    z.var_size += col / z.total * (size - z.mean_size) * (size - z.mean_size);
  }
  return z;
}
}  // namespace detail

inline FeatureMap glszm_features(const Glszm& m) {
  const auto z = detail::zone_stats(m.counts);
  FeatureMap f;
  if (z.total <= 0) return f;
  f["glszm_sae"] = z.small / z.total;
  f["glszm_lae"] = z.large / z.total;
  f["glszm_zp"] = z.total / static_cast<double>(m.n_voxels);
  f["glszm_gln"] = z.gln / z.total;
  f["glszm_glnn"] = z.gln / (z.total * z.total);
  f["glszm_szn"] = z.sn / z.total;
  f["glszm_sznn"] = z.sn / (z.total * z.total);
  f["glszm_zone_entropy"] = z.entropy;
  return f;
}

/// Dependence features; column j of the matrix is dependence size j+1.
inline FeatureMap gldm_features(const Gldm& m) {
  const auto z = detail::zone_stats(m.counts);
  FeatureMap f;
  if (z.total <= 0) return f;
  f["gldm_sde"] = z.small / z.total;
  f["gldm_lde"] = z.large / z.total;
  f["gldm_dn"] = z.sn / z.total;
  f["gldm_dnn"] = z.sn / (z.total * z.total);
  f["gldm_gln"] = z.gln / z.total;
  f["gldm_dependence_entropy"] = z.entropy;
  f["gldm_dependence_variance"] = z.var_size;
  return f;
}

/// NGTDM features. Conventions: coarseness is capped at kCoarsenessCap when sum p*s = 0;
/// contrast is 0 with a single occupied level; busyness and strength are 0 when their
/// denominators vanish. Empty when no voxel has an in-mask neighbour.
inline FeatureMap ngtdm_features(const Ngtdm& m) {
  FeatureMap f;
  double nvp = 0.0;
  for (auto c : m.n) nvp += static_cast<double>(c);
  if (nvp <= 0.0) return f;
  const auto ng = static_cast<std::size_t>(m.ng);
  std::vector<double> p(ng);
  int ngp = 0;
  double sum_ps = 0.0, sum_s = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    p[i] = static_cast<double>(m.n[i]) / nvp;
    if (p[i] > 0) ++ngp;
    sum_ps += p[i] * m.s[i];
    sum_s += m.s[i];
  }
  double contrast_pairs = 0.0, busy_den = 0.0, complexity = 0.0, strength_num = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    if (p[i] == 0.0) continue;
    for (std::size_t j = 0; j < ng; ++j) {
      if (p[j] == 0.0) continue;
      const double gi = static_cast<double>(i + 1), gj = static_cast<double>(j + 1);
      contrast_pairs += p[i] * p[j] * (gi - gj) * (gi - gj);
      busy_den += std::abs(gi * p[i] - gj * p[j]);
      complexity += std::abs(gi - gj) * (p[i] * m.s[i] + p[j] * m.s[j]) / (p[i] + p[j]);
      strength_num += (p[i] + p[j]) * (gi - gj) * (gi - gj);
    }
  }
  f["ngtdm_coarseness"] = sum_ps > 0.0 ? 1.0 / sum_ps : kCoarsenessCap;
  f["ngtdm_contrast"] = ngp > 1 ? contrast_pairs / (ngp * (ngp - 1.0)) * sum_s / nvp : 0.0;
  f["ngtdm_busyness"] = busy_den > 0.0 ? sum_ps / busy_den : 0.0;
  f["ngtdm_complexity"] = complexity / nvp;
  f["ngtdm_strength"] = sum_s > 0.0 ? strength_num / sum_s : 0.0;
  return f;
}

/// Full catalog for one ROI: raw masked values plus their discretization on `mask`'s grid.
inline FeatureVector compute_features(std::span<const double> values, const RoiMask& mask,
                                      const DiscretizedRoi& disc, FlavourKey provenance = vanilla_flavour()) {
  FeatureVector fv;
  fv.provenance = std::move(provenance);
  if (values.empty()) throw Error("compute_features: empty ROI");
  const LevelGrid grid = make_level_grid(mask, disc);
  fv.set(first_order(values, disc));
  fv.set(glcm_features(glcm(grid)));
  fv.set(glrlm_features(glrlm(grid)));
  fv.set(glszm_features(glszm(grid)));
  fv.set(gldm_features(gldm(grid)));
  fv.set(ngtdm_features(ngtdm(grid)));
  for (const auto& v : fv.values)
    if (v && !std::isfinite(*v)) throw Error("compute_features: non-finite feature for " + fv.provenance.str());
  return fv;
}

}  // namespace tensorrad

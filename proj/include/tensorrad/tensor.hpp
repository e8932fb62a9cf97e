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

// The cases x features x flavours tensor and the operations on its flavour axis:
// combination enumeration, concatenation, redundancy pruning, PCA aggregation
// and test-retest repeatability.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "tensorrad/io.hpp"

namespace tensorrad {

/// Numeric-aware canonical flavour order: axis, then parameters (numbers compared by value).
inline bool flavour_less(const FlavourKey& a, const FlavourKey& b) {
  if (a.axis() != b.axis()) return a.axis() < b.axis();
  const auto& pa = a.params();
  const auto& pb = b.params();
  for (std::size_t i = 0; i < std::min(pa.size(), pb.size()); ++i) {
    if (pa[i].first != pb[i].first) return pa[i].first < pb[i].first;
    if (pa[i].second == pb[i].second) continue;
    try {
      const double x = parse_double(pa[i].second), y = parse_double(pb[i].second);
      if (x != y) return x < y;
    } catch (const Error&) {
    }
    return pa[i].second < pb[i].second;
  }
  return pa.size() < pb.size();
}

/// Dense matrix with row (case) and column names.
struct NamedMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
};

struct CaseMeta {
  std::string patient_id;
  std::optional<int> label;
};

/// cases x features x flavours; missing cells are NaN.
struct FeatureTensor {
  std::vector<std::string> cases;
  std::vector<std::string> features;
  std::vector<FlavourKey> flavours;
  std::vector<double> values;
  std::vector<std::optional<int>> labels;
  std::vector<std::string> groups;

  std::size_t index(std::size_t c, std::size_t f, std::size_t k) const {
    return (c * features.size() + f) * flavours.size() + k;
  }
  double at(std::size_t c, std::size_t f, std::size_t k) const { return values[index(c, f, k)]; }
  double& at(std::size_t c, std::size_t f, std::size_t k) { return values[index(c, f, k)]; }

  std::size_t flavour_index(const FlavourKey& key) const {
    for (std::size_t k = 0; k < flavours.size(); ++k)
      if (flavours[k] == key) return k;
    throw Error("tensor has no flavour " + key.str());
  }
  std::size_t feature_index(const std::string& name) const {
    for (std::size_t f = 0; f < features.size(); ++f)
      if (features[f] == name) return f;
    throw Error("tensor has no feature '" + name + "'");
  }
  std::array<std::size_t, 3> shape() const { return {cases.size(), features.size(), flavours.size()}; }

  /// True when the (feature, flavour) column has a value for every case.
  bool column_complete(std::size_t f, std::size_t k) const {
    for (std::size_t c = 0; c < cases.size(); ++c)
      if (std::isnan(at(c, f, k))) return false;
    return true;
  }

  void validate() const {
    if (values.size() != cases.size() * features.size() * flavours.size())
      throw Error("tensor values do not match axis lengths");
    std::set<std::string> keys;
    for (const auto& k : flavours)
      if (!keys.insert(k.str()).second) throw Error("tensor has duplicate flavour " + k.str());
    if (!labels.empty() && labels.size() != cases.size()) throw Error("tensor labels misaligned");
    if (!groups.empty() && groups.size() != cases.size()) throw Error("tensor groups misaligned");
  }

  std::vector<int> label_vector() const {
    std::vector<int> y;
    for (std::size_t c = 0; c < cases.size(); ++c) {
      if (c >= labels.size() || !labels[c]) throw Error("case '" + cases[c] + "' has no label");
      y.push_back(*labels[c]);
    }
    return y;
  }
};

/// Stacks per-flavour tables into a tensor: cases sorted lexically, features in the
/// first table's column order, flavours in canonical order.
inline FeatureTensor assemble(std::span<const FeatureTable> tables, const std::map<std::string, CaseMeta>& meta = {}) {
  if (tables.empty()) throw Error("assemble: no tables");
  FeatureTensor t;
  t.features = tables.front().columns;
  std::map<std::string, std::map<std::string, const FeatureRow*>> by_flavour;  // flavour -> case -> row
  std::map<std::string, FlavourKey> keys;
  for (const auto& tab : tables) {
    tab.validate();
    if (tab.columns != t.features) throw Error("assemble: feature columns differ across tables");
    for (const auto& r : tab.rows) {
      keys.emplace(r.flavour.str(), r.flavour);
      by_flavour[r.flavour.str()][r.case_id] = &r;
    }
  }
  for (const auto& [s, k] : keys) t.flavours.push_back(k);
  std::stable_sort(t.flavours.begin(), t.flavours.end(), flavour_less);
  std::set<std::string> all_cases;
  for (const auto& [f, rows] : by_flavour)
    for (const auto& [c, r] : rows) all_cases.insert(c);
  t.cases.assign(all_cases.begin(), all_cases.end());
  for (const auto& [f, rows] : by_flavour)
    for (const auto& c : t.cases)
      if (!rows.count(c)) throw Error("assemble: flavour " + f + " is missing case '" + c + "'");
  t.values.assign(t.cases.size() * t.features.size() * t.flavours.size(), kNaN);
  for (std::size_t k = 0; k < t.flavours.size(); ++k) {
    const auto& rows = by_flavour.at(t.flavours[k].str());
    for (std::size_t c = 0; c < t.cases.size(); ++c) {
      const auto* r = rows.at(t.cases[c]);
      for (std::size_t f = 0; f < t.features.size(); ++f)
        if (r->values[f]) t.at(c, f, k) = *r->values[f];
    }
  }
  for (const auto& c : t.cases) {
    auto it = meta.find(c);
    t.labels.push_back(it == meta.end() ? std::nullopt : it->second.label);
    t.groups.push_back(it == meta.end() ? c : it->second.patient_id);
  }
  t.validate();
  return t;
}

/// Keeps only the listed features (in the given order).
inline FeatureTensor select_features(const FeatureTensor& t, std::span<const std::string> names) {
  FeatureTensor out = t;
  out.features.assign(names.begin(), names.end());
  out.values.assign(t.cases.size() * names.size() * t.flavours.size(), kNaN);
  for (std::size_t f = 0; f < names.size(); ++f) {
    const std::size_t src = t.feature_index(names[f]);
    for (std::size_t c = 0; c < t.cases.size(); ++c)
      for (std::size_t k = 0; k < t.flavours.size(); ++k) out.at(c, f, k) = t.at(c, src, k);
  }
  return out;
}

/// Keeps only the listed flavours (in the given order).
inline FeatureTensor select_flavours(const FeatureTensor& t, std::span<const FlavourKey> keys) {
  FeatureTensor out = t;
  out.flavours.assign(keys.begin(), keys.end());
  out.values.assign(t.cases.size() * t.features.size() * keys.size(), kNaN);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const std::size_t src = t.flavour_index(keys[k]);
    for (std::size_t c = 0; c < t.cases.size(); ++c)
      for (std::size_t f = 0; f < t.features.size(); ++f) out.at(c, f, k) = t.at(c, f, src);
  }
  return out;
}

/// Collapses the listed flavours into one column per feature holding the per-case
/// mean over the flavours that have a value. Uses no other case, so it is safe
/// to apply before cross-validation.
inline FeatureTensor average_flavours(const FeatureTensor& t, std::span<const FlavourKey> keys, FlavourKey as) {
  if (keys.empty()) throw Error("average_flavours: no flavours given");
  std::vector<std::size_t> src;
  for (const auto& k : keys) src.push_back(t.flavour_index(k));
  FeatureTensor out = t;
  out.flavours = {std::move(as)};
  out.values.assign(t.cases.size() * t.features.size(), kNaN);
  for (std::size_t c = 0; c < t.cases.size(); ++c)
    for (std::size_t f = 0; f < t.features.size(); ++f) {
      double sum = 0.0;
      std::size_t n = 0;
      for (auto k : src)
        if (!std::isnan(t.at(c, f, k))) {
          sum += t.at(c, f, k);
          ++n;
        }
      if (n) out.at(c, f, 0) = sum / static_cast<double>(n);
    }
  return out;
}

inline nlohmann::json tensor_to_json(const FeatureTensor& t) {
  nlohmann::json j;
  j["cases"] = t.cases;
  j["features"] = t.features;
  j["flavours"] = nlohmann::json::array();
  for (const auto& k : t.flavours) j["flavours"].push_back(k.str());
  j["groups"] = t.groups;
  j["labels"] = nlohmann::json::array();
  for (const auto& l : t.labels) j["labels"].push_back(l ? nlohmann::json(*l) : nlohmann::json(nullptr));
  j["values"] = nlohmann::json::array();
  for (double v : t.values) j["values"].push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  return j;
}

inline FeatureTensor tensor_from_json(const nlohmann::json& j) {
  FeatureTensor t;
  t.cases = j.at("cases").get<std::vector<std::string>>();
  t.features = j.at("features").get<std::vector<std::string>>();
  for (const auto& k : j.at("flavours")) t.flavours.push_back(FlavourKey::parse(k.get<std::string>()));
  t.groups = j.at("groups").get<std::vector<std::string>>();
  for (const auto& l : j.at("labels")) t.labels.push_back(l.is_null() ? std::nullopt : std::optional<int>(l.get<int>()));
  for (const auto& v : j.at("values")) t.values.push_back(v.is_null() ? kNaN : v.get<double>());
  t.validate();
  return t;
}

/// All subsets of {0..n-1} with at least `min_size` members, by size then lexicographically.
inline std::vector<std::vector<std::size_t>> enumerate_flavour_combinations(std::size_t n, std::size_t min_size = 2) {
  if (n > 20) throw Error("enumerate_flavour_combinations: n = " + std::to_string(n) + " exceeds the guard of 20");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t size = std::max<std::size_t>(min_size, 1); size <= n; ++size) {
    std::vector<std::size_t> pick(size);
    for (std::size_t i = 0; i < size; ++i) pick[i] = i;
    while (true) {
      out.push_back(pick);
      std::size_t i = size;
      while (i > 0 && pick[i - 1] == n - size + i - 1) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t j = i; j < size; ++j) pick[j] = pick[j - 1] + 1;
    }
  }
  return out;
}

/// Concatenates the subset's feature blocks, flavour-major; columns are `<flavour>::<feature>`.
inline NamedMatrix slice_concat(const FeatureTensor& t, std::span<const FlavourKey> subset) {
  if (subset.empty()) throw Error("slice_concat: empty flavour subset");
  NamedMatrix m;
  m.rows = t.cases;
  m.values.resize(static_cast<Eigen::Index>(t.cases.size()),
                  static_cast<Eigen::Index>(t.features.size() * subset.size()));
  Eigen::Index col = 0;
  for (const auto& key : subset) {
    const std::size_t k = t.flavour_index(key);
    for (std::size_t f = 0; f < t.features.size(); ++f, ++col) {
      m.columns.push_back(key.str() + "::" + t.features[f]);
      for (std::size_t c = 0; c < t.cases.size(); ++c) m.values(static_cast<Eigen::Index>(c), col) = t.at(c, f, k);
    }
  }
  return m;
}

/// Drops columns containing any missing (NaN) cell; returns the dropped names.
inline std::vector<std::string> drop_incomplete_columns(NamedMatrix& m) {
  std::vector<Eigen::Index> keep;
  std::vector<std::string> dropped;
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    if (m.values.col(j).hasNaN())
      dropped.push_back(m.columns[static_cast<std::size_t>(j)]);
    else
      keep.push_back(j);
  }
  NamedMatrix out;
  out.rows = m.rows;
  out.values.resize(m.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.values.col(static_cast<Eigen::Index>(i)) = m.values.col(keep[i]);
    out.columns.push_back(m.columns[static_cast<std::size_t>(keep[i])]);
  }
  m = std::move(out);
  return dropped;
}

namespace detail {
inline double column_std(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().mean());
}
}  // namespace detail

struct PruneResult {
  NamedMatrix matrix;
  std::vector<std::string> dropped;
};

/// Drops constant columns, then walks columns left to right dropping any whose
/// |Pearson r| with an already-retained column exceeds `threshold`.
inline PruneResult prune_correlated(const NamedMatrix& m, double threshold = 0.95) {
  if (m.values.rows() < 2) throw Error("prune_correlated: need at least 2 rows");
  const Eigen::Index n = m.values.rows();
  std::vector<Eigen::Index> kept;
  std::vector<Eigen::VectorXd> kept_z;
  PruneResult r;
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    const Eigen::VectorXd col = m.values.col(j);
    const double sd = detail::column_std(col);
    bool drop = !(sd > 0.0) || col.hasNaN();
    Eigen::VectorXd z;
    if (!drop) {
      z = (col.array() - col.mean()) / sd;
      for (const auto& other : kept_z) {
        const double corr = z.dot(other) / static_cast<double>(n);
        if (std::abs(corr) > threshold) {
          drop = true;
          break;
        }
      }
    }
    if (drop) {
      r.dropped.push_back(m.columns[static_cast<std::size_t>(j)]);
    } else {
      kept.push_back(j);
      kept_z.push_back(std::move(z));
    }
  }
  r.matrix.rows = m.rows;
  r.matrix.values.resize(n, static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    r.matrix.values.col(static_cast<Eigen::Index>(i)) = m.values.col(kept[i]);
    r.matrix.columns.push_back(m.columns[static_cast<std::size_t>(kept[i])]);
  }
  return r;
}

/// First-principal-component aggregation of one feature's flavour columns.
/// Columns are z-scored (population std), the leading eigenvector of their
/// covariance is the loading (sign chosen so the loadings sum to >= 0).
struct PcaAggregator {
  Eigen::VectorXd mean, scale, loading;
  std::vector<std::size_t> used;  // indices of non-constant input columns
  double eigenvalue = 0.0;

  static PcaAggregator fit(const Eigen::MatrixXd& cols) {
    if (cols.rows() < 3) throw Error("pca_aggregate: need at least 3 cases");
    if (cols.hasNaN()) throw Error("pca_aggregate: missing values");
    PcaAggregator p;
    for (Eigen::Index j = 0; j < cols.cols(); ++j)
      if (detail::column_std(cols.col(j)) > 0.0) p.used.push_back(static_cast<std::size_t>(j));
    if (p.used.empty()) throw Error("pca_aggregate: all flavour columns are constant");
    const auto m = static_cast<Eigen::Index>(p.used.size());
    Eigen::MatrixXd z(cols.rows(), m);
    p.mean.resize(m);
    p.scale.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::VectorXd c = cols.col(static_cast<Eigen::Index>(p.used[static_cast<std::size_t>(i)]));
      p.mean(i) = c.mean();
      p.scale(i) = detail::column_std(c);
      z.col(i) = (c.array() - p.mean(i)) / p.scale(i);
    }
    const Eigen::MatrixXd cov = z.transpose() * z / static_cast<double>(z.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    p.loading = es.eigenvectors().col(m - 1);
    p.eigenvalue = es.eigenvalues()(m - 1);
    if (p.loading.sum() < 0.0) p.loading = -p.loading;
    return p;
  }

  Eigen::VectorXd transform(const Eigen::MatrixXd& cols) const {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(cols.rows());
    for (std::size_t i = 0; i < used.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      score += loading(ii) * ((cols.col(static_cast<Eigen::Index>(used[i])).array() - mean(ii)) / scale(ii)).matrix();
    }
    return score;
  }
};

/// Cases x flavours block of one feature.
inline Eigen::MatrixXd feature_block(const FeatureTensor& t, std::size_t f) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.cases.size()), static_cast<Eigen::Index>(t.flavours.size()));
  for (std::size_t c = 0; c < t.cases.size(); ++c)
    for (std::size_t k = 0; k < t.flavours.size(); ++k)
      m(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(k)) = t.at(c, f, k);
  return m;
}

inline Eigen::VectorXd pca_aggregate(const FeatureTensor& t, const std::string& feature) {
  const auto block = feature_block(t, t.feature_index(feature));
  return PcaAggregator::fit(block).transform(block);
}

// ---------------------------------------------------------------------------
// Repeatability

enum class IccBand { LOW, MEDIUM, HIGH, EXCELLENT };

inline std::string to_string(IccBand b) {
  switch (b) {
    case IccBand::LOW: return "LOW";
    case IccBand::MEDIUM: return "MEDIUM";
    case IccBand::HIGH: return "HIGH";
    case IccBand::EXCELLENT: return "EXCELLENT";
  }
  return "LOW";
}

struct IccThresholds {
  double medium = 0.50, high = 0.75, excellent = 0.90;
};

inline IccBand icc_band(double icc, const IccThresholds& th = {}) {
  if (icc >= th.excellent) return IccBand::EXCELLENT;
  if (icc >= th.high) return IccBand::HIGH;
  if (icc >= th.medium) return IccBand::MEDIUM;
  return IccBand::LOW;
}

enum class IccModel { ONE_WAY_SINGLE, TWO_WAY_CONSISTENCY };

struct IccResult {
  MaybeValue icc;
  std::optional<IccBand> band;
  double msb = 0.0, msw = 0.0;
};

/// ICC(1,1) by default, ICC(3,1) on request, for two paired sessions.
inline IccResult icc(std::span<const double> test, std::span<const double> retest,
                     IccModel model = IccModel::ONE_WAY_SINGLE, const IccThresholds& th = {}) {
  if (test.size() != retest.size()) throw Error("icc: sessions are not paired");
  const std::size_t n = test.size();
  if (n < 3) throw Error("icc: need at least 3 cases");
  const double k = 2.0;
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) grand += test[i] + retest[i];
  grand /= k * static_cast<double>(n);
  double ssb = 0.0, ssw = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = 0.5 * (test[i] + retest[i]);
    ssb += k * (mi - grand) * (mi - grand);
    ssw += (test[i] - mi) * (test[i] - mi) + (retest[i] - mi) * (retest[i] - mi);
    m1 += test[i];
    m2 += retest[i];
  }
  IccResult r;
  const double dn = static_cast<double>(n);
  r.msb = ssb / (dn - 1.0);
  if (ssb + ssw <= 0.0) return r;  // no variance at all: undefined
  double num = 0.0, den = 0.0;
  if (model == IccModel::ONE_WAY_SINGLE) {
    r.msw = ssw / (dn * (k - 1.0));
    num = r.msb - r.msw;
    den = r.msb + (k - 1.0) * r.msw;
  } else {
    m1 /= dn;
    m2 /= dn;
    const double ss_sessions = dn * ((m1 - grand) * (m1 - grand) + (m2 - grand) * (m2 - grand));
    const double mse = (ssw - ss_sessions) / ((dn - 1.0) * (k - 1.0));
    r.msw = mse;
    num = r.msb - mse;
    den = r.msb + (k - 1.0) * mse;
  }
  if (den == 0.0) return r;
  r.icc = num / den;
  r.band = icc_band(*r.icc, th);
  return r;
}

struct FeatureRepeatability {
  std::string feature;
  std::vector<MaybeValue> flavour_icc;  // aligned with the tensor's flavours
  MaybeValue tr_icc;
  std::optional<IccBand> tr_band;
  MaybeValue median_flavour_icc;
  std::size_t flavours_aggregated = 0;
};

struct RepeatabilityReport {
  std::vector<FlavourKey> flavours;
  std::vector<FeatureRepeatability> features;

  /// Band histogram per flavour column plus a final "TR" entry.
  std::map<std::string, std::array<std::size_t, 4>> band_counts() const {
    std::map<std::string, std::array<std::size_t, 4>> out;
    for (std::size_t k = 0; k < flavours.size(); ++k) {
      auto& h = out[flavours[k].str()];
      for (const auto& f : features)
        if (f.flavour_icc[k]) ++h[static_cast<std::size_t>(icc_band(*f.flavour_icc[k]))];
    }
    auto& h = out["TR"];
    for (const auto& f : features)
      if (f.tr_band) ++h[static_cast<std::size_t>(*f.tr_band)];
    return out;
  }
};

/// Per-flavour ICC and the ICC of the PCA-aggregated TR feature. The aggregator is
/// fitted on both sessions pooled and applied to each, so the two score sets share
/// one scale.
inline RepeatabilityReport tr_repeatability_report(const FeatureTensor& test, const FeatureTensor& retest,
                                                   IccModel model = IccModel::ONE_WAY_SINGLE) {
  if (test.cases != retest.cases || test.features != retest.features || test.flavours != retest.flavours)
    throw Error("tr_repeatability_report: test and retest tensors have different axes");
  RepeatabilityReport rep;
  rep.flavours = test.flavours;
  const auto n = static_cast<Eigen::Index>(test.cases.size());
  for (std::size_t f = 0; f < test.features.size(); ++f) {
    FeatureRepeatability fr;
    fr.feature = test.features[f];
    const Eigen::MatrixXd a = feature_block(test, f), b = feature_block(retest, f);
    std::vector<Eigen::Index> complete;
    std::vector<double> iccs;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
      if (a.col(k).hasNaN() || b.col(k).hasNaN()) {
        fr.flavour_icc.push_back(std::nullopt);
        continue;
      }
      complete.push_back(k);
      const Eigen::VectorXd x = a.col(k), y = b.col(k);
      auto r = icc(std::span<const double>(x.data(), static_cast<std::size_t>(n)),
                   std::span<const double>(y.data(), static_cast<std::size_t>(n)), model);
      fr.flavour_icc.push_back(r.icc);
      if (r.icc) iccs.push_back(*r.icc);
    }
    if (!iccs.empty()) {
      std::sort(iccs.begin(), iccs.end());
      const std::size_t m = iccs.size();
      fr.median_flavour_icc = m % 2 ? iccs[m / 2] : 0.5 * (iccs[m / 2 - 1] + iccs[m / 2]);
    }
    if (!complete.empty()) {
      Eigen::MatrixXd pooled(2 * n, static_cast<Eigen::Index>(complete.size()));
      for (std::size_t i = 0; i < complete.size(); ++i) {
        pooled.col(static_cast<Eigen::Index>(i)).head(n) = a.col(complete[i]);
        pooled.col(static_cast<Eigen::Index>(i)).tail(n) = b.col(complete[i]);
      }
      try {
        const auto agg = PcaAggregator::fit(pooled);
        fr.flavours_aggregated = agg.used.size();
        const Eigen::VectorXd scores = agg.transform(pooled);
        const Eigen::VectorXd s1 = scores.head(n), s2 = scores.tail(n);
        auto r = icc(std::span<const double>(s1.data(), static_cast<std::size_t>(n)),
                     std::span<const double>(s2.data(), static_cast<std::size_t>(n)), model);
        fr.tr_icc = r.icc;
        fr.tr_band = r.band;
      } catch (const Error&) {
        // all flavour columns constant: TR value undefined
      }
    }
    rep.features.push_back(std::move(fr));
  }
  return rep;
}

/// Feature rows with one ICC column per flavour, then TR ICC and TR band.
inline std::string repeatability_csv(const RepeatabilityReport& rep) {
  std::string s = "feature";
  for (const auto& k : rep.flavours) s += "," + k.str();
  s += ",TR,TR_band,median_flavour\n";
  for (const auto& f : rep.features) {
    s += f.feature;
    for (const auto& v : f.flavour_icc) s += "," + (v ? format_double17(*v) : std::string());
    s += "," + (f.tr_icc ? format_double17(*f.tr_icc) : std::string());
    s += "," + (f.tr_band ? to_string(*f.tr_band) : std::string());
    s += "," + (f.median_flavour_icc ? format_double17(*f.median_flavour_icc) : std::string()) + "\n";
  }
  return s;
}

inline std::string band_counts_csv(const RepeatabilityReport& rep) {
  std::string s = "flavour,LOW,MEDIUM,HIGH,EXCELLENT\n";
  const auto counts = rep.band_counts();
  auto row = [&](const std::string& name) {
    const auto& h = counts.at(name);
    s += name + "," + std::to_string(h[0]) + "," + std::to_string(h[1]) + "," + std::to_string(h[2]) + "," +
         std::to_string(h[3]) + "\n";
  };
  for (const auto& k : rep.flavours) row(k.str());
  row("TR");
  return s;
}

}  // namespace tensorrad

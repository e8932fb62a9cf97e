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

// Batch orchestration shared by the command-line front end and the end-to-end
// scenarios: JSON schemas with path-qualified errors, parallel extraction into a
// tensor, pipeline construction, repeated cross-validation and flavour sweeps.

#include <atomic>
#include <exception>
#include <thread>

#include "tensorrad/extract.hpp"
#include "tensorrad/ml/pipeline.hpp"
#include "tensorrad/ml/stats.hpp"
#include "tensorrad/tensor.hpp"
#include "tensorrad/trnet.hpp"

namespace tensorrad {

/// A configuration document that does not match its schema; `path` locates the field.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what) : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

namespace schema {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline const json& object(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path.empty() ? "$" : path, "expected an object");
  return j;
}

inline const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  return j;
}

/// Rejects keys outside `allowed`, so typos surface instead of being ignored.
inline void only(const json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw SchemaError(join(path, it.key()), "unknown field");
  }
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path) {
  const auto p = join(path, key);
  if (!j.contains(key)) throw SchemaError(p, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(p, "wrong type");
  }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& path) {
  return j.contains(key) ? get<T>(j, key, path) : fallback;
}

inline double positive(double v, const std::string& path) {
  if (!(v > 0.0) || !std::isfinite(v)) throw SchemaError(path, "must be a positive number");
  return v;
}

/// Runs `f`, re-raising any library error as a schema error at `path`.
template <class F>
auto guarded(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
}

}  // namespace schema

// ---------------------------------------------------------------------------
// Work pool

/// Runs f(0..n-1) on up to `threads` workers. Each index owns its output slot, so the
/// result never depends on the worker count; the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Flavour grids and extraction config

/// A flavour is either the key text (`BIN_WIDTH{width=25}`) or an object
/// `{"axis": "BIN_WIDTH", "width": 25}`. Keys are validated by building the stage they
/// describe.
inline FlavourKey flavour_from_json(const nlohmann::json& j, const std::string& path) {
  FlavourKey k;
  if (j.is_string()) {
    k = schema::guarded(path, [&] { return FlavourKey::parse(j.get<std::string>()); });
  } else {
    schema::object(j, path);
    const auto axis_text = schema::get<std::string>(j, "axis", path);
    const auto axis = schema::guarded(schema::join(path, "axis"), [&] { return axis_from_string(axis_text); });
    k = FlavourKey(axis);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "axis") continue;
      const auto p = schema::join(path, it.key());
      schema::guarded(p, [&] {
        if (it->is_number_integer())
          k.set(it.key(), it->get<long>());
        else if (it->is_number())
          k.set(it.key(), it->get<double>());
        else if (it->is_string())
          k.set(it.key(), it->get<std::string>());
        else
          throw Error("parameter must be a number or a string");
        return 0;
      });
    }
  }
  schema::guarded(path, [&] {
    switch (k.axis()) {
      case FlavourAxis::BIN_WIDTH:
        if (!(k.get_double("width") > 0.0)) throw Error("width must be positive");
        break;
      case FlavourAxis::BIN_COUNT:
        if (k.get_int("count") < 1) throw Error("count must be >= 1");
        break;
      case FlavourAxis::PERTURB:
        PerturbSpec::from_key(k);
        break;
      case FlavourAxis::FILTER:
        FilterSpec::from_key(k);
        break;
      case FlavourAxis::FUSION:
        FusionSpec::from_key(k);
        break;
      case FlavourAxis::VANILLA:
        if (k.has("modality")) unit_from_string(k.get("modality"));
        break;
    }
    return 0;
  });
  return k;
}

/// `{"flavours": [...]}`; duplicates are rejected.
inline std::vector<FlavourKey> flavour_grid_from_json(const nlohmann::json& j, const std::string& path = "") {
  schema::only(j, {"flavours"}, path);
  const auto p = schema::join(path, "flavours");
  if (!j.contains("flavours") || j["flavours"].is_null()) throw SchemaError(p, "missing required field");
  const auto& arr = schema::array(j["flavours"], p);
  if (arr.empty()) throw SchemaError(p, "at least one flavour is required");
  std::vector<FlavourKey> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto k = flavour_from_json(arr[i], schema::at(p, i));
    for (const auto& prev : out)
      if (prev == k) throw SchemaError(schema::at(p, i), "duplicate flavour " + k.str());
    out.push_back(std::move(k));
  }
  return out;
}

inline nlohmann::json flavour_grid_to_json(std::span<const FlavourKey> keys) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& k : keys) arr.push_back(k.str());
  return {{"flavours", arr}};
}

inline DiscretizationSpec discretization_from_json(const nlohmann::json& j, const std::string& path) {
  schema::only(j, {"scheme", "width", "count"}, path);
  DiscretizationSpec d;
  const auto scheme = schema::get<std::string>(j, "scheme", path);
  if (scheme == "FBW") {
    d.scheme = BinScheme::FBW;
    d.width = schema::positive(schema::get<double>(j, "width", path), schema::join(path, "width"));
  } else if (scheme == "FBC") {
    d.scheme = BinScheme::FBC;
    d.count = schema::get<int>(j, "count", path);
    if (d.count < 1) throw SchemaError(schema::join(path, "count"), "must be >= 1");
  } else {
    throw SchemaError(schema::join(path, "scheme"), "expected FBW or FBC, got '" + scheme + "'");
  }
  return d;
}

inline nlohmann::json discretization_to_json(const DiscretizationSpec& d) {
  if (d.scheme == BinScheme::FBW) return {{"scheme", "FBW"}, {"width", d.width}};
  return {{"scheme", "FBC"}, {"count", d.count}};
}

inline ExtractConfig extract_config_from_json(const nlohmann::json& j, const std::string& path = "") {
  schema::only(j, {"modality", "base_discretization", "derived_discretization", "fusion_first", "fusion_second",
                   "min_roi_voxels"},
               path);
  ExtractConfig c;
  auto unit = [&](const char* key) {
    const auto p = schema::join(path, key);
    return schema::guarded(p, [&] { return unit_from_string(schema::get<std::string>(j, key, path)); });
  };
  if (j.contains("modality")) c.modality = unit("modality");
  if (j.contains("fusion_first")) c.fusion_first = unit("fusion_first");
  if (j.contains("fusion_second")) c.fusion_second = unit("fusion_second");
  if (j.contains("base_discretization"))
    c.base_discretization = discretization_from_json(j["base_discretization"], schema::join(path, "base_discretization"));
  if (j.contains("derived_discretization"))
    c.derived_discretization =
        discretization_from_json(j["derived_discretization"], schema::join(path, "derived_discretization"));
  c.min_roi_voxels = schema::get_or<std::size_t>(j, "min_roi_voxels", c.min_roi_voxels, path);
  return c;
}

inline nlohmann::json extract_config_to_json(const ExtractConfig& c) {
  nlohmann::json j{{"base_discretization", discretization_to_json(c.base_discretization)},
                   {"derived_discretization", discretization_to_json(c.derived_discretization)},
                   {"fusion_first", to_string(c.fusion_first)},
                   {"fusion_second", to_string(c.fusion_second)},
                   {"min_roi_voxels", c.min_roi_voxels}};
  if (c.modality) j["modality"] = to_string(*c.modality);
  return j;
}

/// One table per flavour, extracted over a bounded pool of case x flavour jobs.
inline std::vector<FeatureTable> extract_tables(std::span<const Case> cases, std::span<const FlavourKey> flavours,
                                                const ExtractConfig& cfg, std::size_t threads,
                                                std::vector<std::string>* warnings = nullptr) {
  const std::size_t nc = cases.size(), nf = flavours.size();
  std::vector<FeatureVector> out(nc * nf);
  parallel_for(nc * nf, threads, [&](std::size_t i) { out[i] = extract(cases[i % nc], flavours[i / nc], cfg); });
  std::vector<FeatureTable> tables(nf);
  for (std::size_t k = 0; k < nf; ++k) {
    tables[k].columns = feature_names();
    for (std::size_t c = 0; c < nc; ++c) {
      auto& fv = out[k * nc + c];
      if (warnings && !fv.diagnostic.empty()) warnings->push_back(fv.diagnostic);
      tables[k].rows.push_back({cases[c].case_id, flavours[k], std::move(fv.values)});
    }
  }
  return tables;
}

inline std::map<std::string, CaseMeta> case_meta(std::span<const Case> cases) {
  std::map<std::string, CaseMeta> m;
  for (const auto& c : cases) m[c.case_id] = {c.patient_id, c.label};
  return m;
}

inline FeatureTensor extract_tensor(std::span<const Case> cases, std::span<const FlavourKey> flavours,
                                    const ExtractConfig& cfg, std::size_t threads,
                                    std::vector<std::string>* warnings = nullptr) {
  const auto tables = extract_tables(cases, flavours, cfg, threads, warnings);
  return assemble(tables, case_meta(cases));
}

/// Catalog names by selector: "all", "discretization_dependent", or an explicit list.
inline std::vector<std::string> feature_selection_from_json(const nlohmann::json& j, const std::string& path) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::vector<std::string> out;
    for (const auto& f : feature_catalog())
      if (s == "all" || (s == "discretization_dependent" && f.discretization_dependent)) out.push_back(f.name);
    if (out.empty()) throw SchemaError(path, "expected 'all', 'discretization_dependent' or a list of names");
    return out;
  }
  const auto& arr = schema::array(j, path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string()) throw SchemaError(schema::at(path, i), "expected a feature name");
    const auto name = arr[i].get<std::string>();
    schema::guarded(schema::at(path, i), [&] { return feature_index(name); });
    out.push_back(name);
  }
  if (out.empty()) throw SchemaError(path, "at least one feature is required");
  return out;
}

// ---------------------------------------------------------------------------
// Pipelines

inline ml::ClassifierPtr model_from_json(const nlohmann::json& j, const std::string& path, std::uint64_t seed) {
  schema::object(j, path);
  const auto type = schema::get<std::string>(j, "type", path);
  if (type == "lda") {
    schema::only(j, {"type"}, path);
    return std::make_unique<ml::Lda>();
  }
  if (type == "logreg") {
    schema::only(j, {"type", "l2"}, path);
    const double l2 = schema::get_or<double>(j, "l2", 1.0, path);
    if (!(l2 >= 0.0)) throw SchemaError(schema::join(path, "l2"), "must be >= 0");
    return std::make_unique<ml::LogisticRegression>(l2);
  }
  if (type == "rf") {
    schema::only(j, {"type", "trees", "bootstrap"}, path);
    const auto trees = schema::get_or<std::size_t>(j, "trees", 100, path);
    if (trees == 0) throw SchemaError(schema::join(path, "trees"), "must be >= 1");
    return std::make_unique<ml::RandomForest>(trees, seed, schema::get_or<bool>(j, "bootstrap", true, path));
  }
  if (type == "majority") {
    schema::only(j, {"type"}, path);
    return std::make_unique<ml::MajorityClassifier>();
  }
  if (type == "ensemble") {
    schema::only(j, {"type", "members"}, path);
    const auto p = schema::join(path, "members");
    if (!j.contains("members")) throw SchemaError(p, "missing required field");
    const auto& arr = schema::array(j["members"], p);
    if (arr.empty()) throw SchemaError(p, "at least one member is required");
    std::vector<ml::ClassifierPtr> members;
    for (std::size_t i = 0; i < arr.size(); ++i) members.push_back(model_from_json(arr[i], schema::at(p, i), mix_seed(seed, i)));
    return std::make_unique<ml::Ensemble>(std::move(members));
  }
  throw SchemaError(schema::join(path, "type"), "unknown model '" + type + "'");
}

inline ml::StagePtr stage_from_json(const nlohmann::json& j, const std::string& path, std::uint64_t seed) {
  schema::object(j, path);
  const auto type = schema::get<std::string>(j, "type", path);
  if (type == "zscore") {
    schema::only(j, {"type"}, path);
    return std::make_unique<ml::ZScoreStage>();
  }
  if (type == "smote") {
    schema::only(j, {"type", "k"}, path);
    const auto k = schema::get_or<std::size_t>(j, "k", 5, path);
    if (k == 0) throw SchemaError(schema::join(path, "k"), "must be >= 1");
    return std::make_unique<ml::SmoteStage>(k, seed);
  }
  if (type == "prune") {
    schema::only(j, {"type", "threshold"}, path);
    const double th = schema::get_or<double>(j, "threshold", 0.95, path);
    if (!(th > 0.0 && th <= 1.0)) throw SchemaError(schema::join(path, "threshold"), "must be in (0, 1]");
    return std::make_unique<ml::PruneStage>(th);
  }
  if (type == "poly") {
    schema::only(j, {"type", "degree"}, path);
    const int d = schema::get_or<int>(j, "degree", 2, path);
    if (d < 1) throw SchemaError(schema::join(path, "degree"), "must be >= 1");
    return std::make_unique<ml::PolynomialStage>(d);
  }
  if (type == "anova") {
    schema::only(j, {"type", "top_k"}, path);
    const auto k = schema::get<std::size_t>(j, "top_k", path);
    if (k == 0) throw SchemaError(schema::join(path, "top_k"), "must be >= 1");
    return std::make_unique<ml::AnovaStage>(k);
  }
  if (type == "sfs") {
    schema::only(j, {"type", "model", "min_features", "max_features", "inner_k"}, path);
    ml::SfsOptions o;
    o.min_features = schema::get_or<std::size_t>(j, "min_features", o.min_features, path);
    o.max_features = schema::get_or<std::size_t>(j, "max_features", o.max_features, path);
    o.inner_k = schema::get_or<std::size_t>(j, "inner_k", o.inner_k, path);
    o.seed = seed;
    if (o.min_features < 1 || o.min_features > o.max_features)
      throw SchemaError(schema::join(path, "min_features"), "need 1 <= min_features <= max_features");
    if (o.inner_k < 2) throw SchemaError(schema::join(path, "inner_k"), "must be >= 2");
    const auto model = j.contains("model") ? model_from_json(j["model"], schema::join(path, "model"), seed)
                                           : ml::ClassifierPtr(std::make_unique<ml::Lda>());
    return std::make_unique<ml::SfsStage>(*model, o);
  }
  throw SchemaError(schema::join(path, "type"), "unknown stage '" + type + "'");
}

/// `{"label": ..., "stages": [...], "model": {...}}`
inline ml::Pipeline pipeline_from_json(const nlohmann::json& j, const std::string& path, std::uint64_t seed) {
  schema::only(j, {"label", "stages", "model"}, path);
  ml::Pipeline p;
  if (j.contains("stages")) {
    const auto sp = schema::join(path, "stages");
    const auto& arr = schema::array(j["stages"], sp);
    for (std::size_t i = 0; i < arr.size(); ++i) p.add(stage_from_json(arr[i], schema::at(sp, i), mix_seed(seed, 100 + i)));
  }
  if (!j.contains("model")) throw SchemaError(schema::join(path, "model"), "missing required field");
  p.set_model(model_from_json(j["model"], schema::join(path, "model"), mix_seed(seed, 1)));
  p.set_label(schema::get_or<std::string>(j, "label", j["model"].value("type", "model"), path));
  return p;
}

struct CvSpec {
  ml::FoldKind kind = ml::FoldKind::STRATIFIED_K;
  std::size_t k = 5;
  std::size_t inner_k = 3;  // used only when several candidate pipelines compete
  std::size_t repeats = 1;
  bool audit_leakage = true;
};

inline CvSpec cv_spec_from_json(const nlohmann::json& j, const std::string& path) {
  schema::only(j, {"kind", "k", "inner_k", "repeats", "audit_leakage"}, path);
  CvSpec c;
  if (j.contains("kind"))
    c.kind = schema::guarded(schema::join(path, "kind"), [&] { return ml::fold_kind_from_string(j["kind"].get<std::string>()); });
  c.k = schema::get_or<std::size_t>(j, "k", c.k, path);
  c.inner_k = schema::get_or<std::size_t>(j, "inner_k", c.inner_k, path);
  c.repeats = schema::get_or<std::size_t>(j, "repeats", c.repeats, path);
  c.audit_leakage = schema::get_or<bool>(j, "audit_leakage", c.audit_leakage, path);
  if (c.k < 2) throw SchemaError(schema::join(path, "k"), "must be >= 2");
  if (c.inner_k < 2) throw SchemaError(schema::join(path, "inner_k"), "must be >= 2");
  if (c.repeats < 1) throw SchemaError(schema::join(path, "repeats"), "must be >= 1");
  return c;
}

inline nlohmann::json cv_spec_to_json(const CvSpec& c) {
  return {{"kind", ml::to_string(c.kind)}, {"k", c.k}, {"inner_k", c.inner_k}, {"repeats", c.repeats},
          {"audit_leakage", c.audit_leakage}};
}

/// Outcome of repeated (possibly nested) cross-validation of one model definition.
struct CvSummary {
  std::string label;
  std::vector<ml::CvReport> repeats;

  std::vector<double> fold_balanced_accuracy() const {
    std::vector<double> v;
    for (const auto& r : repeats)
      for (double x : r.fold_balanced_accuracy()) v.push_back(x);
    return v;
  }
  std::vector<double> fold_values(const std::function<double(const ml::Metrics&)>& get) const {
    std::vector<double> v;
    for (const auto& r : repeats)
      for (double x : r.fold_values(get)) v.push_back(x);
    return v;
  }
  double mean_balanced_accuracy() const { return ml::CvReport::mean(fold_balanced_accuracy()); }
  double sd_balanced_accuracy() const { return ml::CvReport::stdev(fold_balanced_accuracy()); }
  double mean_n_train() const { return repeats.front().mean_n_train(); }
  double mean_n_test() const { return repeats.front().mean_n_test(); }
  std::size_t leakage_flags() const {
    std::size_t n = 0;
    for (const auto& r : repeats) n += r.leakage.size();
    return n;
  }
};

/// Repeat r uses fold seed mix_seed(seed, r); identical seeds give identical folds for
/// every model compared on the same rows, which the paired tests rely on.
inline CvSummary repeated_cv(const ml::Dataset& ds, std::span<const ml::Pipeline> candidates, const CvSpec& spec,
                             std::uint64_t seed, std::string label = {}) {
  CvSummary s;
  s.label = label.empty() ? candidates.front().label() : std::move(label);
  ml::CvOptions opt;
  opt.audit_leakage = spec.audit_leakage;
  opt.abort_on_leak = false;
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    const auto plan = ml::make_plan(spec.kind, ds, spec.k, mix_seed(seed, r), candidates.size() > 1 ? spec.inner_k : 0);
    s.repeats.push_back(ml::cross_validate(ds, candidates, plan, opt));
  }
  return s;
}

inline ml::TTestResult compare_cv(const CvSummary& a, const CvSummary& b) {
  return ml::corrected_resampled_ttest(a.fold_balanced_accuracy(), b.fold_balanced_accuracy(), a.mean_n_train(),
                                       a.mean_n_test());
}

/// Labelled rows of a tensor slice; incomplete columns are dropped and unlabelled cases skipped.
inline ml::Dataset dataset_from_tensor(const FeatureTensor& t, std::span<const FlavourKey> subset) {
  auto m = slice_concat(t, subset);
  drop_incomplete_columns(m);
  std::vector<Eigen::Index> keep;
  std::vector<int> y;
  std::vector<std::string> g;
  for (std::size_t c = 0; c < t.cases.size(); ++c)
    if (t.labels[c]) {
      keep.push_back(static_cast<Eigen::Index>(c));
      y.push_back(*t.labels[c]);
      g.push_back(t.groups[c]);
    }
  if (keep.size() < 4) throw Error("dataset: fewer than 4 labelled cases");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(keep.size()), m.values.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = m.values.row(keep[i]);
  return ml::Dataset::make(std::move(X), std::move(y), std::move(g), m.columns);
}

inline std::string combination_label(std::span<const FlavourKey> keys) {
  std::string s;
  for (const auto& k : keys) s += (s.empty() ? "" : " + ") + k.str();
  return s;
}

struct SweepEntry {
  std::vector<FlavourKey> flavours;
  CvSummary cv;
};

/// Every flavour subset with min_size..max_size members (singles included when
/// min_size is 1), each cross-validated with the same folds. Sorted by mean balanced
/// accuracy, ties in enumeration order.
inline std::vector<SweepEntry> combination_sweep(const FeatureTensor& t, std::span<const ml::Pipeline> candidates,
                                                 const CvSpec& spec, std::uint64_t seed, std::size_t min_size,
                                                 std::size_t max_size, std::size_t threads) {
  const std::size_t n = t.flavours.size();
  if (min_size < 1 || min_size > max_size) throw Error("sweep: need 1 <= min_size <= max_size");
  std::vector<std::vector<std::size_t>> subsets;
  if (min_size <= 1)
    for (std::size_t k = 0; k < n; ++k) subsets.push_back({k});
  for (auto& c : enumerate_flavour_combinations(n, std::max<std::size_t>(2, min_size)))
    if (c.size() <= max_size) subsets.push_back(std::move(c));
  std::vector<SweepEntry> out(subsets.size());
  parallel_for(subsets.size(), threads, [&](std::size_t i) {
    for (auto k : subsets[i]) out[i].flavours.push_back(t.flavours[k]);
    const auto ds = dataset_from_tensor(t, out[i].flavours);
    out[i].cv = repeated_cv(ds, candidates, spec, seed, combination_label(out[i].flavours));
  });
  std::stable_sort(out.begin(), out.end(), [](const SweepEntry& a, const SweepEntry& b) {
    return a.cv.mean_balanced_accuracy() > b.cv.mean_balanced_accuracy();
  });
  return out;
}

/// Best entry with exactly `size` flavours, or nullptr.
inline const SweepEntry* best_of_size(const std::vector<SweepEntry>& sweep, std::size_t size) {
  for (const auto& e : sweep)
    if (e.flavours.size() == size) return &e;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string o = "\"";
  for (char c : s) o += c == '"' ? std::string("\"\"") : std::string(1, c);
  return o + "\"";
}

inline std::string maybe_text(const MaybeValue& v) { return v ? format_double17(*v) : ""; }

inline nlohmann::json maybe_json(const MaybeValue& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json metrics_json(const ml::Metrics& m) {
  return {{"accuracy", m.accuracy},
          {"balanced_accuracy", m.balanced_accuracy},
          {"f1", m.f1},
          {"roc_auc", maybe_json(m.roc_auc)},
          {"average_precision", maybe_json(m.average_precision)}};
}

/// MetricsReport entry: fold metrics, summary, and the first repeat's out-of-fold
/// predictions (what the curve plots and McNemar tests consume).
inline nlohmann::json cv_summary_json(const CvSummary& s, std::span<const std::string> case_ids) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t r = 0; r < s.repeats.size(); ++r)
    for (std::size_t f = 0; f < s.repeats[r].folds.size(); ++f) {
      const auto& fr = s.repeats[r].folds[f];
      folds.push_back({{"repeat", r},
                       {"fold", f},
                       {"n_train", fr.n_train},
                       {"n_test", fr.n_test},
                       {"chosen", fr.chosen},
                       {"n_features", fr.features.size()},
                       {"metrics", metrics_json(fr.metrics)}});
    }
  const auto& first = s.repeats.front();
  nlohmann::json oof = nlohmann::json::array();
  for (std::size_t i = 0; i < first.y_true.size(); ++i)
    oof.push_back({{"case_id", i < case_ids.size() ? case_ids[i] : std::to_string(i)},
                   {"label", first.y_true[i]},
                   {"pred", first.oof_pred[i]},
                   {"score", first.oof_score[i]}});
  return {{"label", s.label},
          {"mean_balanced_accuracy", s.mean_balanced_accuracy()},
          {"sd_balanced_accuracy", s.sd_balanced_accuracy()},
          {"mean_roc_auc",
           ml::CvReport::mean(s.fold_values([](const ml::Metrics& m) { return m.roc_auc.value_or(0.5); }))},
          {"mean_f1", ml::CvReport::mean(s.fold_values([](const ml::Metrics& m) { return m.f1; }))},
          {"pooled", metrics_json(first.pooled)},
          {"leakage_flags", s.leakage_flags()},
          {"folds", folds},
          {"oof", oof}};
}

/// Ranking table, best model first.
inline std::string sweep_csv(const std::vector<SweepEntry>& sweep, std::size_t top_n = 0) {
  std::string out = "rank,n_flavours,flavours,mean_balanced_accuracy,sd_balanced_accuracy,mean_roc_auc,mean_f1\n";
  const std::size_t n = top_n ? std::min(top_n, sweep.size()) : sweep.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = sweep[i];
    out += std::to_string(i + 1) + "," + std::to_string(e.flavours.size()) + "," +
           csv_field(combination_label(e.flavours)) + "," + format_double17(e.cv.mean_balanced_accuracy()) + "," +
           format_double17(e.cv.sd_balanced_accuracy()) + "," +
           format_double17(ml::CvReport::mean(e.cv.fold_values([](const ml::Metrics& m) { return m.roc_auc.value_or(0.5); }))) +
           "," + format_double17(ml::CvReport::mean(e.cv.fold_values([](const ml::Metrics& m) { return m.f1; }))) + "\n";
  }
  return out;
}

/// Out-of-fold predictions of one model, as read back by the statistics step.
struct PredictionSet {
  std::string label;
  std::vector<std::string> case_ids;
  std::vector<int> y, pred;
  std::vector<double> score;
  std::vector<double> fold_balanced_accuracy;
  double n_train = 0.0, n_test = 0.0;
};

inline PredictionSet prediction_set(const nlohmann::json& model, const std::string& path) {
  PredictionSet p;
  p.label = schema::get<std::string>(model, "label", path);
  const auto op = schema::join(path, "oof");
  if (!model.contains("oof")) throw SchemaError(op, "missing required field");
  const auto& oof = schema::array(model["oof"], op);
  for (std::size_t i = 0; i < oof.size(); ++i) {
    const auto ip = schema::at(op, i);
    p.case_ids.push_back(schema::get<std::string>(oof[i], "case_id", ip));
    p.y.push_back(schema::get<int>(oof[i], "label", ip));
    p.pred.push_back(schema::get<int>(oof[i], "pred", ip));
    p.score.push_back(schema::get<double>(oof[i], "score", ip));
  }
  const auto fp = schema::join(path, "folds");
  if (!model.contains("folds")) throw SchemaError(fp, "missing required field");
  const auto& folds = schema::array(model["folds"], fp);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto ip = schema::at(fp, i);
    p.n_train += schema::get<double>(folds[i], "n_train", ip);
    p.n_test += schema::get<double>(folds[i], "n_test", ip);
    const auto& m = folds[i].contains("metrics") ? folds[i]["metrics"] : nlohmann::json::object();
    p.fold_balanced_accuracy.push_back(schema::get<double>(m, "balanced_accuracy", schema::join(ip, "metrics")));
  }
  if (!folds.empty()) {
    p.n_train /= static_cast<double>(folds.size());
    p.n_test /= static_cast<double>(folds.size());
  }
  return p;
}

/// Pairwise significance matrix: McNemar p above the diagonal, corrected
/// resampled t-test p below it, 1 on the diagonal.
inline std::string significance_matrix_csv(std::span<const PredictionSet> models) {
  const std::size_t n = models.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      if (models[a].case_ids != models[b].case_ids || models[a].y != models[b].y)
        throw Error("significance: '" + models[a].label + "' and '" + models[b].label + "' cover different cases");
      m[a][b] = ml::mcnemar(models[a].pred, models[b].pred, models[a].y).p;
      if (models[a].fold_balanced_accuracy.size() == models[b].fold_balanced_accuracy.size())
        m[b][a] = ml::corrected_resampled_ttest(models[a].fold_balanced_accuracy, models[b].fold_balanced_accuracy,
                                                models[a].n_train, models[a].n_test)
                      .p;
      else
        m[b][a] = kNaN;
    }
  std::string out = "model";
  for (const auto& x : models) out += "," + csv_field(x.label);
  out += "\n";
  for (std::size_t a = 0; a < n; ++a) {
    out += csv_field(models[a].label);
    for (std::size_t b = 0; b < n; ++b) out += "," + (std::isnan(m[a][b]) ? std::string() : format_double17(m[a][b]));
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// TR-Net runs

inline trnet::TrNetConfig trnet_config_from_json(const nlohmann::json& j, const std::string& path) {
  schema::only(j, {"legs", "body", "dropout", "learning_rate", "epochs", "batch_size", "seed"}, path);
  return schema::guarded(path, [&] {
    try {
      return trnet::config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw Error(e.what());
    }
  });
}

inline trnet::SearchSpace search_space_from_json(const nlohmann::json& j, const std::string& path) {
  schema::only(j, {"leg_sizes", "body_sizes", "dropout", "learning_rate", "epochs", "batch_size", "budget"}, path);
  trnet::SearchSpace s;
  using Sizes = std::vector<std::vector<std::size_t>>;
  s.leg_sizes = schema::get_or<Sizes>(j, "leg_sizes", s.leg_sizes, path);
  s.body_sizes = schema::get_or<Sizes>(j, "body_sizes", s.body_sizes, path);
  s.dropout = schema::get_or<std::vector<double>>(j, "dropout", s.dropout, path);
  s.learning_rate = schema::get_or<std::vector<double>>(j, "learning_rate", s.learning_rate, path);
  s.epochs = schema::get_or<std::vector<std::size_t>>(j, "epochs", s.epochs, path);
  s.batch_size = schema::get_or<std::vector<std::size_t>>(j, "batch_size", s.batch_size, path);
  if (s.size() == 0) throw SchemaError(path, "search space is empty");
  for (std::size_t i = 0; i < s.body_sizes.size(); ++i)
    if (s.body_sizes[i].empty() || s.body_sizes[i].back() != 1)
      throw SchemaError(schema::at(schema::join(path, "body_sizes"), i), "final body layer must have width 1");
  return s;
}

/// One feature block per flavour (labelled cases only, incomplete columns dropped).
struct NetInputs {
  trnet::Blocks blocks;
  std::vector<std::string> leg_names;
  std::vector<int> y;
  std::vector<std::string> groups, case_ids;
};

inline NetInputs net_inputs(const FeatureTensor& t, std::span<const FlavourKey> flavours) {
  NetInputs in;
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < t.cases.size(); ++c)
    if (t.labels[c]) {
      keep.push_back(static_cast<Eigen::Index>(c));
      in.y.push_back(*t.labels[c]);
      in.groups.push_back(t.groups[c]);
      in.case_ids.push_back(t.cases[c]);
    }
  if (keep.size() < 4) throw Error("trnet: fewer than 4 labelled cases");
  for (const auto& key : flavours) {
    const std::vector<FlavourKey> one{key};
    auto m = slice_concat(t, one);
    drop_incomplete_columns(m);
    if (m.values.cols() == 0) throw Error("trnet: flavour " + key.str() + " has no complete feature column");
    Eigen::MatrixXd b(static_cast<Eigen::Index>(keep.size()), m.values.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) b.row(static_cast<Eigen::Index>(i)) = m.values.row(keep[i]);
    in.blocks.push_back(std::move(b));
    in.leg_names.push_back(key.str());
  }
  return in;
}

/// Outer CV of a fixed TR-Net config, or of a random search run on inner folds when
/// `space` is given. Leg names of a fixed config are replaced by the flavour keys.
inline CvSummary trnet_cv(const NetInputs& in, const trnet::TrNetConfig& fixed, const trnet::SearchSpace* space,
                          std::size_t budget, const CvSpec& spec, std::uint64_t seed, std::string label) {
  ml::Dataset index_ds = ml::Dataset::make(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in.y.size()), 1), in.y, in.groups);
  CvSummary s;
  s.label = std::move(label);
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    const auto plan = ml::make_plan(spec.kind, index_ds, spec.k, mix_seed(seed, r));
    ml::CvReport rep;
    rep.y_true = in.y;
    rep.oof_pred.assign(in.y.size(), 0);
    rep.oof_score.assign(in.y.size(), 0.0);
    for (std::size_t f = 0; f < plan.k; ++f) {
      const auto tr = plan.train_rows(f), te = plan.test_rows(f);
      std::vector<int> ytr, yte;
      for (auto i : tr) ytr.push_back(in.y[i]);
      for (auto i : te) yte.push_back(in.y[i]);
      const auto xtr = trnet::take_rows(in.blocks, tr), xte = trnet::take_rows(in.blocks, te);
      trnet::TrNetConfig cfg = fixed;
      if (space) {
        std::vector<std::string> gtr;
        for (auto i : tr) gtr.push_back(in.groups[i]);
        const auto inner_ds = ml::Dataset::make(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tr.size()), 1), ytr, gtr);
        const auto inner = ml::make_plan(spec.kind, inner_ds, spec.inner_k, mix_seed(seed, 1000 + r * plan.k + f));
        cfg = trnet::random_search(*space, in.leg_names, xtr, ytr, inner, budget, mix_seed(seed, 2000 + r * plan.k + f)).best;
      } else {
        cfg.legs.resize(in.leg_names.size(), cfg.legs.empty() ? trnet::LegConfig{} : cfg.legs.back());
        for (std::size_t l = 0; l < in.leg_names.size(); ++l) cfg.legs[l].name = in.leg_names[l];
      }
      const auto p = trnet::fit_predict(cfg, xtr, ytr, xte);
      std::vector<int> pred;
      for (std::size_t i = 0; i < te.size(); ++i) {
        pred.push_back(p[i] > 0.5 ? 1 : 0);
        rep.oof_pred[te[i]] = pred.back();
        rep.oof_score[te[i]] = p[i];
      }
      ml::FoldResult fr;
      fr.metrics = ml::compute_metrics(yte, pred, p);
      fr.n_train = tr.size();
      fr.n_test = te.size();
      fr.chosen = config_to_json(cfg).dump();
      rep.folds.push_back(std::move(fr));
    }
    rep.pooled = ml::compute_metrics(rep.y_true, rep.oof_pred, rep.oof_score);
    s.repeats.push_back(std::move(rep));
  }
  return s;
}

}  // namespace tensorrad

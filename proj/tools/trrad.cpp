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

// trrad: batch front end. Each subcommand reads one JSON config, writes its
// artifacts under --out and records a run.json next to them.
//
// Exit codes: 0 success (warnings are listed, not fatal), 1 runtime failure,
// 2 invalid command line or config (message names the offending field).

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "tensorrad/phantom.hpp"
#include "tensorrad/plot.hpp"
#include "tensorrad/workflow.hpp"

using namespace tensorrad;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunContext {
  std::string command;
  fs::path config_path, out;
  json config;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::vector<std::string> outputs, warnings;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : config_path.parent_path() / path;
  }

  void write(const std::string& rel, const std::string& text) {
    write_text_file(out / rel, text);
    outputs.push_back(rel);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }
};

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_run_record(RunContext& ctx) {
  std::sort(ctx.outputs.begin(), ctx.outputs.end());
  json j;
  j["command"] = ctx.command;
  j["config_hash"] = hex64(name_hash(ctx.config.dump()));
  j["config"] = ctx.config;
  j["seed"] = ctx.seed;
  j["versions"] = {{"trrad", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION}};
  j["outputs"] = ctx.outputs;
  j["warnings"] = ctx.warnings;
  write_text_file(ctx.out / "run.json", j.dump(2) + "\n");
}

/// Rejects keys that a default-constructed object of the same schema would not have.
void only_like(const json& j, const json& reference, const std::string& path) {
  schema::object(j, path);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!reference.contains(it.key())) throw SchemaError(schema::join(path, it.key()), "unknown field");
}

/// `j[key]` as an array; `path` names the array itself.
const json& required_array(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(path, "missing required field");
  return schema::array(j[key], path);
}

json read_json_file(const fs::path& p, const std::string& field) {
  if (!fs::exists(p)) throw SchemaError(field, "file not found: " + p.string());
  try {
    return json::parse(read_text_file(p));
  } catch (const json::parse_error& e) {
    throw SchemaError(field, "invalid JSON in " + p.string() + ": " + e.what());
  }
}

fs::path existing(const RunContext& ctx, const std::string& key) {
  const auto p = ctx.resolve(schema::get<std::string>(ctx.config, key, ""));
  if (!fs::exists(p)) throw SchemaError(key, "file not found: " + p.string());
  return p;
}

FeatureTensor load_tensor(const RunContext& ctx, const std::string& key) {
  const auto j = read_json_file(existing(ctx, key), key);
  return schema::guarded(key, [&] {
    try {
      return tensor_from_json(j);
    } catch (const json::exception& e) {
      throw Error(e.what());
    }
  });
}

/// Optional "features" selector and "flavours" subset applied to a loaded tensor.
FeatureTensor narrow_tensor(const RunContext& ctx, FeatureTensor t) {
  if (ctx.config.contains("features")) t = select_features(t, feature_selection_from_json(ctx.config["features"], "features"));
  if (ctx.config.contains("flavours")) {
    auto keys = flavour_grid_from_json(json{{"flavours", ctx.config["flavours"]}});
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (std::find(t.flavours.begin(), t.flavours.end(), keys[i]) == t.flavours.end())
        throw SchemaError(schema::at("flavours", i), "tensor has no flavour " + keys[i].str());
    t = select_flavours(t, keys);
  }
  return t;
}

void warn_all(RunContext& ctx, const std::vector<std::string>& w) {
  for (const auto& s : w) {
    std::cerr << "warning: " << s << "\n";
    ctx.warnings.push_back(s);
  }
}

// ---------------------------------------------------------------------------

void run_phantom(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"kind", "spec", "pet_ct", "seed"}, "");
  const auto kind = schema::get_or<std::string>(c, "kind", "classification", "");
  PhantomSpec spec;
  if (c.contains("spec")) {
    only_like(c["spec"], phantom_spec_to_json(PhantomSpec{}), "spec");
    spec = schema::guarded("spec", [&] {
      try {
        return phantom_spec_from_json(c["spec"]);
      } catch (const json::exception& e) {
        throw Error(e.what());
      }
    });
  }
  spec.seed = ctx.seed;
  schema::guarded("spec", [&] { spec.validate(); return 0; });
  if (kind == "classification") {
    write_cohort(gen_classification_cohort(spec), ctx.out / "cases");
    ctx.outputs.push_back("cases/manifest.json");
  } else if (kind == "test_retest") {
    const auto [test, retest] = gen_test_retest(spec);
    write_cohort(test, ctx.out / "test");
    write_cohort(retest, ctx.out / "retest");
    ctx.outputs.push_back("test/manifest.json");
    ctx.outputs.push_back("retest/manifest.json");
  } else if (kind == "pet_ct") {
    PetCtParams p;
    if (c.contains("pet_ct")) {
      only_like(c["pet_ct"], pet_ct_params_to_json(PetCtParams{}), "pet_ct");
      p = pet_ct_params_from_json(c["pet_ct"]);
    }
    write_cohort(gen_pet_ct_cohort(spec, p), ctx.out / "cases");
    ctx.outputs.push_back("cases/manifest.json");
  } else {
    throw SchemaError("kind", "expected classification, test_retest or pet_ct");
  }
  ctx.write_json("phantom_spec.json", phantom_spec_to_json(spec));
}

void run_extract(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"manifest", "flavours", "extraction", "format", "seed"}, "");
  const auto manifest = existing(ctx, "manifest");
  const auto flavours = flavour_grid_from_json(json{{"flavours", c.contains("flavours") ? c["flavours"] : json()}});
  const auto cfg = c.contains("extraction") ? extract_config_from_json(c["extraction"], "extraction") : ExtractConfig{};
  const auto format = schema::get_or<std::string>(c, "format", "csv", "");
  if (format != "csv" && format != "json") throw SchemaError("format", "expected csv or json");
  const auto cases = schema::guarded("manifest", [&] { return read_cohort(manifest); });
  std::vector<std::string> warnings;
  const auto tables = extract_tables(cases, flavours, cfg, ctx.threads, &warnings);
  json index = json::array();
  for (std::size_t k = 0; k < tables.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "tables/flavour_%03zu.%s", k, format.c_str());
    ctx.write(name, format == "csv" ? feature_table_csv(tables[k]) : feature_table_json(tables[k]).dump(2) + "\n");
    index.push_back({{"flavour", flavours[k].str()}, {"file", std::string(name).substr(7)}});
  }
  ctx.write_json("tables/index.json", {{"manifest", c["manifest"]}, {"tables", index}});
  warn_all(ctx, warnings);
}

void run_tensor(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"tables", "manifest", "seed"}, "");
  const auto index_path = existing(ctx, "tables");
  const auto index = read_json_file(index_path, "tables");
  const auto& list = required_array(index, "tables", "tables.tables");
  std::vector<FeatureTable> tables;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto p = index_path.parent_path() / schema::get<std::string>(list[i], "file", schema::at("tables.tables", i));
    tables.push_back(schema::guarded(schema::at("tables.tables", i), [&] { return read_feature_table(p); }));
  }
  const auto cases = schema::guarded("manifest", [&] { return read_cohort(existing(ctx, "manifest")); });
  const auto t = schema::guarded("tables", [&] { return assemble(tables, case_meta(cases)); });
  ctx.write_json("tensor.json", tensor_to_json(t));
}

void run_icc(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"test", "retest", "features", "flavours", "seed"}, "");
  const auto test = narrow_tensor(ctx, load_tensor(ctx, "test"));
  const auto retest = narrow_tensor(ctx, load_tensor(ctx, "retest"));
  const auto rep = schema::guarded("retest", [&] { return tr_repeatability_report(test, retest); });
  ctx.write("repeatability.csv", repeatability_csv(rep));
  ctx.write("band_counts.csv", band_counts_csv(rep));
}

std::vector<ml::Pipeline> candidates_from_json(const json& c, std::uint64_t seed) {
  const auto& arr = required_array(c, "pipelines", "pipelines");
  if (arr.empty()) throw SchemaError("pipelines", "at least one pipeline is required");
  std::vector<ml::Pipeline> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(pipeline_from_json(arr[i], schema::at("pipelines", i), mix_seed(seed, i)));
  return out;
}

json report_json(const std::vector<json>& models, const CvSpec& cv) {
  return {{"cv", cv_spec_to_json(cv)}, {"models", models}};
}

void run_trainml(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"tensor", "features", "flavours", "pipelines", "cv", "sweep", "seed"}, "");
  const auto t = narrow_tensor(ctx, load_tensor(ctx, "tensor"));
  const auto cands = candidates_from_json(c, ctx.seed);
  const auto cv = c.contains("cv") ? cv_spec_from_json(c["cv"], "cv") : CvSpec{};
  std::vector<json> models;
  std::size_t flags = 0;
  if (c.contains("sweep")) {
    const auto& s = c["sweep"];
    schema::only(s, {"min_size", "max_size", "top_n"}, "sweep");
    const auto lo = schema::get_or<std::size_t>(s, "min_size", 1, "sweep");
    const auto hi = schema::get_or<std::size_t>(s, "max_size", t.flavours.size(), "sweep");
    const auto top = schema::get_or<std::size_t>(s, "top_n", 10, "sweep");
    if (lo < 1 || hi < lo) throw SchemaError("sweep", "need 1 <= min_size <= max_size");
    const auto sweep = combination_sweep(t, cands, cv, ctx.seed, lo, hi, ctx.threads);
    ctx.write("sweep.csv", sweep_csv(sweep, top));
    std::vector<std::string> case_ids;
    for (std::size_t i = 0; i < t.cases.size(); ++i)
      if (t.labels[i]) case_ids.push_back(t.cases[i]);
    for (std::size_t i = 0; i < std::min(top, sweep.size()); ++i) {
      models.push_back(cv_summary_json(sweep[i].cv, case_ids));
      flags += sweep[i].cv.leakage_flags();
    }
  } else {
    const auto ds = dataset_from_tensor(t, t.flavours);
    std::vector<std::string> case_ids;
    for (std::size_t i = 0; i < t.cases.size(); ++i)
      if (t.labels[i]) case_ids.push_back(t.cases[i]);
    const auto label = cands.size() == 1 ? cands.front().label() : "nested";
    const auto s = repeated_cv(ds, cands, cv, ctx.seed, label);
    flags += s.leakage_flags();
    models.push_back(cv_summary_json(s, case_ids));
  }
  if (flags) ctx.warnings.push_back("leakage audit raised " + std::to_string(flags) + " flag(s)");
  ctx.write_json("metrics.json", report_json(models, cv));
}

void run_trainnet(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"tensor", "features", "flavours", "net", "search", "cv", "seed"}, "");
  if (c.contains("net") == c.contains("search")) throw SchemaError("net", "give exactly one of net or search");
  const auto t = narrow_tensor(ctx, load_tensor(ctx, "tensor"));
  const auto cv = c.contains("cv") ? cv_spec_from_json(c["cv"], "cv") : CvSpec{};
  const auto in = schema::guarded("tensor", [&] { return net_inputs(t, t.flavours); });
  trnet::TrNetConfig fixed;
  std::optional<trnet::SearchSpace> space;
  std::size_t budget = 0;
  if (c.contains("net")) {
    json nj = c["net"];
    if (!nj.contains("legs")) {
      nj["legs"] = json::array();
      for (const auto& name : in.leg_names) nj["legs"].push_back({{"name", name}, {"sizes", json::array({8})}});
    }
    if (!nj.contains("seed")) nj["seed"] = ctx.seed;
    fixed = trnet_config_from_json(nj, "net");
  } else {
    space = search_space_from_json(c["search"], "search");
    budget = schema::get_or<std::size_t>(c["search"], "budget", 8, "search");
    if (budget == 0) throw SchemaError("search.budget", "must be >= 1");
  }
  const auto s = trnet_cv(in, fixed, space ? &*space : nullptr, budget, cv, ctx.seed, "trnet");
  ctx.write_json("metrics.json", report_json({cv_summary_json(s, in.case_ids)}, cv));

  // final model on every labelled case
  if (space) {
    ml::Dataset idx = ml::Dataset::make(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in.y.size()), 1), in.y, in.groups);
    const auto plan = ml::make_plan(cv.kind, idx, cv.inner_k, mix_seed(ctx.seed, 5000));
    fixed = trnet::random_search(*space, in.leg_names, in.blocks, in.y, plan, budget, mix_seed(ctx.seed, 5001)).best;
  } else {
    fixed.legs.resize(in.leg_names.size(), fixed.legs.back());
    for (std::size_t l = 0; l < in.leg_names.size(); ++l) fixed.legs[l].name = in.leg_names[l];
  }
  const auto scaler = trnet::BlockScaler::fit(in.blocks);
  const auto net = trnet::train(fixed, scaler.apply(in.blocks), in.y);
  ctx.write_json("model.json", {{"config", trnet::config_to_json(fixed)}, {"network", net.to_json()}});
}

void run_stats(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"predictions", "models", "seed"}, "");
  const auto& files = required_array(c, "predictions", "predictions");
  std::vector<PredictionSet> sets;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto field = schema::at("predictions", i);
    if (!files[i].is_string()) throw SchemaError(field, "expected a file path");
    const auto doc = read_json_file(ctx.resolve(files[i].get<std::string>()), field);
    const auto& models = required_array(doc, "models", field + ".models");
    for (std::size_t m = 0; m < models.size(); ++m) sets.push_back(prediction_set(models[m], schema::at(field + ".models", m)));
  }
  if (c.contains("models")) {
    const auto want = schema::get<std::vector<std::string>>(c, "models", "");
    std::vector<PredictionSet> kept;
    for (std::size_t i = 0; i < want.size(); ++i) {
      auto it = std::find_if(sets.begin(), sets.end(), [&](const PredictionSet& p) { return p.label == want[i]; });
      if (it == sets.end()) throw SchemaError(schema::at("models", i), "no model labelled '" + want[i] + "'");
      kept.push_back(*it);
    }
    sets = std::move(kept);
  }
  if (sets.size() < 2) throw SchemaError("predictions", "need at least two models to compare");
  ctx.write("significance.csv", schema::guarded("predictions", [&] { return significance_matrix_csv(sets); }));
  json pairs = json::array();
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b) {
      const auto mc = ml::mcnemar(sets[a].pred, sets[b].pred, sets[a].y);
      json e{{"a", sets[a].label},
             {"b", sets[b].label},
             {"mcnemar", {{"b", mc.b}, {"c", mc.c}, {"statistic", mc.statistic}, {"p", mc.p}, {"exact", mc.exact}}}};
      if (sets[a].fold_balanced_accuracy.size() == sets[b].fold_balanced_accuracy.size()) {
        const auto ct = ml::corrected_resampled_ttest(sets[a].fold_balanced_accuracy, sets[b].fold_balanced_accuracy,
                                                      sets[a].n_train, sets[a].n_test);
        const auto pt = ml::paired_ttest(sets[a].fold_balanced_accuracy, sets[b].fold_balanced_accuracy);
        e["corrected_t"] = {{"t", ct.t}, {"p", ct.p}};
        e["paired_t"] = {{"t", pt.t}, {"p", pt.p}};
      }
      pairs.push_back(std::move(e));
    }
  ctx.write_json("stats.json", {{"pairs", pairs}});
}

void run_plot(RunContext& ctx) {
  const auto& c = ctx.config;
  schema::only(c, {"metrics", "seed"}, "");
  const auto doc = read_json_file(existing(ctx, "metrics"), "metrics");
  const auto& models = required_array(doc, "models", "metrics.models");
  std::vector<CurveSeries> roc, pr;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto p = prediction_set(models[m], schema::at("metrics.models", m));
    roc.push_back({p.label, ml::roc_curve(p.y, p.score)});
    pr.push_back({p.label, ml::pr_curve(p.y, p.score)});
  }
  ctx.write("roc.svg", roc_svg(roc));
  ctx.write("pr.svg", pr_svg(pr));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor radiomics batch tool"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
  const std::vector<std::pair<std::string, void (*)(RunContext&)>> commands{
      {"phantom", run_phantom}, {"extract", run_extract},   {"tensor", run_tensor}, {"icc", run_icc},
      {"trainml", run_trainml}, {"trainnet", run_trainnet}, {"stats", run_stats},   {"plot", run_plot}};
  const std::map<std::string, std::string> help{
      {"phantom", "generate a seeded phantom cohort"},
      {"extract", "compute one feature table per flavour"},
      {"tensor", "stack feature tables into a tensor"},
      {"icc", "test-retest repeatability report"},
      {"trainml", "cross-validate pipelines, optionally over flavour combinations"},
      {"trainnet", "cross-validate and fit a TR-Net"},
      {"stats", "McNemar and corrected t-test significance matrix"},
      {"plot", "ROC and PR curves as SVG"}};
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "overrides the config seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunContext ctx;
  for (const auto& [name, fn] : commands)
    if (app.got_subcommand(name)) ctx.command = name;
  ctx.config_path = fs::absolute(config_path);
  ctx.out = out_dir;
  ctx.threads = threads;
  try {
    try {
      ctx.config = json::parse(read_text_file(ctx.config_path));
    } catch (const json::parse_error& e) {
      throw SchemaError("$", std::string("invalid JSON: ") + e.what());
    }
    schema::object(ctx.config, "");
    ctx.seed = seed ? *seed : schema::get_or<std::uint64_t>(ctx.config, "seed", 1, "");
    ctx.config["seed"] = ctx.seed;
    fs::create_directories(ctx.out);
    for (const auto& [name, fn] : commands)
      if (name == ctx.command) fn(ctx);
    write_run_record(ctx);
  } catch (const SchemaError& e) {
    std::cerr << "trrad " << ctx.command << ": config error at " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "trrad " << ctx.command << ": " << e.what() << "\n";
    return 1;
  }
  if (!ctx.warnings.empty()) std::cerr << ctx.warnings.size() << " warning(s); see run.json\n";
  return 0;
}

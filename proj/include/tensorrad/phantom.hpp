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

// Synthetic lesion cohorts: elliptical lesions filled with a texture made of two
// smoothed-noise components (coarse and fine spatial scale) plus white noise.

#include <filesystem>
#include <random>

#include "json.hpp"
#include "tensorrad/io.hpp"
#include "tensorrad/perturb.hpp"
#include "tensorrad/random.hpp"

namespace tensorrad {

/// Texture of one case group: base intensity and the amplitudes of the coarse and fine components.
struct TextureParams {
  double base = 10.0;
  double coarse = 1.0;
  double fine = 0.2;
};

/// Negatives use `negative`; positives are split evenly between two subtypes, one
/// raising the coarse amplitude and one raising the fine amplitude, so the label
/// signal lives at two spatial and intensity scales.
struct PhantomSpec {
  std::size_t n_cases = 120;
  Dims dims{40, 40, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  double radius_min_mm = 11.0;
  double radius_max_mm = 15.0;
  double coarse_sigma_mm = 3.0;
  double fine_sigma_mm = 0.6;
  TextureParams negative{10.0, 1.0, 0.2};
  TextureParams positive_coarse{10.0, 2.0, 0.2};
  TextureParams positive_fine{10.0, 1.0, 0.6};
  double amplitude_jitter = 0.15;  // relative per-case spread of each amplitude
  double noise_sigma = 0.05;       // white noise, drawn per session
  double background = 0.0;
  bool texture_outside = false;  // continue the lesion texture around `background` beyond the mask
  double positive_fraction = 0.5;
  std::size_t lesions_per_patient = 1;
  Unit unit = Unit::SUV;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_cases < 2) throw Error("phantom: need at least 2 cases");
    const bool is2d = dims.z == 1;
    if (is2d ? (dims.x < 32 || dims.y < 32) : (dims.x < 16 || dims.y < 16 || dims.z < 16))
      throw Error("phantom: dims must be at least 32x32 (2D) or 16^3 (3D)");
    if (!(radius_min_mm > 0.0 && radius_min_mm <= radius_max_mm)) throw Error("phantom: invalid radius range");
    const double extent = std::min(dims.x * spacing.x, dims.y * spacing.y);
    if (radius_max_mm * 2.0 + 2.0 * spacing.x > extent) throw Error("phantom: lesion does not fit in the field of view");
    if (!is2d && radius_max_mm * 2.0 + 2.0 * spacing.z > dims.z * spacing.z)
      throw Error("phantom: lesion does not fit in the field of view");
    if (!(coarse_sigma_mm > 0.0 && fine_sigma_mm > 0.0)) throw Error("phantom: texture scales must be > 0");
    if (!(noise_sigma >= 0.0) || !(amplitude_jitter >= 0.0)) throw Error("phantom: noise levels must be >= 0");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) throw Error("phantom: positive fraction must be in (0,1)");
    if (lesions_per_patient == 0) throw Error("phantom: lesions_per_patient must be >= 1");
  }
};

inline nlohmann::json phantom_spec_to_json(const PhantomSpec& s) {
  auto tex = [](const TextureParams& t) { return nlohmann::json{{"base", t.base}, {"coarse", t.coarse}, {"fine", t.fine}}; };
  return {{"n_cases", s.n_cases},
          {"dims", {s.dims.x, s.dims.y, s.dims.z}},
          {"spacing", {s.spacing.x, s.spacing.y, s.spacing.z}},
          {"radius_min_mm", s.radius_min_mm},
          {"radius_max_mm", s.radius_max_mm},
          {"coarse_sigma_mm", s.coarse_sigma_mm},
          {"fine_sigma_mm", s.fine_sigma_mm},
          {"negative", tex(s.negative)},
          {"positive_coarse", tex(s.positive_coarse)},
          {"positive_fine", tex(s.positive_fine)},
          {"amplitude_jitter", s.amplitude_jitter},
          {"noise_sigma", s.noise_sigma},
          {"background", s.background},
          {"texture_outside", s.texture_outside},
          {"positive_fraction", s.positive_fraction},
          {"lesions_per_patient", s.lesions_per_patient},
          {"unit", to_string(s.unit)},
          {"seed", s.seed}};
}

/// Missing keys keep their defaults.
inline PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  auto tex = [](const nlohmann::json& t, TextureParams d) {
    return TextureParams{t.value("base", d.base), t.value("coarse", d.coarse), t.value("fine", d.fine)};
  };
  s.n_cases = j.value("n_cases", s.n_cases);
  if (j.contains("dims")) {
    const auto d = j.at("dims").get<std::vector<std::size_t>>();
    if (d.size() != 3) throw Error("phantom.dims: expected 3 entries");
    s.dims = {d[0], d[1], d[2]};
  }
  if (j.contains("spacing")) {
    const auto d = j.at("spacing").get<std::vector<double>>();
    if (d.size() != 3) throw Error("phantom.spacing: expected 3 entries");
    s.spacing = {d[0], d[1], d[2]};
  }
  s.radius_min_mm = j.value("radius_min_mm", s.radius_min_mm);
  s.radius_max_mm = j.value("radius_max_mm", s.radius_max_mm);
  s.coarse_sigma_mm = j.value("coarse_sigma_mm", s.coarse_sigma_mm);
  s.fine_sigma_mm = j.value("fine_sigma_mm", s.fine_sigma_mm);
  if (j.contains("negative")) s.negative = tex(j.at("negative"), s.negative);
  if (j.contains("positive_coarse")) s.positive_coarse = tex(j.at("positive_coarse"), s.positive_coarse);
  if (j.contains("positive_fine")) s.positive_fine = tex(j.at("positive_fine"), s.positive_fine);
  s.amplitude_jitter = j.value("amplitude_jitter", s.amplitude_jitter);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.background = j.value("background", s.background);
  s.texture_outside = j.value("texture_outside", s.texture_outside);
  s.positive_fraction = j.value("positive_fraction", s.positive_fraction);
  s.lesions_per_patient = j.value("lesions_per_patient", s.lesions_per_patient);
  if (j.contains("unit")) s.unit = unit_from_string(j.at("unit").get<std::string>());
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

/// Noise-free description of one lesion; rendering adds the session noise.
struct LesionModel {
  std::string case_id, patient_id;
  int label = 0;
  int subtype = 0;  // 0 negative, 1 coarse-raised positive, 2 fine-raised positive
  RoiMask mask;
  std::vector<double> coarse, fine;  // unit-variance texture fields over the grid
  TextureParams texture;             // per-case amplitudes after jitter
};

namespace detail {

inline double jittered(double amp, double rel, std::mt19937_64& rng) {
  return amp * std::max(0.0, 1.0 + rel * normal01(rng));
}

/// Random ellipse (2D) or ellipsoid (3D) near the grid centre.
inline RoiMask lesion_mask(const PhantomSpec& s, std::mt19937_64& rng) {
  const Dims& d = s.dims;
  const bool is2d = d.is_2d();
  auto radius = [&] { return s.radius_min_mm + (s.radius_max_mm - s.radius_min_mm) * uniform01(rng); };
  const double rx = radius(), ry = radius(), rz = is2d ? 1.0 : radius();
  const double angle = std::numbers::pi * uniform01(rng);
  const double cx = 0.5 * (d.x - 1) * s.spacing.x + (uniform01(rng) - 0.5) * 2.0 * s.spacing.x;
  const double cy = 0.5 * (d.y - 1) * s.spacing.y + (uniform01(rng) - 0.5) * 2.0 * s.spacing.y;
  const double cz = 0.5 * (d.z - 1) * s.spacing.z;
  const double ca = std::cos(angle), sa = std::sin(angle);
  std::vector<std::uint8_t> in(d.size(), 0);
  for (std::size_t k = 0; k < d.z; ++k)
    for (std::size_t j = 0; j < d.y; ++j)
      for (std::size_t i = 0; i < d.x; ++i) {
        const double x = i * s.spacing.x - cx, y = j * s.spacing.y - cy, z = k * s.spacing.z - cz;
        const double u = ca * x + sa * y, v = -sa * x + ca * y;
        const double r = (u * u) / (rx * rx) + (v * v) / (ry * ry) + (is2d ? 0.0 : (z * z) / (rz * rz));
        in[d.index(i, j, k)] = r <= 1.0;
      }
  return RoiMask(d, std::move(in));
}

/// Labels per patient: a shuffled list with round(n * fraction) positives; positives
/// alternate between the two subtypes in shuffled order.
inline std::vector<int> patient_subtypes(std::size_t patients, double positive_fraction, std::mt19937_64& rng) {
  const auto n_pos = static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(patients)));
  std::vector<int> sub(patients, 0);
  for (std::size_t i = 0; i < n_pos && i < patients; ++i) sub[i] = 1 + static_cast<int>(i % 2);
  shuffle(sub, rng);
  return sub;
}

}  // namespace detail

/// Geometry, label and noise-free texture of every case.
inline std::vector<LesionModel> phantom_lesions(const PhantomSpec& spec) {
  spec.validate();
  const std::size_t patients = (spec.n_cases + spec.lesions_per_patient - 1) / spec.lesions_per_patient;
  std::mt19937_64 label_rng(mix_seed(spec.seed, 0));
  const auto subtypes = detail::patient_subtypes(patients, spec.positive_fraction, label_rng);
  std::vector<LesionModel> out;
  const int width = static_cast<int>(std::to_string(spec.n_cases).size());
  for (std::size_t c = 0; c < spec.n_cases; ++c) {
    std::mt19937_64 rng(mix_seed(spec.seed, 1000 + c));
    LesionModel m;
    std::string num = std::to_string(c);
    m.case_id = "case" + std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(num.size(), width), '0') + num;
    const std::size_t p = c / spec.lesions_per_patient;
    m.patient_id = "patient" + std::to_string(p);
    m.subtype = subtypes[p];
    m.label = m.subtype > 0 ? 1 : 0;
    m.mask = detail::lesion_mask(spec, rng);
    const TextureParams& t = m.subtype == 0 ? spec.negative : m.subtype == 1 ? spec.positive_coarse : spec.positive_fine;
    m.texture.base = t.base;
    m.texture.coarse = detail::jittered(t.coarse, spec.amplitude_jitter, rng);
    m.texture.fine = detail::jittered(t.fine, spec.amplitude_jitter, rng);
    const std::uint64_t field_seed = rng();
    m.coarse = smooth_noise_field(spec.dims, spec.spacing, spec.coarse_sigma_mm, mix_seed(field_seed, 1));
    m.fine = smooth_noise_field(spec.dims, spec.spacing, spec.fine_sigma_mm, mix_seed(field_seed, 2));
    out.push_back(std::move(m));
  }
  return out;
}

/// Lesion texture plus white noise drawn from `session`.
inline Volume render_lesion(const PhantomSpec& spec, const LesionModel& m, std::uint64_t session) {
  std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, 7777 + session), name_hash(m.case_id)));
  std::vector<double> v(spec.dims.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double texture = m.texture.coarse * m.coarse[i] + m.texture.fine * m.fine[i];
    const double clean = m.mask.contains(i) ? m.texture.base + texture
                                            : spec.background + (spec.texture_outside ? texture : 0.0);
    v[i] = clean + spec.noise_sigma * normal01(rng);
  }
  return Volume(spec.dims, spec.spacing, spec.unit, std::move(v));
}

namespace detail {
inline Case make_case(const LesionModel& m, Volume v) {
  Case c;
  c.case_id = m.case_id;
  c.patient_id = m.patient_id;
  c.volumes.emplace(v.unit(), std::move(v));
  c.mask = m.mask;
  c.label = m.label;
  return c;
}
}  // namespace detail

inline std::vector<Case> gen_classification_cohort(const PhantomSpec& spec) {
  std::vector<Case> out;
  for (const auto& m : phantom_lesions(spec)) out.push_back(detail::make_case(m, render_lesion(spec, m, 0)));
  return out;
}

/// Same lesions, two independent noise sessions.
inline std::pair<std::vector<Case>, std::vector<Case>> gen_test_retest(const PhantomSpec& spec) {
  std::pair<std::vector<Case>, std::vector<Case>> out;
  for (const auto& m : phantom_lesions(spec)) {
    out.first.push_back(detail::make_case(m, render_lesion(spec, m, 1)));
    out.second.push_back(detail::make_case(m, render_lesion(spec, m, 2)));
  }
  return out;
}

/// Intensity model of the two modalities of a PET/CT case.
///
/// CT (HU): soft-tissue background, a lesion plateau and the coarse texture
/// component, so the coarse-raised subtype is visible only here.
/// PET (SUV): smooth blurred uptake plus a hotspot whose strength follows the fine
/// amplitude, so the fine-raised subtype is visible only here.
struct PetCtParams {
  double ct_background_hu = 0.0;
  double ct_lesion_hu = 40.0;
  double ct_texture_hu = 10.0;  // HU per unit coarse amplitude
  double ct_noise_hu = 5.0;
  double pet_background_suv = 1.0;
  double pet_lesion_suv = 4.0;
  double pet_hotspot_suv = 4.0;  // SUV per unit fine amplitude
  double pet_hotspot_sigma_mm = 3.0;
  double pet_blur_mm = 1.5;
  double pet_noise_suv = 0.1;
};

inline nlohmann::json pet_ct_params_to_json(const PetCtParams& p) {
  return {{"ct_background_hu", p.ct_background_hu}, {"ct_lesion_hu", p.ct_lesion_hu},
          {"ct_texture_hu", p.ct_texture_hu},       {"ct_noise_hu", p.ct_noise_hu},
          {"pet_background_suv", p.pet_background_suv}, {"pet_lesion_suv", p.pet_lesion_suv},
          {"pet_hotspot_suv", p.pet_hotspot_suv},   {"pet_hotspot_sigma_mm", p.pet_hotspot_sigma_mm},
          {"pet_blur_mm", p.pet_blur_mm},           {"pet_noise_suv", p.pet_noise_suv}};
}

inline PetCtParams pet_ct_params_from_json(const nlohmann::json& j) {
  PetCtParams p;
  p.ct_background_hu = j.value("ct_background_hu", p.ct_background_hu);
  p.ct_lesion_hu = j.value("ct_lesion_hu", p.ct_lesion_hu);
  p.ct_texture_hu = j.value("ct_texture_hu", p.ct_texture_hu);
  p.ct_noise_hu = j.value("ct_noise_hu", p.ct_noise_hu);
  p.pet_background_suv = j.value("pet_background_suv", p.pet_background_suv);
  p.pet_lesion_suv = j.value("pet_lesion_suv", p.pet_lesion_suv);
  p.pet_hotspot_suv = j.value("pet_hotspot_suv", p.pet_hotspot_suv);
  p.pet_hotspot_sigma_mm = j.value("pet_hotspot_sigma_mm", p.pet_hotspot_sigma_mm);
  p.pet_blur_mm = j.value("pet_blur_mm", p.pet_blur_mm);
  p.pet_noise_suv = j.value("pet_noise_suv", p.pet_noise_suv);
  return p;
}

namespace detail {
inline std::vector<double> gaussian_blur(std::span<const double> in, const Dims& d, const Spacing& sp, double sigma_mm) {
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
  return convolve_separable(in, d, taps, origins);
}
}  // namespace detail

/// PET/CT cohort: every case carries an HU and an SUV volume sharing the mask.
inline std::vector<Case> gen_pet_ct_cohort(const PhantomSpec& spec, const PetCtParams& p = {}) {
  std::vector<Case> out;
  const Dims& d = spec.dims;
  for (const auto& m : phantom_lesions(spec)) {
    std::mt19937_64 rng(mix_seed(spec.seed, name_hash(m.case_id)));
    // hotspot centre: a random voxel inside the lesion
    const auto inside = m.mask.indices();
    const auto hc = d.coords(inside[uniform_index(rng, inside.size())]);
    std::vector<double> ct(d.size()), pet(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const bool in = m.mask.contains(i);
      ct[i] = in ? p.ct_lesion_hu + p.ct_texture_hu * m.texture.coarse * m.coarse[i] : p.ct_background_hu;
      const auto c = d.coords(i);
      const double dx = (static_cast<double>(c[0]) - static_cast<double>(hc[0])) * spec.spacing.x;
      const double dy = (static_cast<double>(c[1]) - static_cast<double>(hc[1])) * spec.spacing.y;
      const double dz = (static_cast<double>(c[2]) - static_cast<double>(hc[2])) * spec.spacing.z;
      const double r2 = dx * dx + dy * dy + dz * dz;
      const double hot = p.pet_hotspot_suv * m.texture.fine * std::exp(-0.5 * r2 / (p.pet_hotspot_sigma_mm * p.pet_hotspot_sigma_mm));
      pet[i] = (in ? p.pet_lesion_suv + hot : p.pet_background_suv);
    }
    pet = detail::gaussian_blur(pet, d, spec.spacing, p.pet_blur_mm);
    for (std::size_t i = 0; i < d.size(); ++i) {
      ct[i] += p.ct_noise_hu * normal01(rng);
      pet[i] = std::max(0.0, pet[i] + p.pet_noise_suv * normal01(rng));
    }
    Case c = detail::make_case(m, Volume(d, spec.spacing, Unit::HU, std::move(ct)));
    c.volumes.emplace(Unit::SUV, Volume(d, spec.spacing, Unit::SUV, std::move(pet)));
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case directories

/// Writes `<dir>/<case_id>/<UNIT>.mhd` per volume plus `mask.mhd`, and `<dir>/manifest.json`.
inline void write_cohort(std::span<const Case> cases, const fs::path& dir) {
  nlohmann::json manifest;
  manifest["cases"] = nlohmann::json::array();
  for (const auto& c : cases) {
    c.validate();
    const fs::path cdir = dir / c.case_id;
    fs::create_directories(cdir);
    nlohmann::json vols = nlohmann::json::object();
    for (const auto& [unit, vol] : c.volumes) {
      const std::string rel = c.case_id + "/" + to_string(unit) + ".mhd";
      write_mhd(dir / rel, vol, ElementType::MET_DOUBLE);
      vols[to_string(unit)] = rel;
    }
    write_mhd(cdir / "mask.mhd", c.mask, c.volumes.begin()->second.spacing());
    nlohmann::json e{{"case_id", c.case_id}, {"patient_id", c.patient_id}, {"volumes", vols}, {"mask", c.case_id + "/mask.mhd"}};
    e["label"] = c.label ? nlohmann::json(*c.label) : nlohmann::json(nullptr);
    manifest["cases"].push_back(std::move(e));
  }
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Loads every case listed in a manifest; paths are relative to the manifest.
inline std::vector<Case> read_cohort(const fs::path& manifest_path) {
  const auto j = nlohmann::json::parse(read_text_file(manifest_path));
  const fs::path base = manifest_path.parent_path();
  std::vector<Case> out;
  if (!j.contains("cases") || !j.at("cases").is_array()) throw Error(manifest_path.string() + ": missing 'cases' array");
  for (std::size_t i = 0; i < j.at("cases").size(); ++i) {
    const auto& e = j.at("cases")[i];
    const std::string where = manifest_path.string() + ": cases[" + std::to_string(i) + "]";
    if (!e.contains("case_id") || !e.contains("volumes") || !e.contains("mask"))
      throw Error(where + ": requires case_id, volumes and mask");
    Case c;
    c.case_id = e.at("case_id").get<std::string>();
    c.patient_id = e.value("patient_id", c.case_id);
    for (const auto& [u, rel] : e.at("volumes").items())
      c.volumes.emplace(unit_from_string(u), read_mhd(base / rel.get<std::string>(), unit_from_string(u)));
    c.mask = read_mhd_mask(base / e.at("mask").get<std::string>());
    if (e.contains("label") && !e.at("label").is_null()) c.label = e.at("label").get<int>();
    c.validate();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace tensorrad

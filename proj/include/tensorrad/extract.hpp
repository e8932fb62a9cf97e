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

#include "tensorrad/features.hpp"
#include "tensorrad/filters.hpp"
#include "tensorrad/fuse.hpp"
#include "tensorrad/io.hpp"
#include "tensorrad/perturb.hpp"

namespace tensorrad {

struct DiscretizationSpec {
  BinScheme scheme = BinScheme::FBW;
  double width = 25.0;
  int count = 32;

  DiscretizedRoi apply(std::span<const double> values) const {
    return scheme == BinScheme::FBW ? discretize_fbw(values, width) : discretize_fbc(values, count);
  }
};

/// How a flavour key is turned into a feature vector.
///
/// VANILLA and PERTURB flavours use `base_discretization`; FILTER and FUSION
/// flavours (whose intensities are no longer in physical units) use
/// `derived_discretization`. Any key may override with a `bin_width` or
/// `bin_count` parameter, which is how filter x bin grids are expressed.
/// VANILLA may select a modality with `modality=<unit>`.
struct ExtractConfig {
  std::optional<Unit> modality;  // unset: the case's first volume
  DiscretizationSpec base_discretization{BinScheme::FBW, 25.0, 32};
  DiscretizationSpec derived_discretization{BinScheme::FBC, 25.0, 32};
  Unit fusion_first = Unit::SUV;
  Unit fusion_second = Unit::HU;
  std::size_t min_roi_voxels = 8;
};

/// Applies a flavour's image/mask stages and computes the full catalog.
/// Degenerate ROIs yield an all-missing vector with a diagnostic.
inline FeatureVector extract(const Case& c, const FlavourKey& flavour, const ExtractConfig& cfg) {
  c.validate();
  FeatureVector fv;
  fv.provenance = flavour;
  std::vector<std::string> warnings;

  std::optional<Unit> modality = cfg.modality;
  if (flavour.has("modality")) modality = unit_from_string(flavour.get("modality"));

  Volume volume;
  RoiMask mask = c.mask;
  DiscretizationSpec disc = cfg.base_discretization;
  switch (flavour.axis()) {
    case FlavourAxis::VANILLA:
      volume = c.volume(modality);
      break;
    case FlavourAxis::BIN_WIDTH:
      volume = c.volume(modality);
      disc = {BinScheme::FBW, flavour.get_double("width"), 0};
      break;
    case FlavourAxis::BIN_COUNT:
      volume = c.volume(modality);
      disc = {BinScheme::FBC, 0.0, static_cast<int>(flavour.get_int("count"))};
      break;
    case FlavourAxis::PERTURB: {
      auto spec = PerturbSpec::from_key(flavour);
      spec.min_roi_voxels = cfg.min_roi_voxels;
      auto p = apply_perturbation(c.volume(modality), c.mask, spec);
      volume = std::move(p.volume);
      mask = std::move(p.mask);
      break;
    }
    case FlavourAxis::FILTER:
      volume = apply_filter(c.volume(modality), FilterSpec::from_key(flavour), &warnings);
      disc = cfg.derived_discretization;
      break;
    case FlavourAxis::FUSION:
      volume = fuse(c.volume(cfg.fusion_first), c.volume(cfg.fusion_second), FusionSpec::from_key(flavour));
      disc = cfg.derived_discretization;
      break;
  }
  if (flavour.axis() != FlavourAxis::BIN_WIDTH && flavour.axis() != FlavourAxis::BIN_COUNT) {
    if (flavour.has("bin_width")) disc = {BinScheme::FBW, flavour.get_double("bin_width"), 0};
    if (flavour.has("bin_count")) disc = {BinScheme::FBC, 0.0, static_cast<int>(flavour.get_int("bin_count"))};
  }

  if (mask.count() < std::max<std::size_t>(cfg.min_roi_voxels, 1)) {
    fv.diagnostic = "case " + c.case_id + ": ROI has " + std::to_string(mask.count()) + " voxels under flavour " +
                    flavour.str() + " (minimum " + std::to_string(cfg.min_roi_voxels) + ")";
    return fv;
  }
  const auto values = roi_values(volume, mask);
  fv = compute_features(values, mask, disc.apply(values), flavour);
  for (const auto& w : warnings) fv.diagnostic += (fv.diagnostic.empty() ? "" : "; ") + w;
  return fv;
}

/// Feature rows for every (case, flavour) pair; diagnostics are appended to `warnings`.
inline FeatureTable extract_table(std::span<const Case> cases, const FlavourKey& flavour, const ExtractConfig& cfg,
                                  std::vector<std::string>* warnings = nullptr) {
  FeatureTable t;
  t.columns = feature_names();
  for (const auto& c : cases) {
    auto fv = extract(c, flavour, cfg);
    if (warnings && !fv.diagnostic.empty()) warnings->push_back(fv.diagnostic);
    t.rows.push_back({c.case_id, flavour, std::move(fv.values)});
  }
  return t;
}

}  // namespace tensorrad

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

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tensorrad/common.hpp"
#include "tensorrad/random.hpp"

namespace tensorrad::ml {

using tensorrad::mix_seed;
using tensorrad::normal01;
using tensorrad::shuffle;
using tensorrad::uniform01;
using tensorrad::uniform_index;

/// Rows of a binary classification problem. `row_ids` trace every row back to the
/// original dataset (synthetic rows carry the id of the row they were built from).
struct Dataset {
  Eigen::MatrixXd X;
  std::vector<int> y;
  std::vector<std::string> groups;
  std::vector<std::string> columns;
  std::vector<long> row_ids;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(X.cols()); }

  static Dataset make(Eigen::MatrixXd X, std::vector<int> y, std::vector<std::string> groups = {},
                      std::vector<std::string> columns = {}) {
    Dataset ds;
    ds.X = std::move(X);
    ds.y = std::move(y);
    ds.groups = std::move(groups);
    ds.columns = std::move(columns);
    if (ds.groups.empty())
      for (std::size_t i = 0; i < ds.n(); ++i) ds.groups.push_back("row" + std::to_string(i));
    if (ds.columns.empty())
      for (std::size_t j = 0; j < ds.d(); ++j) ds.columns.push_back("x" + std::to_string(j));
    ds.row_ids.resize(ds.n());
    std::iota(ds.row_ids.begin(), ds.row_ids.end(), 0L);
    ds.validate();
    return ds;
  }

  void validate() const {
    if (y.size() != n()) throw Error("dataset: label count does not match rows");
    if (groups.size() != n()) throw Error("dataset: group count does not match rows");
    if (row_ids.size() != n()) throw Error("dataset: row id count does not match rows");
    if (columns.size() != d()) throw Error("dataset: column names do not match columns");
    if (!X.allFinite()) throw Error("dataset: non-finite feature value");
    for (int v : y)
      if (v != 0 && v != 1) throw Error("dataset: labels must be 0 or 1");
  }

  Dataset rows(std::span<const std::size_t> idx) const {
    Dataset out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
      out.y.push_back(y[idx[i]]);
      out.groups.push_back(groups[idx[i]]);
      out.row_ids.push_back(row_ids[idx[i]]);
    }
    out.columns = columns;
    return out;
  }

  Dataset cols(std::span<const std::size_t> idx) const {
    Dataset out = *this;
    out.X.resize(X.rows(), static_cast<Eigen::Index>(idx.size()));
    out.columns.clear();
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] >= d()) throw Error("dataset: column index out of range");
      out.X.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(idx[j]));
      out.columns.push_back(columns[idx[j]]);
    }
    return out;
  }

  std::array<std::size_t, 2> class_counts() const {
    std::array<std::size_t, 2> c{0, 0};
    for (int v : y) ++c[static_cast<std::size_t>(v)];
    return c;
  }
};

// ---------------------------------------------------------------------------
// Fold plans

enum class FoldKind { STRATIFIED_K, GROUP_K };

inline std::string to_string(FoldKind k) { return k == FoldKind::STRATIFIED_K ? "STRATIFIED_K" : "GROUP_K"; }

inline FoldKind fold_kind_from_string(const std::string& s) {
  if (s == "STRATIFIED_K") return FoldKind::STRATIFIED_K;
  if (s == "GROUP_K") return FoldKind::GROUP_K;
  throw Error("unknown fold kind '" + s + "'");
}

/// Fold assignment for every row; `inner_k` > 0 marks a nested plan whose inner
/// plans are drawn (same kind) on each outer training set.
struct FoldPlan {
  FoldKind kind = FoldKind::STRATIFIED_K;
  std::size_t k = 5;
  std::size_t inner_k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> fold_of;

  std::vector<std::size_t> test_rows(std::size_t f) const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == f) r.push_back(i);
    return r;
  }
  std::vector<std::size_t> train_rows(std::size_t f) const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != f) r.push_back(i);
    return r;
  }
};

/// Per class: shuffle, then deal round-robin, continuing the dealer position across
/// classes so fold sizes stay within one of each other.
inline FoldPlan stratified_plan(std::span<const int> y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("fold plan: k must be >= 2");
  FoldPlan p{FoldKind::STRATIFIED_K, k, 0, seed, std::vector<std::size_t>(y.size(), 0)};
  std::mt19937_64 rng(seed);
  std::size_t dealer = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) idx.push_back(i);
    shuffle(idx, rng);
    for (std::size_t i : idx) p.fold_of[i] = dealer++ % k;
  }
  for (std::size_t f = 0; f < k; ++f)
    if (p.test_rows(f).empty()) throw Error("fold plan: fold " + std::to_string(f) + " is empty");
  return p;
}

/// Whole patients are dealt to folds. Groups are shuffled, then placed largest-first
/// into the fold with the fewest rows of the group's majority class (ties: fewest rows,
/// then lowest fold index).
inline FoldPlan group_plan(std::span<const int> y, std::span<const std::string> groups, std::size_t k,
                           std::uint64_t seed) {
  if (k < 2) throw Error("fold plan: k must be >= 2");
  if (groups.size() != y.size()) throw Error("fold plan: groups misaligned");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < y.size(); ++i) members[groups[i]].push_back(i);
  if (members.size() < k) throw Error("fold plan: fewer groups than folds");
  std::vector<std::string> names;
  for (const auto& [g, m] : members) names.push_back(g);
  std::mt19937_64 rng(seed);
  shuffle(names, rng);
  std::stable_sort(names.begin(), names.end(),
                   [&](const std::string& a, const std::string& b) { return members[a].size() > members[b].size(); });
  FoldPlan p{FoldKind::GROUP_K, k, 0, seed, std::vector<std::size_t>(y.size(), 0)};
  std::vector<std::array<std::size_t, 2>> load(k, {0, 0});
  for (const auto& g : names) {
    const auto& m = members[g];
    std::size_t pos = 0;
    for (std::size_t i : m) pos += static_cast<std::size_t>(y[i]);
    const std::size_t cls = 2 * pos >= m.size() ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t f = 1; f < k; ++f) {
      const auto key = [&](std::size_t q) { return std::pair(load[q][cls], load[q][0] + load[q][1]); };
      if (key(f) < key(best)) best = f;
    }
    for (std::size_t i : m) {
      p.fold_of[i] = best;
      ++load[best][static_cast<std::size_t>(y[i])];
    }
  }
  return p;
}

inline FoldPlan make_plan(FoldKind kind, const Dataset& ds, std::size_t k, std::uint64_t seed,
                          std::size_t inner_k = 0) {
  FoldPlan p = kind == FoldKind::STRATIFIED_K ? stratified_plan(ds.y, k, seed) : group_plan(ds.y, ds.groups, k, seed);
  p.inner_k = inner_k;
  return p;
}

/// True if some group has rows on both sides of some fold.
inline bool plan_splits_a_group(const FoldPlan& p, std::span<const std::string> groups) {
  std::map<std::string, std::set<std::size_t>> folds;
  for (std::size_t i = 0; i < groups.size(); ++i) folds[groups[i]].insert(p.fold_of[i]);
  for (const auto& [g, f] : folds)
    if (f.size() > 1) return true;
  return false;
}

}  // namespace tensorrad::ml

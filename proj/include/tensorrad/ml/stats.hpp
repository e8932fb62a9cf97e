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

// Significance tests for comparing two classifiers.

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <span>

#include "tensorrad/common.hpp"

namespace tensorrad::ml {

struct McNemarResult {
  std::size_t b = 0;  // a right, b wrong
  std::size_t c = 0;  // a wrong, b right
  double statistic = 0.0;
  double p = 1.0;
  bool exact = true;
};

/// Exact two-sided binomial test when b + c < 25, otherwise continuity-corrected chi-square.
inline McNemarResult mcnemar(std::span<const int> pred_a, std::span<const int> pred_b, std::span<const int> y_true) {
  if (pred_a.size() != y_true.size() || pred_b.size() != y_true.size()) throw Error("mcnemar: misaligned vectors");
  McNemarResult r;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool ra = pred_a[i] == y_true[i], rb = pred_b[i] == y_true[i];
    if (ra && !rb) ++r.b;
    if (!ra && rb) ++r.c;
  }
  const std::size_t n = r.b + r.c;
  if (n == 0) return r;
  if (n < 25) {
    const boost::math::binomial_distribution<double> bin(static_cast<double>(n), 0.5);
    const double lo = static_cast<double>(std::min(r.b, r.c));
    r.statistic = lo;
    r.p = std::min(1.0, 2.0 * boost::math::cdf(bin, lo));
  } else {
    const double diff = std::abs(static_cast<double>(r.b) - static_cast<double>(r.c)) - 1.0;
    r.exact = false;
    r.statistic = diff * diff / static_cast<double>(n);
    r.p = boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(1.0), r.statistic));
  }
  return r;
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;
  std::size_t df = 0;
  bool p_capped = false;  // p underflowed (zero variance, non-zero difference)
};

/// Smallest p value reported; p values below this (including exact zeros) are capped to it.
constexpr double kMinPValue = std::numeric_limits<double>::min();

namespace detail {
inline TTestResult t_from_differences(std::span<const double> a, std::span<const double> b, double variance_factor) {
  if (a.size() != b.size()) throw Error("t-test: fold score vectors differ in length");
  const std::size_t k = a.size();
  if (k < 2) throw Error("t-test: need at least 2 folds");
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(k);
  double ss = 0.0;
  for (std::size_t i = 0; i < k; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double var = ss / static_cast<double>(k - 1);
  TTestResult r;
  r.mean_difference = mean;
  r.df = k - 1;
  if (var == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0 ? INFINITY : -INFINITY;
    r.p = kMinPValue;
    r.p_capped = true;
    return r;
  }
  r.t = mean / std::sqrt(variance_factor * var);
  const boost::math::students_t_distribution<double> dist(static_cast<double>(r.df));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  if (r.p < kMinPValue) {
    r.p = kMinPValue;
    r.p_capped = true;
  }
  return r;
}
}  // namespace detail

/// Plain paired t-test on per-fold scores.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  return detail::t_from_differences(a, b, 1.0 / static_cast<double>(a.size()));
}

/// Paired t-test with the resampling variance correction (1/k + n_test/n_train).
inline TTestResult corrected_resampled_ttest(std::span<const double> a, std::span<const double> b, double n_train,
                                             double n_test) {
  if (!(n_train > 0.0) || !(n_test > 0.0)) throw Error("corrected t-test: sample sizes must be positive");
  return detail::t_from_differences(a, b, 1.0 / static_cast<double>(a.size()) + n_test / n_train);
}

}  // namespace tensorrad::ml

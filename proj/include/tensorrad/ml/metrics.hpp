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

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tensorrad/common.hpp"

namespace tensorrad::ml {

struct CurvePoint {
  double threshold;
  double x;  // FPR for ROC, recall for PR
  double y;  // TPR for ROC, precision for PR
};

struct Metrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  MaybeValue roc_auc;
  MaybeValue average_precision;
};

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
};

inline Confusion confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw Error("metrics: misaligned vectors");
  Confusion c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 1)
      (y_pred[i] == 1 ? c.tp : c.fn)++;
    else
      (y_pred[i] == 1 ? c.fp : c.tn)++;
  }
  return c;
}

/// Mean of the per-class recalls that exist.
inline double balanced_accuracy(const Confusion& c) {
  double sum = 0.0;
  int present = 0;
  if (c.tp + c.fn > 0) {
    sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    ++present;
  }
  if (c.tn + c.fp > 0) {
    sum += static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    ++present;
  }
  return present ? sum / present : 0.0;
}

/// F1 of the positive class; 0 when there are no true positives.
inline double f1_score(const Confusion& c) {
  const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
  return c.tp == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

/// Probability that a random positive outranks a random negative, ties counted half.
inline MaybeValue roc_auc(std::span<const int> y_true, std::span<const double> score) {
  if (y_true.size() != score.size()) throw Error("metrics: misaligned vectors");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < y_true.size(); ++i) (y_true[i] == 1 ? pos : neg).push_back(score[i]);
  if (pos.empty() || neg.empty()) return std::nullopt;
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double s : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), s);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

namespace detail {
/// Indices sorted by descending score, plus the end of each tie block.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> ranked_blocks(std::span<const double> score) {
  std::vector<std::size_t> order(score.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::size_t> ends;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i + 1 == order.size() || score[order[i + 1]] != score[order[i]]) ends.push_back(i + 1);
  return {order, ends};
}
}  // namespace detail

/// ROC points from (0,0) to (1,1), one per distinct threshold in descending order.
inline std::vector<CurvePoint> roc_curve(std::span<const int> y_true, std::span<const double> score) {
  const auto [order, ends] = detail::ranked_blocks(score);
  double P = 0, N = 0;
  for (int v : y_true) (v == 1 ? P : N) += 1.0;
  std::vector<CurvePoint> pts{{INFINITY, 0.0, 0.0}};
  double tp = 0, fp = 0;
  std::size_t start = 0;
  for (std::size_t e : ends) {
    for (std::size_t i = start; i < e; ++i) (y_true[order[i]] == 1 ? tp : fp) += 1.0;
    pts.push_back({score[order[e - 1]], N > 0 ? fp / N : 0.0, P > 0 ? tp / P : 0.0});
    start = e;
  }
  return pts;
}

/// Trapezoidal area under the ROC points.
inline MaybeValue roc_auc_trapezoid(std::span<const int> y_true, std::span<const double> score) {
  if (!roc_auc(y_true, score)) return std::nullopt;
  const auto pts = roc_curve(y_true, score);
  double a = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) a += (pts[i].x - pts[i - 1].x) * 0.5 * (pts[i].y + pts[i - 1].y);
  return a;
}

/// Precision-recall points, one per distinct threshold in descending order.
inline std::vector<CurvePoint> pr_curve(std::span<const int> y_true, std::span<const double> score) {
  const auto [order, ends] = detail::ranked_blocks(score);
  double P = 0;
  for (int v : y_true) P += v == 1 ? 1.0 : 0.0;
  std::vector<CurvePoint> pts;
  double tp = 0, seen = 0;
  std::size_t start = 0;
  for (std::size_t e : ends) {
    for (std::size_t i = start; i < e; ++i) {
      tp += y_true[order[i]] == 1 ? 1.0 : 0.0;
      seen += 1.0;
    }
    pts.push_back({score[order[e - 1]], P > 0 ? tp / P : 0.0, tp / seen});
    start = e;
  }
  return pts;
}

/// Step-interpolated average precision: sum of (R_n - R_{n-1}) * P_n.
inline MaybeValue average_precision(std::span<const int> y_true, std::span<const double> score) {
  double P = 0;
  for (int v : y_true) P += v == 1 ? 1.0 : 0.0;
  if (P == 0) return std::nullopt;
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : pr_curve(y_true, score)) {
    ap += (p.x - prev_recall) * p.y;
    prev_recall = p.x;
  }
  return ap;
}

inline Metrics compute_metrics(std::span<const int> y_true, std::span<const int> y_pred, std::span<const double> score) {
  if (y_true.size() != score.size()) throw Error("metrics: misaligned vectors");
  const auto c = confusion(y_true, y_pred);
  Metrics m;
  m.accuracy = y_true.empty() ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(y_true.size());
  m.balanced_accuracy = balanced_accuracy(c);
  m.f1 = f1_score(c);
  m.roc_auc = roc_auc(y_true, score);
  m.average_precision = average_precision(y_true, score);
  return m;
}

}  // namespace tensorrad::ml

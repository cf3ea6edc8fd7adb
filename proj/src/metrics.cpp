/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "atlasfuse/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) {
    throw Error(ErrorCode::kLengthMismatch, "roc_auc: scores/labels length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over tied groups, then the rank-sum statistic.
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(scores.size()) - pos;
  if (pos == 0.0 || neg == 0.0) return 0.5;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricsReport compute_metrics(const std::vector<int>& predictions, const Matrix& scores,
                              const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  if (predictions.size() != n || static_cast<std::size_t>(scores.rows()) != n) {
    throw Error(ErrorCode::kLengthMismatch,
                "compute_metrics: " + std::to_string(predictions.size()) +
                    " predictions, " + std::to_string(scores.rows()) + " score rows, " +
                    std::to_string(n) + " labels");
  }
  if (n == 0) throw Error(ErrorCode::kLengthMismatch, "compute_metrics: empty input");
  const auto classes = static_cast<int>(scores.cols());

  std::vector<double> tp(static_cast<std::size_t>(classes), 0.0);
  std::vector<double> fp(tp);
  std::vector<double> fn(tp);
  double correct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= classes || p < 0 || p >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange, "compute_metrics: class index");
    }
    if (y == p) {
      correct += 1.0;
      tp[static_cast<std::size_t>(y)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
      fn[static_cast<std::size_t>(y)] += 1.0;
    }
  }
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };

  MetricsReport r;
  r.accuracy = correct / static_cast<double>(n);
  const double tp_all = std::accumulate(tp.begin(), tp.end(), 0.0);
  const double fp_all = std::accumulate(fp.begin(), fp.end(), 0.0);
  const double fn_all = std::accumulate(fn.begin(), fn.end(), 0.0);
  const double micro_p = ratio(tp_all, tp_all + fp_all);
  const double micro_r = ratio(tp_all, tp_all + fn_all);
  r.micro_f1 = ratio(2.0 * micro_p * micro_r, micro_p + micro_r);

  auto auc_for = [&](int c) {
    std::vector<double> s(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores(static_cast<Index>(i), c);
      pos[i] = labels[i] == c;
    }
    return roc_auc(s, pos);
  };

  if (classes == 2) {
    r.precision = ratio(tp[1], tp[1] + fp[1]);
    r.recall = ratio(tp[1], tp[1] + fn[1]);
    r.roc_auc = auc_for(1);
  } else {
    double auc_sum = 0.0;
    int auc_count = 0;
    for (int c = 0; c < classes; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      r.precision += ratio(tp[cs], tp[cs] + fp[cs]);
      r.recall += ratio(tp[cs], tp[cs] + fn[cs]);
      const auto positives = std::count(labels.begin(), labels.end(), c);
      if (positives > 0 && static_cast<std::size_t>(positives) < n) {
        auc_sum += auc_for(c);
        ++auc_count;
      }
    }
    r.precision /= classes;
    r.recall /= classes;
    r.roc_auc = auc_count > 0 ? auc_sum / auc_count : 0.5;
  }
  return r;
}

}  // namespace atlasfuse

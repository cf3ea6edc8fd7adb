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
#ifndef ATLASFUSE_METRICS_HPP_
#define ATLASFUSE_METRICS_HPP_

#include <vector>

#include "atlasfuse/autograd.hpp"

namespace atlasfuse {

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double micro_f1 = 0.0;
  double roc_auc = 0.0;
};

// Binary tasks score class 1 as positive. Multi-class precision/recall are
// macro averages and ROC-AUC is one-vs-rest macro. Classes without both
// positives and negatives in `labels` are skipped for AUC (0.5 if none left).
// `scores` is N x C class probabilities.
MetricsReport compute_metrics(const std::vector<int>& predictions, const Matrix& scores,
                              const std::vector<int>& labels);

// Mann-Whitney estimate of the area under the ROC curve; ties count 1/2.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

}  // namespace atlasfuse

#endif  // ATLASFUSE_METRICS_HPP_

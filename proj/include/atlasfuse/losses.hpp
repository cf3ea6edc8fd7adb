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
#ifndef ATLASFUSE_LOSSES_HPP_
#define ATLASFUSE_LOSSES_HPP_

#include <vector>

#include "atlasfuse/autograd.hpp"
#include "atlasfuse/model.hpp"

namespace atlasfuse {

// Trade-off weights of the composite objective.
struct LossWeights {
  double subject = 0.0;      // contrastive consistency of pooled features
  double population = 0.0;   // population-graph agreement
  double entropy = 0.0;      // assignment entropy
  double orthogonal = 0.0;   // incompatible-node orthogonality

  void validate() const;
  static LossWeights none() { return {}; }
  // Values tuned for the six-class Alzheimer's cohort.
  static LossWeights adni() { return {1e1, 1e1, 1e-5, 1e0}; }
};

// Mean absolute cosine between matching rows of two r x d matrices.
ad::Var orthogonal_loss(const ad::Var& incompatible_a, const ad::Var& incompatible_b);

// (1 / pool_clusters) * sum of row entropies of both assignment matrices.
ad::Var entropy_loss(const ad::Var& assignment_a, const ad::Var& assignment_b,
                     int pool_clusters);

// -log( sum_i exp(sim_ii / tau) / sum_{i != j} exp(sim_ij / tau) ), where
// sim is the mean row-wise cosine between pooled matrices.
ad::Var subject_contrastive(const std::vector<ad::Var>& pooled_a,
                            const std::vector<ad::Var>& pooled_b, double tau);

// (1 / bz) * sum_ij (G^a_ij - G^b_ij)^2 with G the readout cosine matrix.
ad::Var population_consistency(const std::vector<ad::Var>& readouts_a,
                               const std::vector<ad::Var>& readouts_b);

// Mean negative log-likelihood of `labels` under row softmax of `logits`.
ad::Var cross_entropy(const std::vector<ad::Var>& logits, const std::vector<int>& labels);

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double subject = 0.0;
  double population = 0.0;
  double entropy = 0.0;
  double orthogonal = 0.0;
  // False when the batch had a single subject and pairwise terms were skipped.
  bool pairwise_active = false;
};

struct TotalLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

// Combines every term the model's enabled components produce. The entropy
// term is averaged over the batch.
TotalLoss total_loss(const Model& model, const std::vector<ForwardTrace>& batch,
                     const std::vector<int>& labels, const ParamBinding& params,
                     const LossWeights& weights);

}  // namespace atlasfuse

#endif  // ATLASFUSE_LOSSES_HPP_

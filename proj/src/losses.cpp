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
#include "atlasfuse/losses.hpp"

#include <cmath>
#include <string>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

void LossWeights::validate() const {
  for (double w : {subject, population, entropy, orthogonal}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "loss weights must be finite and non-negative");
    }
  }
}

namespace {

ad::Var row_sums(const ad::Var& a) {
  return ad::matmul(a, ad::Var::constant(Matrix::Ones(a.cols(), 1)));
}

void require_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kLengthMismatch,
                std::string(what) + ": atlas lists differ in length");
  }
  if (a < 2) {
    throw Error(ErrorCode::kBatchTooSmall,
                std::string(what) + " needs at least two subjects");
  }
}

}  // namespace

ad::Var orthogonal_loss(const ad::Var& incompatible_a, const ad::Var& incompatible_b) {
  if (incompatible_a.rows() != incompatible_b.rows() ||
      incompatible_a.cols() != incompatible_b.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "orthogonal_loss: shapes differ");
  }
  ad::Var cos = row_sums(ad::mul(ad::row_normalize(incompatible_a),
                                 ad::row_normalize(incompatible_b)));
  return ad::scale(ad::sum(ad::abs(cos)),
                   1.0 / static_cast<double>(incompatible_a.rows()));
}

ad::Var entropy_loss(const ad::Var& assignment_a, const ad::Var& assignment_b,
                     int pool_clusters) {
  for (const ad::Var* s : {&assignment_a, &assignment_b}) {
    if (s->value().minCoeff() < 0.0) {
      throw Error(ErrorCode::kNegativeProbability, "assignment has a negative entry");
    }
  }
  ad::Var plogp = ad::add(ad::sum(ad::xlogx(assignment_a)), ad::sum(ad::xlogx(assignment_b)));
  return ad::scale(plogp, -1.0 / static_cast<double>(pool_clusters));
}

constexpr double kCosineEps = 1e-8;

ad::Var subject_contrastive(const std::vector<ad::Var>& pooled_a,
                            const std::vector<ad::Var>& pooled_b, double tau) {
  require_pairs(pooled_a.size(), pooled_b.size(), "subject_contrastive");
  if (!(tau > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  const Index rows = pooled_a.front().rows();
  std::vector<ad::Var> flat_a;
  std::vector<ad::Var> flat_b;
  for (std::size_t i = 0; i < pooled_a.size(); ++i) {
    if (pooled_a[i].rows() != rows || pooled_b[i].rows() != rows ||
        pooled_a[i].cols() != pooled_b[i].cols()) {
      throw Error(ErrorCode::kShapeMismatch, "subject_contrastive: pooled shapes differ");
    }
    flat_a.push_back(ad::flatten_row(ad::row_normalize(pooled_a[i], kCosineEps)));
    flat_b.push_back(ad::flatten_row(ad::row_normalize(pooled_b[i], kCosineEps)));
  }
  // sim[i][j] = mean over rows of cos(pooled_a[i] row, pooled_b[j] row)
  ad::Var sim = ad::scale(ad::matmul(ad::vstack(flat_a), ad::transpose(ad::vstack(flat_b))),
                          1.0 / static_cast<double>(rows));
  ad::Var e = ad::exp(ad::scale(sim, 1.0 / tau));
  const auto bz = static_cast<Index>(pooled_a.size());
  const Matrix eye = Matrix::Identity(bz, bz);
  const Matrix off = Matrix::Ones(bz, bz) - eye;
  ad::Var positive = ad::sum(ad::mask_mul(e, eye));
  ad::Var negative = ad::sum(ad::mask_mul(e, off));
  return ad::sub(ad::log(negative), ad::log(positive));
}

ad::Var population_consistency(const std::vector<ad::Var>& readouts_a,
                               const std::vector<ad::Var>& readouts_b) {
  require_pairs(readouts_a.size(), readouts_b.size(), "population_consistency");
  ad::Var ma = ad::vstack(readouts_a);
  ad::Var mb = ad::vstack(readouts_b);
  for (const ad::Var* m : {&ma, &mb}) {
    const Eigen::VectorXd norms = m->value().rowwise().norm();
    for (Index i = 0; i < norms.size(); ++i) {
      if (!(norms(i) > 0.0)) {
        throw Error(ErrorCode::kZeroNormReadout,
                    "readout " + std::to_string(i) + " is the zero vector");
      }
    }
  }
  ad::Var na = ad::row_normalize(ma);
  ad::Var nb = ad::row_normalize(mb);
  ad::Var diff = ad::sub(ad::matmul(na, ad::transpose(na)), ad::matmul(nb, ad::transpose(nb)));
  return ad::scale(ad::sum(ad::mul(diff, diff)),
                   1.0 / static_cast<double>(readouts_a.size()));
}

ad::Var cross_entropy(const std::vector<ad::Var>& logits, const std::vector<int>& labels) {
  if (logits.size() != labels.size() || logits.empty()) {
    throw Error(ErrorCode::kLengthMismatch, "cross_entropy: logits/labels length");
  }
  ad::Var stacked = ad::vstack(logits);
  Matrix onehot = Matrix::Zero(stacked.rows(), stacked.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= stacked.cols()) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(labels[i]) + " with " +
                      std::to_string(stacked.cols()) + " classes");
    }
    onehot(static_cast<Index>(i), labels[i]) = 1.0;
  }
  ad::Var picked = ad::sum(ad::mask_mul(ad::log_row_softmax(stacked), onehot));
  return ad::scale(picked, -1.0 / static_cast<double>(labels.size()));
}

TotalLoss total_loss(const Model& model, const std::vector<ForwardTrace>& batch,
                     const std::vector<int>& labels, const ParamBinding& params,
                     const LossWeights& weights) {
  weights.validate();
  std::vector<ad::Var> logits;
  for (const auto& t : batch) logits.push_back(t.logits);
  TotalLoss out;
  ad::Var total = cross_entropy(logits, labels);
  out.breakdown.classification = total.scalar();

  auto accumulate = [&total](const ad::Var& term, double weight, double* slot) {
    *slot = term.scalar();
    if (weight != 0.0) total = ad::add(total, ad::scale(term, weight));
  };

  const bool pairwise = batch.size() >= 2;
  out.breakdown.pairwise_active = pairwise && model.atlas_count() == 2;
  if (model.uses_diffpool()) {
    std::vector<ad::Var> pooled_a;
    std::vector<ad::Var> pooled_b;
    std::vector<ad::Var> entropies;
    for (const auto& t : batch) {
      pooled_a.push_back(t.atlases[0].pooled);
      pooled_b.push_back(t.atlases[1].pooled);
      entropies.push_back(entropy_loss(t.atlases[0].assignment, t.atlases[1].assignment,
                                       model.pool_clusters()));
    }
    ad::Var mean_entropy = ad::scale(ad::sum(ad::vstack(entropies)),
                                     1.0 / static_cast<double>(batch.size()));
    accumulate(mean_entropy, weights.entropy, &out.breakdown.entropy);
    if (pairwise) {
      accumulate(subject_contrastive(pooled_a, pooled_b, model.config().temperature),
                 weights.subject, &out.breakdown.subject);
    }
  }
  if (model.uses_population() && pairwise) {
    std::vector<ad::Var> ma;
    std::vector<ad::Var> mb;
    for (const auto& t : batch) {
      ma.push_back(t.atlases[0].readout);
      mb.push_back(t.atlases[1].readout);
    }
    accumulate(population_consistency(ma, mb), weights.population,
               &out.breakdown.population);
  }
  if (model.uses_incompatible() && model.atlas_count() == 2) {
    accumulate(orthogonal_loss(params[Model::slot_prefix(0) + "incompatible"],
                               params[Model::slot_prefix(1) + "incompatible"]),
               weights.orthogonal, &out.breakdown.orthogonal);
  }
  out.total = total;
  out.breakdown.total = total.scalar();
  return out;
}

}  // namespace atlasfuse

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
#ifndef ATLASFUSE_TRAINING_HPP_
#define ATLASFUSE_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atlasfuse/connectome.hpp"
#include "atlasfuse/losses.hpp"
#include "atlasfuse/metrics.hpp"
#include "atlasfuse/model.hpp"

namespace atlasfuse {

struct TrainConfig {
  double init_lr = 1e-4;
  double min_lr = 6e-5;
  int patience = 25;
  double lr_decay = 0.5;
  // 0 selects 10% of the dataset's subject count (rounded up, at least 2).
  int batch_size = 0;
  int max_epochs = 300;
  std::uint64_t seed = 0;
  int fold_count = 10;
  LossWeights weights;
  int workers = 1;

  void validate() const;
  int resolve_batch_size(std::size_t subject_count) const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;        // rate used during this epoch
  LossBreakdown train;    // batch-averaged
  double val_loss = 0.0;
  bool improved = false;
};

struct TrainHooks {
  // Skip optimizer updates; validation loss then stays constant, which pins
  // the learning-rate schedule to pure patience arithmetic.
  bool freeze_params = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;  // best validation epoch (initial params if none improved)
  std::vector<EpochRecord> history;
  std::vector<int> halving_epochs;  // epochs after which lr was halved
  int epochs_ran = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double final_lr = 0.0;
};

// Mean of the full objective over `subjects`, evaluated in fixed-order
// batches of `batch_size`.
double evaluate_loss(const Model& model, const std::vector<PreparedSubject>& subjects,
                     const ModelParams& params, const LossWeights& weights,
                     int batch_size, LossBreakdown* breakdown = nullptr);

TrainResult train_fold(const Model& model, const std::vector<PreparedSubject>& train,
                       const std::vector<PreparedSubject>& val, ModelParams params,
                       const TrainConfig& cfg, int batch_size, std::uint64_t shuffle_seed,
                       const TrainHooks& hooks = {});

struct Prediction {
  int label = 0;
  int predicted = 0;
  Eigen::RowVectorXd probabilities;
};

std::vector<Prediction> predict(const Model& model, const std::vector<PreparedSubject>& subjects,
                                const ModelParams& params);
MetricsReport evaluate_predictions(const std::vector<Prediction>& predictions);

// Stratified assignment of each subject to one of `fold_count` folds.
std::vector<int> stratified_folds(const std::vector<int>& labels, int class_count,
                                  int fold_count, std::uint64_t seed);

struct FoldSplit {
  std::vector<std::size_t> train, val, test;
};

// Fold f tests on fold f and validates on fold (f + 1) mod K.
FoldSplit split_for_fold(const std::vector<int>& assignment, int fold, int fold_count);

struct FoldResult {
  int fold = 0;
  MetricsReport test;
  int epochs_ran = 0;
  double wall_time_seconds = 0.0;
  LossBreakdown final_breakdown;
  std::vector<EpochRecord> history;
  ModelParams params;
  std::vector<std::size_t> test_indices;
  std::vector<Prediction> test_predictions;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct CvSummary {
  MetricSummary accuracy, precision, recall, micro_f1, roc_auc, epochs;
};

struct CvResult {
  std::vector<FoldResult> folds;  // sorted by fold index
  CvSummary summary;
};

struct CvOptions {
  // When set, one JSON-lines training log per fold is written here.
  std::optional<std::filesystem::path> log_dir;
  TrainHooks hooks;
  std::function<void(const FoldResult&)> on_fold;
};

// Shared state for the folds of one cross-validation run.
struct CvContext {
  Model model;
  std::vector<PreparedSubject> prepared;
  std::vector<int> assignment;  // fold index per subject
  int batch_size = 0;
};

CvContext prepare_cv(const Dataset& dataset, const ModelConfig& model_cfg,
                     const TrainConfig& train_cfg);

// Trains and tests one fold with parameters seeded from (seed, fold).
FoldResult run_fold(const CvContext& ctx, const TrainConfig& train_cfg, int fold,
                    const TrainHooks& hooks = {});

CvResult cross_validate(const Dataset& dataset, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const CvOptions& options = {});

CvSummary summarize(const std::vector<FoldResult>& folds);

// Per-fold rows followed by mean and std rows; fixed-precision text so that
// identical runs give identical bytes.
void write_summary_tsv(const CvResult& result, const std::filesystem::path& path);
void write_epoch_log_line(std::ostream& os, int fold, const EpochRecord& rec);

struct AblationVariant {
  std::string name;
  bool disentangle = true;
  bool inter_atlas = true;
  bool subject_consistency = true;
  bool population_consistency = true;
};

// Rows in the order of the component ablation table, full model last.
std::vector<AblationVariant> ablation_variants();
ModelConfig apply_variant(ModelConfig cfg, const AblationVariant& v);

struct AblationRow {
  AblationVariant variant;
  CvResult result;
};

std::vector<AblationRow> ablate(const Dataset& dataset, const ModelConfig& model_cfg,
                                const TrainConfig& train_cfg);
void write_ablation_tsv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

}  // namespace atlasfuse

#endif  // ATLASFUSE_TRAINING_HPP_

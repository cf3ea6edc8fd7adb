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
#include "atlasfuse/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "atlasfuse/error.hpp"
#include "atlasfuse/optim.hpp"
#include "atlasfuse/synthgen.hpp"

namespace atlasfuse {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "train config: " + what);
  };
  if (!(init_lr > 0.0) || !(min_lr > 0.0)) fail("learning rates must be positive");
  if (!(min_lr < init_lr)) fail("min_lr must be below init_lr");
  if (patience < 1) fail("patience must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) fail("lr_decay must be in (0, 1)");
  if (batch_size < 0) fail("batch_size must be >= 1 (or 0 for automatic)");
  if (max_epochs < 1) fail("max_epochs must be >= 1");
  if (fold_count < 3) fail("fold_count must be >= 3");
  if (workers < 1) fail("workers must be >= 1");
  weights.validate();
}

int TrainConfig::resolve_batch_size(std::size_t subject_count) const {
  if (batch_size > 0) return batch_size;
  const auto tenth = static_cast<int>(std::ceil(0.1 * static_cast<double>(subject_count)));
  return std::max(2, tenth);
}

namespace {

std::vector<int> labels_of(const std::vector<PreparedSubject>& subjects,
                           const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(subjects[i].label);
  return out;
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b, double w) {
  acc.total += w * b.total;
  acc.classification += w * b.classification;
  acc.subject += w * b.subject;
  acc.population += w * b.population;
  acc.entropy += w * b.entropy;
  acc.orthogonal += w * b.orthogonal;
  acc.pairwise_active = acc.pairwise_active || b.pairwise_active;
}

TotalLoss batch_loss(const Model& model, const std::vector<PreparedSubject>& subjects,
                     const std::vector<std::size_t>& idx, const ParamBinding& binding,
                     const LossWeights& weights) {
  std::vector<ForwardTrace> traces;
  traces.reserve(idx.size());
  for (auto i : idx) traces.push_back(model.forward(subjects[i], binding));
  return total_loss(model, traces, labels_of(subjects, idx), binding, weights);
}

}  // namespace

double evaluate_loss(const Model& model, const std::vector<PreparedSubject>& subjects,
                     const ModelParams& params, const LossWeights& weights,
                     int batch_size, LossBreakdown* breakdown) {
  if (subjects.empty()) throw Error(ErrorCode::kEmptySplit, "no subjects to evaluate");
  const ParamBinding binding(params, false);
  LossBreakdown acc;
  const auto n = subjects.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(n, start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const TotalLoss l = batch_loss(model, subjects, idx, binding, weights);
    add_breakdown(acc, l.breakdown,
                  static_cast<double>(idx.size()) / static_cast<double>(n));
  }
  if (breakdown != nullptr) *breakdown = acc;
  return acc.total;
}

TrainResult train_fold(const Model& model, const std::vector<PreparedSubject>& train,
                       const std::vector<PreparedSubject>& val, ModelParams params,
                       const TrainConfig& cfg, int batch_size, std::uint64_t shuffle_seed,
                       const TrainHooks& hooks) {
  cfg.validate();
  if (train.empty() || val.empty()) {
    throw Error(ErrorCode::kEmptySplit, "training and validation sets must be non-empty");
  }
  TrainResult result;
  Adam adam(params);
  std::mt19937_64 rng(shuffle_seed);
  double lr = cfg.init_lr;
  result.best_val_loss = evaluate_loss(model, val, params, cfg.weights, batch_size);
  result.params = params;
  int stale = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const ParamBinding binding(params, true);
      TotalLoss loss = batch_loss(model, train, idx, binding, cfg.weights);
      add_breakdown(rec.train, loss.breakdown,
                    static_cast<double>(idx.size()) / static_cast<double>(train.size()));
      if (!hooks.freeze_params) {
        loss.total.backward();
        adam.step(params, binding.gradients(), lr);
      }
    }
    rec.val_loss = evaluate_loss(model, val, params, cfg.weights, batch_size);
    rec.improved = rec.val_loss < result.best_val_loss;
    if (rec.improved) {
      result.best_val_loss = rec.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    result.history.push_back(rec);
    result.epochs_ran = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stale >= cfg.patience) {
      lr *= cfg.lr_decay;
      stale = 0;
      result.halving_epochs.push_back(epoch);
    }
    if (lr < cfg.min_lr) break;
  }
  result.final_lr = lr;
  return result;
}

std::vector<Prediction> predict(const Model& model, const std::vector<PreparedSubject>& subjects,
                                const ModelParams& params) {
  const ParamBinding binding(params, false);
  std::vector<Prediction> out;
  for (const auto& s : subjects) {
    const ForwardTrace t = model.forward(s, binding);
    const Eigen::RowVectorXd logits = t.logits.value().row(0);
    Eigen::RowVectorXd p = (logits.array() - logits.maxCoeff()).exp();
    p /= p.sum();
    Prediction pred;
    pred.label = s.label;
    Index arg = 0;
    p.maxCoeff(&arg);
    pred.predicted = static_cast<int>(arg);
    pred.probabilities = p;
    out.push_back(std::move(pred));
  }
  return out;
}

MetricsReport evaluate_predictions(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw Error(ErrorCode::kEmptySplit, "no predictions");
  std::vector<int> pred;
  std::vector<int> labels;
  Matrix scores(static_cast<Index>(predictions.size()), predictions.front().probabilities.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    pred.push_back(predictions[i].predicted);
    labels.push_back(predictions[i].label);
    scores.row(static_cast<Index>(i)) = predictions[i].probabilities;
  }
  return compute_metrics(pred, scores, labels);
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int class_count,
                                  int fold_count, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), -1);
  std::size_t dealt = 0;
  for (int c = 0; c < class_count; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(fold_count)) {
      throw Error(ErrorCode::kTooFewSubjects,
                  "class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " subjects, need " + std::to_string(fold_count));
    }
    std::mt19937_64 rng(synth::derive_seed(seed, 0xF01D0000ULL + static_cast<std::uint64_t>(c)));
    std::shuffle(members.begin(), members.end(), rng);
    for (auto i : members) fold[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(fold_count));
  }
  return fold;
}

FoldSplit split_for_fold(const std::vector<int>& assignment, int fold, int fold_count) {
  FoldSplit s;
  const int val_fold = (fold + 1) % fold_count;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) {
      s.test.push_back(i);
    } else if (assignment[i] == val_fold) {
      s.val.push_back(i);
    } else {
      s.train.push_back(i);
    }
  }
  return s;
}

namespace {

MetricSummary mean_std(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

std::vector<PreparedSubject> gather(const std::vector<PreparedSubject>& all,
                                    const std::vector<std::size_t>& idx) {
  std::vector<PreparedSubject> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

CvSummary summarize(const std::vector<FoldResult>& folds) {
  auto collect = [&folds](auto getter) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(getter(f));
    return mean_std(v);
  };
  CvSummary s;
  s.accuracy = collect([](const FoldResult& f) { return f.test.accuracy; });
  s.precision = collect([](const FoldResult& f) { return f.test.precision; });
  s.recall = collect([](const FoldResult& f) { return f.test.recall; });
  s.micro_f1 = collect([](const FoldResult& f) { return f.test.micro_f1; });
  s.roc_auc = collect([](const FoldResult& f) { return f.test.roc_auc; });
  s.epochs = collect([](const FoldResult& f) { return static_cast<double>(f.epochs_ran); });
  return s;
}

void write_epoch_log_line(std::ostream& os, int fold, const EpochRecord& rec) {
  nlohmann::json j;
  j["fold"] = fold;
  j["epoch"] = rec.epoch;
  j["lr"] = rec.lr;
  j["train"] = {{"total", rec.train.total},
                {"cls", rec.train.classification},
                {"subject", rec.train.subject},
                {"population", rec.train.population},
                {"entropy", rec.train.entropy},
                {"orthogonal", rec.train.orthogonal}};
  j["val_loss"] = rec.val_loss;
  j["improved"] = rec.improved;
  os << j.dump() << '\n';
}

CvContext prepare_cv(const Dataset& dataset, const ModelConfig& model_cfg,
                     const TrainConfig& train_cfg) {
  train_cfg.validate();
  ModelConfig mc = model_cfg;
  mc.class_count = dataset.class_count();
  CvContext ctx{Model(mc, dataset.atlases), {}, {}, 0};
  std::vector<int> labels;
  for (const auto& s : dataset.subjects) {
    ctx.prepared.push_back(ctx.model.prepare(s));
    labels.push_back(s.label);
  }
  ctx.assignment = stratified_folds(labels, dataset.class_count(), train_cfg.fold_count,
                                    synth::derive_seed(train_cfg.seed, 1));
  ctx.batch_size = train_cfg.resolve_batch_size(dataset.subjects.size());
  return ctx;
}

FoldResult run_fold(const CvContext& ctx, const TrainConfig& train_cfg, int fold,
                    const TrainHooks& hooks) {
  if (fold < 0 || fold >= train_cfg.fold_count) {
    throw Error(ErrorCode::kInvalidArgument, "fold index " + std::to_string(fold));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const FoldSplit split = split_for_fold(ctx.assignment, fold, train_cfg.fold_count);
  const auto train = gather(ctx.prepared, split.train);
  const auto val = gather(ctx.prepared, split.val);
  const auto test = gather(ctx.prepared, split.test);
  if (test.empty()) throw Error(ErrorCode::kEmptySplit, "empty test fold");

  const auto fu = static_cast<std::uint64_t>(fold);
  TrainResult tr = train_fold(ctx.model, train, val,
                              ctx.model.init_params(synth::derive_seed(train_cfg.seed, 500 + fu)),
                              train_cfg, ctx.batch_size,
                              synth::derive_seed(train_cfg.seed, 900 + fu), hooks);
  FoldResult fr;
  fr.fold = fold;
  fr.test_indices = split.test;
  fr.test_predictions = predict(ctx.model, test, tr.params);
  fr.test = evaluate_predictions(fr.test_predictions);
  fr.epochs_ran = tr.epochs_ran;
  evaluate_loss(ctx.model, test, tr.params, train_cfg.weights, ctx.batch_size,
                &fr.final_breakdown);
  fr.history = std::move(tr.history);
  fr.params = std::move(tr.params);
  fr.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return fr;
}

CvResult cross_validate(const Dataset& dataset, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, const CvOptions& options) {
  const CvContext ctx = prepare_cv(dataset, model_cfg, train_cfg);
  std::vector<FoldResult> folds(static_cast<std::size_t>(train_cfg.fold_count));
  std::atomic<int> next{0};
  std::mutex callback_mutex;
  std::exception_ptr failure;

  auto one = [&](int f) {
    std::ofstream log;
    TrainHooks hooks = options.hooks;
    if (options.log_dir) {
      log.open(*options.log_dir / ("train_fold" + std::to_string(f) + ".jsonl"));
      if (!log) throw Error(ErrorCode::kIoFailure, "cannot open training log");
      auto user = hooks.on_epoch;
      hooks.on_epoch = [&log, f, user](const EpochRecord& rec) {
        write_epoch_log_line(log, f, rec);
        if (user) user(rec);
      };
    }
    FoldResult fr = run_fold(ctx, train_cfg, f, hooks);
    if (options.on_fold) {
      std::lock_guard<std::mutex> lock(callback_mutex);
      options.on_fold(fr);
    }
    folds[static_cast<std::size_t>(f)] = std::move(fr);
  };

  auto worker = [&]() {
    for (int f = next++; f < train_cfg.fold_count; f = next++) {
      try {
        one(f);
      } catch (...) {
        std::lock_guard<std::mutex> lock(callback_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::min(train_cfg.workers, train_cfg.fold_count);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  CvResult result;
  result.folds = std::move(folds);
  result.summary = summarize(result.folds);
  return result;
}

void write_summary_tsv(const CvResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  char line[256];
  out << "fold\taccuracy\tprecision\trecall\tmicro_f1\troc_auc\tepochs\n";
  for (const auto& f : result.folds) {
    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%d\n", f.fold,
                  f.test.accuracy, f.test.precision, f.test.recall, f.test.micro_f1,
                  f.test.roc_auc, f.epochs_ran);
    out << line;
  }
  const auto& s = result.summary;
  std::snprintf(line, sizeof(line), "mean\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.2f\n",
                s.accuracy.mean, s.precision.mean, s.recall.mean, s.micro_f1.mean,
                s.roc_auc.mean, s.epochs.mean);
  out << line;
  std::snprintf(line, sizeof(line), "std\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.2f\n",
                s.accuracy.std, s.precision.std, s.recall.std, s.micro_f1.std,
                s.roc_auc.std, s.epochs.std);
  out << line;
}

std::vector<AblationVariant> ablation_variants() {
  return {
      {"TF", false, false, false, false},
      {"TF+IA-MP+SC+PC", false, true, true, true},
      {"DisenTF+SC+PC", true, false, true, true},
      {"DisenTF+IA-MP+PC", true, true, false, true},
      {"DisenTF+IA-MP+SC", true, true, true, false},
      {"full", true, true, true, true},
  };
}

ModelConfig apply_variant(ModelConfig cfg, const AblationVariant& v) {
  cfg.disentangle = v.disentangle;
  cfg.inter_atlas = v.inter_atlas;
  cfg.subject_consistency = v.subject_consistency;
  cfg.population_consistency = v.population_consistency;
  return cfg;
}

std::vector<AblationRow> ablate(const Dataset& dataset, const ModelConfig& model_cfg,
                                const TrainConfig& train_cfg) {
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants()) {
    rows.push_back({v, cross_validate(dataset, apply_variant(model_cfg, v), train_cfg)});
  }
  return rows;
}

void write_ablation_tsv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << "variant\tbackbone\tia_mp\tsubject_consistency\tpopulation_consistency"
         "\tacc_mean\tacc_std\tepochs_mean\n";
  char line[256];
  for (const auto& r : rows) {
    const auto& v = r.variant;
    std::snprintf(line, sizeof(line), "%s\t%s\t%d\t%d\t%d\t%.6f\t%.6f\t%.2f\n",
                  v.name.c_str(), v.disentangle ? "DisenTF" : "TF", v.inter_atlas ? 1 : 0,
                  v.subject_consistency ? 1 : 0, v.population_consistency ? 1 : 0,
                  r.result.summary.accuracy.mean, r.result.summary.accuracy.std,
                  r.result.summary.epochs.mean);
    out << line;
  }
}

}  // namespace atlasfuse

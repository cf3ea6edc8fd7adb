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
#include "atlasfuse/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "atlasfuse/error.hpp"
#include "atlasfuse/gradcheck.hpp"
#include "atlasfuse/interpret.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace atlasfuse::cli {
namespace {

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("ATLASFUSE_LOG");
  if (env == nullptr) return LogLevel::kInfo;
  const std::string v(env);
  if (v == "quiet") return LogLevel::kQuiet;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) {
    std::cerr << "[atlasfuse] " << msg << "\n";
  }
}

const std::set<std::string>& commands() {
  static const std::set<std::string> c = {"generate", "train",     "cv",
                                          "ablate",   "gradcheck", "explain"};
  return c;
}

[[noreturn]] void config_error(const std::string& msg) {
  throw Error(ErrorCode::kConfigParse, msg);
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("bad value for '") + key + "'");
  }
}

AtlasSelection parse_selection(const std::string& s) {
  if (s == "both") return AtlasSelection::kBoth;
  if (s == "first") return AtlasSelection::kFirstOnly;
  if (s == "second") return AtlasSelection::kSecondOnly;
  config_error("atlases must be one of both|first|second, got '" + s + "'");
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json metrics_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},   {"precision", m.precision}, {"recall", m.recall},
          {"micro_f1", m.micro_f1}, {"roc_auc", m.roc_auc}};
}

json breakdown_json(const LossBreakdown& b) {
  return {{"total", b.total},     {"classification", b.classification},
          {"subject", b.subject}, {"population", b.population},
          {"entropy", b.entropy}, {"orthogonal", b.orthogonal}};
}

Dataset load_input(const RunConfig& rc) {
  if (rc.data.empty()) config_error("--data is required for " + rc.command);
  if (!fs::is_directory(rc.data)) {
    throw Error(ErrorCode::kManifestMissing, "dataset directory not found: " + rc.data);
  }
  return load_dataset(rc.data);
}

void prepare_out(const RunConfig& rc) {
  if (rc.out.empty()) config_error("--out is required for " + rc.command);
  std::error_code ec;
  fs::create_directories(rc.out, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + rc.out + ": " + ec.message());
  write_json(fs::path(rc.out) / "config.json", rc.effective);
}

int cmd_generate(const RunConfig& rc) {
  prepare_out(rc);
  log(LogLevel::kInfo, "generating " + std::to_string(rc.synth.subject_count) + " subjects");
  const synth::SynthResult res = synth::generate_dataset(rc.synth);
  save_dataset(res.dataset, rc.out);
  synth::write_ground_truth(res.truth, fs::path(rc.out) / "ground_truth.json");
  std::cout << "wrote " << res.dataset.subjects.size() << " subjects to " << rc.out << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const Dataset ds = load_input(rc);
  prepare_out(rc);
  const CvContext ctx = prepare_cv(ds, rc.model, rc.train);
  std::ofstream log_os(fs::path(rc.out) / "train_log.jsonl");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& rec) {
    write_epoch_log_line(log_os, rc.fold, rec);
    log(LogLevel::kDebug, "epoch " + std::to_string(rec.epoch) +
                              " val_loss " + std::to_string(rec.val_loss));
  };
  const FoldResult fr = run_fold(ctx, rc.train, rc.fold, hooks);
  save_params(fr.params, fs::path(rc.out) / "params.json");
  write_json(fs::path(rc.out) / "metrics.json",
             {{"fold", fr.fold},
              {"epochs", fr.epochs_ran},
              {"test", metrics_json(fr.test)},
              {"test_loss", breakdown_json(fr.final_breakdown)}});
  std::printf("fold %d accuracy %.4f auc %.4f epochs %d\n", fr.fold, fr.test.accuracy,
              fr.test.roc_auc, fr.epochs_ran);
  return 0;
}

int cmd_cv(const RunConfig& rc) {
  const Dataset ds = load_input(rc);
  prepare_out(rc);
  const fs::path logs = fs::path(rc.out) / "logs";
  fs::create_directories(logs);
  CvOptions opts;
  opts.log_dir = logs;
  opts.on_fold = [](const FoldResult& fr) {
    log(LogLevel::kInfo, "fold " + std::to_string(fr.fold) + " accuracy " +
                             std::to_string(fr.test.accuracy) + " epochs " +
                             std::to_string(fr.epochs_ran));
  };
  const CvResult res = cross_validate(ds, rc.model, rc.train, opts);
  write_summary_tsv(res, fs::path(rc.out) / "summary.tsv");
  json folds = json::array();
  for (const auto& f : res.folds) {
    folds.push_back({{"fold", f.fold},
                     {"epochs", f.epochs_ran},
                     {"wall_time_seconds", f.wall_time_seconds},
                     {"test", metrics_json(f.test)},
                     {"test_loss", breakdown_json(f.final_breakdown)}});
  }
  write_json(fs::path(rc.out) / "folds.json", folds);
  std::printf("accuracy %.4f +- %.4f  auc %.4f +- %.4f  epochs %.1f\n",
              res.summary.accuracy.mean, res.summary.accuracy.std, res.summary.roc_auc.mean,
              res.summary.roc_auc.std, res.summary.epochs.mean);
  return 0;
}

int cmd_ablate(const RunConfig& rc) {
  const Dataset ds = load_input(rc);
  prepare_out(rc);
  const auto rows = ablate(ds, rc.model, rc.train);
  write_ablation_tsv(rows, fs::path(rc.out) / "ablation.tsv");
  for (const auto& r : rows) {
    std::printf("%-20s accuracy %.4f\n", r.variant.name.c_str(),
                r.result.summary.accuracy.mean);
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& rc) {
  if (!rc.out.empty()) prepare_out(rc);
  const GradCheckInstance inst = make_gradcheck_instance(rc.train.seed);
  GradCheckConfig gc;
  gc.samples = rc.gradcheck_samples;
  gc.seed = rc.train.seed;
  json report = json::object();
  bool ok = true;
  const std::vector<std::pair<std::string, LossWeights>> cases = {
      {"configured", rc.train.weights}, {"zero", LossWeights::none()}};
  for (const auto& [name, w] : cases) {
    const GradCheckReport r = gradient_check(inst.model, inst.params, inst.batch, w, gc);
    ok = ok && r.passed;
    report[name] = {{"max_relative_error", r.max_relative_error},
                    {"worst_tensor", r.worst_tensor},
                    {"worst_index", r.worst_index},
                    {"checked", r.checked},
                    {"per_tensor", r.per_tensor},
                    {"passed", r.passed}};
    std::printf("%s: max relative error %.3e over %lld parameters (%s)\n", name.c_str(),
                r.max_relative_error, static_cast<long long>(r.checked),
                r.passed ? "pass" : "FAIL");
  }
  if (!rc.out.empty()) write_json(fs::path(rc.out) / "gradcheck.json", report);
  return ok ? 0 : 1;
}

int cmd_explain(const RunConfig& rc) {
  const Dataset ds = load_input(rc);
  prepare_out(rc);
  const CvContext ctx = prepare_cv(ds, rc.model, rc.train);
  ModelParams params;
  if (!rc.params_path.empty()) {
    params = load_params(rc.params_path);
  } else {
    params = run_fold(ctx, rc.train, rc.fold).params;
  }
  const FoldSplit split = split_for_fold(ctx.assignment, rc.fold, rc.train.fold_count);
  std::vector<PreparedSubject> test;
  for (auto i : split.test) test.push_back(ctx.prepared[i]);
  const auto preds = predict(ctx.model, test, params);
  std::string cohort;
  const auto chosen = select_cohort(preds, ds.class_count() - 1, &cohort);
  const ParamBinding bound(params, false);
  std::vector<ForwardTrace> traces;
  for (auto i : chosen) traces.push_back(ctx.model.forward(test[i], bound));

  std::optional<synth::GroundTruth> truth;
  fs::path gt_path = rc.ground_truth.empty() ? fs::path(rc.data) / "ground_truth.json"
                                             : fs::path(rc.ground_truth);
  if (fs::exists(gt_path)) truth = synth::read_ground_truth(gt_path);

  json check = json::object();
  for (int s = 0; s < ctx.model.atlas_count(); ++s) {
    const std::string& id = ctx.model.atlas(s).id;
    AttentionMap map = extract_attention_map(ctx.model, traces, id);
    map.cohort = cohort;
    export_heatmap(map, rc.out, rc.top_k);
    if (!truth) continue;
    for (const auto& at : truth->atlases) {
      if (at.atlas_id != id) continue;
      const auto top = top_k_rois(map, rc.top_k);
      const auto& p = at.planted[static_cast<std::size_t>(at.primary)];
      auto in_top = [&](int roi) {
        for (const auto& t : top) {
          if (t.index == roi) return true;
        }
        return false;
      };
      check[id] = {{"roi_a", p.roi_a},
                   {"roi_b", p.roi_b},
                   {"roi_a_in_top", in_top(p.roi_a)},
                   {"roi_b_in_top", in_top(p.roi_b)},
                   {"pair_in_top", in_top(p.roi_a) && in_top(p.roi_b)}};
    }
  }
  if (truth) write_json(fs::path(rc.out) / "planted_check.json", check);
  std::printf("exported attention for %zu subjects (%s)\n", chosen.size(), cohort.c_str());
  return 0;
}

}  // namespace

json default_config() {
  const ModelConfig m;
  const TrainConfig t;
  const synth::SynthConfig s;
  const LossWeights w = LossWeights::adni();
  return {
      {"seed", s.seed},
      {"hidden_dim", m.hidden_dim},
      {"r", m.incompatible_count},
      {"k", m.knn_k},
      {"pool_clusters", m.pool_clusters},
      {"tau", m.temperature},
      {"keep_fraction", m.keep_fraction},
      {"disentangle", true},
      {"inter_atlas", true},
      {"subject_consistency", true},
      {"population_consistency", true},
      {"atlases", "both"},
      {"lambda1", w.subject},
      {"lambda2", w.population},
      {"lambda3", w.entropy},
      {"lambda4", w.orthogonal},
      {"init_lr", 8e-5},
      {"min_lr", t.min_lr},
      {"patience", t.patience},
      {"lr_decay", t.lr_decay},
      {"batch_size", t.batch_size},
      {"max_epochs", t.max_epochs},
      {"folds", t.fold_count},
      {"workers", t.workers},
      {"fold", 0},
      {"top_k", 10},
      {"gradcheck_samples", 240},
      {"subjects", s.subject_count},
      {"classes", s.class_count},
      {"voxels", s.voxel_count},
      {"timepoints", s.timepoints},
      {"effect_size", s.effect_size},
      {"noise_std", s.noise_std},
      {"background_communities", s.background_communities},
      {"swap_fraction", s.swap_fraction},
      {"planted_fraction", s.planted_fraction},
  };
}

RunConfig resolve(const std::string& command, const json& file_config,
                  const json& overrides) {
  if (commands().count(command) == 0) {
    throw Error(ErrorCode::kUnknownCommand, "unknown command '" + command + "'");
  }
  json cfg = default_config();
  for (const json* layer : {&file_config, &overrides}) {
    if (layer->is_null()) continue;
    if (!layer->is_object()) config_error("config must be a JSON object");
    for (const auto& [key, value] : layer->items()) {
      if (!cfg.contains(key)) config_error("unknown config key '" + key + "'");
      cfg[key] = value;
    }
  }

  RunConfig rc;
  rc.command = command;
  rc.effective = cfg;
  rc.fold = get<int>(cfg, "fold");
  rc.top_k = get<int>(cfg, "top_k");
  rc.gradcheck_samples = get<int>(cfg, "gradcheck_samples");
  const auto seed = get<std::uint64_t>(cfg, "seed");

  ModelConfig& m = rc.model;
  m.hidden_dim = get<int>(cfg, "hidden_dim");
  m.incompatible_count = get<int>(cfg, "r");
  m.knn_k = get<int>(cfg, "k");
  m.pool_clusters = get<int>(cfg, "pool_clusters");
  m.temperature = get<double>(cfg, "tau");
  m.keep_fraction = get<double>(cfg, "keep_fraction");
  m.disentangle = get<bool>(cfg, "disentangle");
  m.inter_atlas = get<bool>(cfg, "inter_atlas");
  m.subject_consistency = get<bool>(cfg, "subject_consistency");
  m.population_consistency = get<bool>(cfg, "population_consistency");
  m.atlas_selection = parse_selection(get<std::string>(cfg, "atlases"));

  TrainConfig& t = rc.train;
  t.seed = seed;
  t.weights = {get<double>(cfg, "lambda1"), get<double>(cfg, "lambda2"),
               get<double>(cfg, "lambda3"), get<double>(cfg, "lambda4")};
  t.init_lr = get<double>(cfg, "init_lr");
  t.min_lr = get<double>(cfg, "min_lr");
  t.patience = get<int>(cfg, "patience");
  t.lr_decay = get<double>(cfg, "lr_decay");
  t.batch_size = get<int>(cfg, "batch_size");
  t.max_epochs = get<int>(cfg, "max_epochs");
  t.fold_count = get<int>(cfg, "folds");
  t.workers = get<int>(cfg, "workers");
  t.validate();
  if (rc.fold < 0 || rc.fold >= t.fold_count) {
    throw Error(ErrorCode::kInvalidArgument, "fold must lie in [0, folds)");
  }
  if (rc.top_k < 1) throw Error(ErrorCode::kInvalidArgument, "top_k must be positive");
  if (rc.gradcheck_samples < 1) {
    throw Error(ErrorCode::kInvalidArgument, "gradcheck_samples must be positive");
  }

  synth::SynthConfig& s = rc.synth;
  s.seed = seed;
  s.subject_count = get<int>(cfg, "subjects");
  s.class_count = get<int>(cfg, "classes");
  s.voxel_count = get<int>(cfg, "voxels");
  s.timepoints = get<int>(cfg, "timepoints");
  s.effect_size = get<double>(cfg, "effect_size");
  s.noise_std = get<double>(cfg, "noise_std");
  s.background_communities = get<int>(cfg, "background_communities");
  s.swap_fraction = get<double>(cfg, "swap_fraction");
  s.planted_fraction = get<double>(cfg, "planted_fraction");
  s.validate();
  return rc;
}

int run(const std::vector<std::string>& args) {
  try {
    if (args.size() < 2) {
      throw Error(ErrorCode::kUnknownCommand,
                  "usage: atlasfuse <generate|train|cv|ablate|gradcheck|explain> [options]");
    }
    const std::string command = args[1];
    if (commands().count(command) == 0) {
      throw Error(ErrorCode::kUnknownCommand, "unknown command '" + command + "'");
    }

    CLI::App app("atlasfuse " + command);
    std::string data, out, params_path, ground_truth, config_path;
    json overrides = json::object();
    app.add_option("--data", data, "dataset directory");
    app.add_option("--out", out, "output directory");
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--params", params_path, "trained parameters (explain)");
    app.add_option("--ground-truth", ground_truth, "ground_truth.json (explain)");

    const json defaults = default_config();
    for (const auto& [key, value] : defaults.items()) {
      const std::string flag = "--" + key;
      const std::string k = key;
      if (value.is_boolean()) {
        app.add_option_function<bool>(
            flag, [&overrides, k](const bool& v) { overrides[k] = v; }, "on/off");
      } else if (value.is_string()) {
        app.add_option_function<std::string>(
            flag, [&overrides, k](const std::string& v) { overrides[k] = v; });
      } else if (value.is_number_float()) {
        app.add_option_function<double>(
            flag, [&overrides, k](const double& v) { overrides[k] = v; });
      } else if (value.is_number_unsigned()) {
        app.add_option_function<std::uint64_t>(
            flag, [&overrides, k](const std::uint64_t& v) { overrides[k] = v; });
      } else {
        app.add_option_function<long long>(
            flag, [&overrides, k](const long long& v) { overrides[k] = v; });
      }
    }

    std::vector<std::string> rest(args.begin() + 2, args.end());
    std::reverse(rest.begin(), rest.end());
    try {
      app.parse(rest);
    } catch (const CLI::CallForHelp&) {
      std::cout << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      config_error(e.what());
    }

    json file_config;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) config_error("cannot read config file " + config_path);
      try {
        file_config = json::parse(is);
      } catch (const json::exception& e) {
        config_error(config_path + ": " + e.what());
      }
    }

    RunConfig rc = resolve(command, file_config, overrides);
    rc.data = data;
    rc.out = out;
    rc.params_path = params_path;
    rc.ground_truth = ground_truth;
    if (!params_path.empty() && !fs::exists(params_path)) {
      throw Error(ErrorCode::kIoFailure, "params file not found: " + params_path);
    }
    if (!ground_truth.empty() && !fs::exists(ground_truth)) {
      throw Error(ErrorCode::kIoFailure, "ground truth not found: " + ground_truth);
    }

    if (command == "generate") return cmd_generate(rc);
    if (command == "train") return cmd_train(rc);
    if (command == "cv") return cmd_cv(rc);
    if (command == "ablate") return cmd_ablate(rc);
    if (command == "gradcheck") return cmd_gradcheck(rc);
    return cmd_explain(rc);
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
    return (e.code() == ErrorCode::kUnknownCommand || e.code() == ErrorCode::kConfigParse)
               ? 2
               : 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace atlasfuse::cli

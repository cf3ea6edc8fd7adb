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
#include "atlasfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <utility>

#include "atlasfuse/synthgen.hpp"

namespace atlasfuse {

namespace {

double loss_value(const Model& model, const ModelParams& params,
                  const std::vector<PreparedSubject>& batch, const LossWeights& weights) {
  const ParamBinding binding(params, false);
  std::vector<ForwardTrace> traces;
  std::vector<int> labels;
  for (const auto& s : batch) {
    traces.push_back(model.forward(s, binding));
    labels.push_back(s.label);
  }
  return total_loss(model, traces, labels, binding, weights).total.scalar();
}

}  // namespace

GradCheckReport gradient_check(const Model& model, const ModelParams& params,
                               const std::vector<PreparedSubject>& batch,
                               const LossWeights& weights, const GradCheckConfig& cfg) {
  ModelParams analytic;
  {
    const ParamBinding binding(params, true);
    std::vector<ForwardTrace> traces;
    std::vector<int> labels;
    for (const auto& s : batch) {
      traces.push_back(model.forward(s, binding));
      labels.push_back(s.label);
    }
    total_loss(model, traces, labels, binding, weights).total.backward();
    analytic = binding.gradients();
  }
  if (!cfg.corrupt_tensor.empty()) analytic.at(cfg.corrupt_tensor) *= 2.0;

  // One scalar from every tensor, then uniform draws over the rest.
  std::vector<std::pair<std::string, Index>> all;
  for (const auto& [name, m] : params.tensors) {
    for (Index i = 0; i < m.size(); ++i) all.emplace_back(name, i);
  }
  std::mt19937_64 rng(cfg.seed);
  std::set<std::pair<std::string, Index>> chosen;
  for (const auto& [name, m] : params.tensors) {
    std::uniform_int_distribution<Index> pick(0, m.size() - 1);
    chosen.emplace(name, pick(rng));
  }
  std::shuffle(all.begin(), all.end(), rng);
  for (const auto& e : all) {
    if (static_cast<int>(chosen.size()) >= cfg.samples) break;
    chosen.insert(e);
  }

  GradCheckReport report;
  ModelParams probe = params;
  for (const auto& [name, index] : chosen) {
    Matrix& tensor = probe.at(name);
    const double original = tensor(index);
    tensor(index) = original + cfg.step;
    const double up = loss_value(model, probe, batch, weights);
    tensor(index) = original - cfg.step;
    const double down = loss_value(model, probe, batch, weights);
    tensor(index) = original;

    const double numeric = (up - down) / (2.0 * cfg.step);
    const double exact = analytic.at(name)(index);
    const double denom = std::max({std::abs(numeric), std::abs(exact), cfg.floor});
    const double rel = std::abs(numeric - exact) / denom;
    ++report.per_tensor[name];
    ++report.checked;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_tensor = name;
      report.worst_index = index;
    }
  }
  report.passed = report.max_relative_error < cfg.tolerance;
  return report;
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed) {
  synth::SynthConfig sc;
  sc.seed = seed;
  sc.voxel_count = 64;
  sc.timepoints = 40;
  sc.atlases = {{6, synth::derive_seed(seed, 11)}, {8, synth::derive_seed(seed, 12)}};
  sc.subject_count = 3;
  sc.class_count = 2;
  sc.background_communities = 4;
  sc.noise_std = 1.0;
  const synth::SynthResult data = synth::generate_dataset(sc);

  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.incompatible_count = 2;
  mc.knn_k = 3;
  mc.pool_clusters = 3;
  mc.class_count = 2;
  Model model(mc, data.dataset.atlases);
  ModelParams params = model.init_params(synth::derive_seed(seed, 13));
  // Non-trivial biases and norm affines so their gradients are exercised.
  std::mt19937_64 rng(synth::derive_seed(seed, 14));
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (auto& [name, m] : params.tensors) {
    if (name.find("_b") != std::string::npos || name.find("gamma") != std::string::npos ||
        name.find("beta") != std::string::npos) {
      for (Index i = 0; i < m.size(); ++i) m(i) += jitter(rng);
    }
  }
  std::vector<PreparedSubject> batch;
  for (const auto& s : data.dataset.subjects) batch.push_back(model.prepare(s));
  return {std::move(model), std::move(params), std::move(batch)};
}

}  // namespace atlasfuse

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
#include "atlasfuse/optim.hpp"

#include <cmath>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

Adam::Adam(const ModelParams& like, AdamConfig config) : config_(config) {
  for (const auto& [name, m] : like.tensors) {
    first_.tensors.emplace(name, Matrix::Zero(m.rows(), m.cols()));
    second_.tensors.emplace(name, Matrix::Zero(m.rows(), m.cols()));
  }
}

void Adam::step(ModelParams& params, const ModelParams& grads, double lr) {
  for (const auto& [name, g] : grads.tensors) {
    if (!g.allFinite()) {
      throw Error(ErrorCode::kNonFiniteGradient, "gradient of '" + name + "'");
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params.tensors) {
    const Matrix& g = grads.at(name);
    Matrix& m = first_.at(name);
    Matrix& v = second_.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "gradient shape for '" + name + "'");
    }
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace atlasfuse

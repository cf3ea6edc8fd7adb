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
#ifndef ATLASFUSE_GRADCHECK_HPP_
#define ATLASFUSE_GRADCHECK_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atlasfuse/losses.hpp"
#include "atlasfuse/model.hpp"

namespace atlasfuse {

struct GradCheckConfig {
  int samples = 240;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error; below it the error is
  // effectively absolute.
  double floor = 1e-6;
  std::uint64_t seed = 0;
  // Test hook: scale this tensor's analytic gradient by 2.
  std::string corrupt_tensor;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  Index worst_index = 0;
  Index checked = 0;
  std::map<std::string, int> per_tensor;
  bool passed = false;
};

GradCheckReport gradient_check(const Model& model, const ModelParams& params,
                               const std::vector<PreparedSubject>& batch,
                               const LossWeights& weights, const GradCheckConfig& cfg);

// Tiny instance: atlases of 6 and 8 ROIs, d = 8, r = 2, n' = 3, 3 subjects.
struct GradCheckInstance {
  Model model;
  ModelParams params;
  std::vector<PreparedSubject> batch;
};

GradCheckInstance make_gradcheck_instance(std::uint64_t seed);

}  // namespace atlasfuse

#endif  // ATLASFUSE_GRADCHECK_HPP_

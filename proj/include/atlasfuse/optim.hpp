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
#ifndef ATLASFUSE_OPTIM_HPP_
#define ATLASFUSE_OPTIM_HPP_

#include "atlasfuse/model.hpp"

namespace atlasfuse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam without weight decay. Moment buffers mirror the
// parameter store they were constructed from.
class Adam {
 public:
  explicit Adam(const ModelParams& like, AdamConfig config = {});

  // Throws NonFiniteGradient before touching any parameter.
  void step(ModelParams& params, const ModelParams& grads, double lr);
  long steps() const { return step_; }

 private:
  AdamConfig config_;
  ModelParams first_;
  ModelParams second_;
  long step_ = 0;
};

}  // namespace atlasfuse

#endif  // ATLASFUSE_OPTIM_HPP_

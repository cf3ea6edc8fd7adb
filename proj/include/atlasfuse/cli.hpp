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
#ifndef ATLASFUSE_CLI_HPP_
#define ATLASFUSE_CLI_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "atlasfuse/model.hpp"
#include "atlasfuse/synthgen.hpp"
#include "atlasfuse/training.hpp"

namespace atlasfuse::cli {

// Fully resolved settings for one command: defaults, then the JSON config
// file, then command-line flags.
struct RunConfig {
  std::string command;
  std::string data;
  std::string out;
  std::string params_path;
  std::string ground_truth;
  int fold = 0;
  int top_k = 10;
  int gradcheck_samples = 240;
  ModelConfig model;
  TrainConfig train;
  synth::SynthConfig synth;
  // Hyperparameters as written to <out>/config.json.
  nlohmann::json effective;
};

nlohmann::json default_config();
RunConfig resolve(const std::string& command, const nlohmann::json& file_config,
                  const nlohmann::json& overrides);

// argv[0] is the program name. Returns the process exit code; failures print
// one JSON error line on stderr.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace atlasfuse::cli

#endif  // ATLASFUSE_CLI_HPP_

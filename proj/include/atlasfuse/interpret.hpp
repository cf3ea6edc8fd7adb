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
#ifndef ATLASFUSE_INTERPRET_HPP_
#define ATLASFUSE_INTERPRET_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "atlasfuse/model.hpp"
#include "atlasfuse/training.hpp"

namespace atlasfuse {

struct RankedRoi {
  Index index = 0;
  std::string name;
  double score = 0.0;
};

// Cohort-mean attention restricted to ROI rows and columns.
struct AttentionMap {
  std::string atlas_id;
  std::vector<std::string> roi_names;
  Matrix matrix;                // n x n, non-negative
  Eigen::VectorXd saliency;     // column sums of `matrix`: attention received
  std::vector<RankedRoi> top;   // filled by export or by callers
  std::string cohort;           // how subjects were selected
  Index cohort_size = 0;
};

AttentionMap extract_attention_map(const Model& model, const std::vector<ForwardTrace>& traces,
                                   const std::string& atlas_id);

// Descending saliency, ties by ROI index.
std::vector<RankedRoi> top_k_rois(const AttentionMap& map, Index k = 10);

// Writes attention_<atlas>.json and attention_<atlas>.csv under `dir`.
void export_heatmap(const AttentionMap& map, const std::filesystem::path& dir, Index k = 10);
AttentionMap read_heatmap(const std::filesystem::path& json_path);
Matrix read_heatmap_csv(const std::filesystem::path& csv_path);

// Correctly classified subjects of `positive_class`. Falls back to every
// subject of that class when none is correct; `cohort` names the rule used.
std::vector<std::size_t> select_cohort(const std::vector<Prediction>& predictions,
                                       int positive_class, std::string* cohort);

}  // namespace atlasfuse

#endif  // ATLASFUSE_INTERPRET_HPP_

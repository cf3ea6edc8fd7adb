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
#ifndef ATLASFUSE_CONNECTOME_HPP_
#define ATLASFUSE_CONNECTOME_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "atlasfuse/autograd.hpp"

namespace atlasfuse {

// Parcellation metadata. Centroids are n x 3, millimeters.
struct Atlas {
  std::string id;
  std::vector<std::string> roi_names;
  Matrix centroids;

  Index roi_count() const { return static_cast<Index>(roi_names.size()); }
  void validate() const;
};

// One subject's ROI x ROI correlation matrix under one atlas.
struct BrainNetwork {
  std::string atlas_id;
  Matrix matrix;

  Index roi_count() const { return matrix.rows(); }
  void validate() const;
};

struct Subject {
  std::string id;
  std::map<std::string, BrainNetwork> networks;  // keyed by atlas id
  int label = 0;
};

struct Dataset {
  std::vector<Atlas> atlases;
  std::vector<Subject> subjects;
  std::vector<std::string> class_names;

  int class_count() const { return static_cast<int>(class_names.size()); }
  const Atlas& atlas(const std::string& id) const;
  void validate() const;
};

// Pearson correlation between every pair of rows of an n x T signal matrix.
// The diagonal is set to exactly 1.
BrainNetwork pearson_connectivity(const Matrix& signals,
                                  std::string atlas_id = {});

// Binary adjacency keeping the ceil(keep_fraction * n(n-1)/2) undirected
// edges with the largest signed correlation. Ties go to the smaller (i, j).
// Symmetric, zero diagonal.
Matrix sparsify_topk(const Matrix& x, double keep_fraction = 0.20);

// Per-subject matrix file: "AFNW", u32 version, u32 n, u32 reserved, then
// n*n little-endian float64 in row-major order.
void write_network_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_network_file(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace atlasfuse

#endif  // ATLASFUSE_CONNECTOME_HPP_

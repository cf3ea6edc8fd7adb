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
#ifndef ATLASFUSE_SYNTHGEN_HPP_
#define ATLASFUSE_SYNTHGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "atlasfuse/connectome.hpp"

namespace atlasfuse::synth {

struct AtlasSpec {
  int roi_count = 20;
  std::uint64_t partition_seed = 1;
};

struct SynthConfig {
  std::uint64_t seed = 7;
  int voxel_count = 400;
  int timepoints = 150;
  std::vector<AtlasSpec> atlases = {{20, 101}, {24, 202}};
  int subject_count = 200;
  int class_count = 2;
  // Correlation planted between each designated community pair for every
  // class >= 1.
  double effect_size = 0.5;
  double noise_std = 2.5;
  // Background factors shared by contiguous voxel blocks.
  int background_communities = 10;
  // Fraction of voxels reassigned by random swaps after contiguous blocking.
  double swap_fraction = 0.3;
  // Share of a planted ROI's voxels that carry the planted factor.
  double planted_fraction = 0.5;
  double voxel_spacing_mm = 4.0;

  void validate() const;
};

// One planted community pair, anchored on two ROIs of `anchor_atlas`.
struct PlantedPair {
  int anchor_atlas = 0;
  int community_a = 0;  // factor index
  int community_b = 0;
};

// ROI pair in one atlas that best captures a planted community pair.
struct PlantedRoiPair {
  int pair_index = 0;
  int roi_a = 0;
  int roi_b = 0;
  double expected_corr_control = 0.0;
  double expected_corr_effect = 0.0;
};

struct AtlasTruth {
  std::string atlas_id;
  std::vector<int> voxel_to_roi;
  std::vector<PlantedRoiPair> planted;  // one entry per PlantedPair
  // Index into `planted` with the largest expected class gap.
  int primary = 0;
};

struct GroundTruth {
  double effect_size = 0.0;
  double noise_std = 0.0;
  std::vector<int> voxel_to_community;
  std::vector<PlantedPair> pairs;
  // Factor covariance for control subjects and for classes >= 1.
  Matrix factor_cov_control;
  Matrix factor_cov_effect;
  std::vector<AtlasTruth> atlases;
};

struct SynthResult {
  Dataset dataset;
  GroundTruth truth;
};

// Deterministic 3D lattice position (mm) of each voxel, row-major fill.
Matrix voxel_positions(int voxel_count, double spacing_mm);

// Contiguous blocks followed by `swap_fraction * m` random swaps.
std::vector<int> make_partition(int voxel_count, int roi_count,
                                double swap_fraction, std::uint64_t seed);

// Mean member-voxel position per ROI.
Matrix synth_atlas_centroids(const std::vector<int>& voxel_to_roi,
                             int roi_count, const Matrix& positions);

// Population correlation between ROI signals i and j under a factor
// covariance; used for ground truth and exposed for tests.
double expected_roi_correlation(const std::vector<int>& voxel_to_roi,
                                const std::vector<int>& voxel_to_community,
                                const Matrix& factor_cov, double noise_std,
                                int roi_i, int roi_j);

SynthResult generate_dataset(const SynthConfig& cfg);

void write_ground_truth(const GroundTruth& truth,
                        const std::filesystem::path& path);
GroundTruth read_ground_truth(const std::filesystem::path& path);

// Stream seed derived from (seed, stream id) via SplitMix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace atlasfuse::synth

#endif  // ATLASFUSE_SYNTHGEN_HPP_

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
#include "atlasfuse/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "atlasfuse/error.hpp"

namespace atlasfuse::synth {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "synth config: " + what);
  };
  if (voxel_count < 2) fail("voxel_count must be >= 2");
  if (timepoints < 3) {
    throw Error(ErrorCode::kTooFewTimepoints, "synth config: timepoints < 3");
  }
  if (atlases.empty()) fail("at least one atlas is required");
  for (const auto& a : atlases) {
    if (a.roi_count < 2) fail("roi_count must be >= 2");
    if (a.roi_count > voxel_count) {
      throw Error(ErrorCode::kEmptyRoi,
                  "more ROIs than voxels leaves a partition cell empty");
    }
  }
  if (subject_count < class_count) fail("fewer subjects than classes");
  if (class_count < 2) fail("class_count must be >= 2");
  if (!(effect_size >= 0.0 && effect_size <= 0.9)) {
    fail("effect_size must be in [0, 0.9]");
  }
  if (!(noise_std > 0.0)) fail("noise_std must be > 0");
  if (background_communities < 1 || background_communities > voxel_count) {
    fail("background_communities out of range");
  }
  if (!(swap_fraction >= 0.0 && swap_fraction <= 1.0)) {
    fail("swap_fraction must be in [0, 1]");
  }
  if (!(planted_fraction > 0.0 && planted_fraction <= 1.0)) {
    fail("planted_fraction must be in (0, 1]");
  }
}

Matrix voxel_positions(int voxel_count, double spacing_mm) {
  int side = 1;
  while (side * side * side < voxel_count) ++side;
  Matrix pos(voxel_count, 3);
  for (int v = 0; v < voxel_count; ++v) {
    pos(v, 0) = spacing_mm * (v / (side * side));
    pos(v, 1) = spacing_mm * ((v / side) % side);
    pos(v, 2) = spacing_mm * (v % side);
  }
  return pos;
}

std::vector<int> make_partition(int voxel_count, int roi_count,
                                double swap_fraction, std::uint64_t seed) {
  std::vector<int> roi(static_cast<std::size_t>(voxel_count));
  for (int r = 0; r < roi_count; ++r) {
    const auto begin = static_cast<int>(
        static_cast<long long>(r) * voxel_count / roi_count);
    const auto end = static_cast<int>(
        static_cast<long long>(r + 1) * voxel_count / roi_count);
    if (end <= begin) {
      throw Error(ErrorCode::kEmptyRoi, "ROI " + std::to_string(r) + " is empty");
    }
    std::fill(roi.begin() + begin, roi.begin() + end, r);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, voxel_count - 1);
  const auto swaps = static_cast<int>(std::lround(swap_fraction * voxel_count));
  for (int s = 0; s < swaps; ++s) {
    const int u = pick(rng);
    const int v = pick(rng);
    std::swap(roi[static_cast<std::size_t>(u)], roi[static_cast<std::size_t>(v)]);
  }
  return roi;
}

Matrix synth_atlas_centroids(const std::vector<int>& voxel_to_roi,
                             int roi_count, const Matrix& positions) {
  Matrix c = Matrix::Zero(roi_count, 3);
  std::vector<int> counts(static_cast<std::size_t>(roi_count), 0);
  for (std::size_t v = 0; v < voxel_to_roi.size(); ++v) {
    const int r = voxel_to_roi[v];
    c.row(r) += positions.row(static_cast<Index>(v));
    ++counts[static_cast<std::size_t>(r)];
  }
  for (int r = 0; r < roi_count; ++r) {
    if (counts[static_cast<std::size_t>(r)] == 0) {
      throw Error(ErrorCode::kEmptyRoi, "ROI " + std::to_string(r) + " is empty");
    }
    c.row(r) /= counts[static_cast<std::size_t>(r)];
  }
  return c;
}

namespace {

// Community-membership fractions of one ROI, plus its size.
Eigen::VectorXd roi_weights(const std::vector<int>& voxel_to_roi,
                            const std::vector<int>& voxel_to_community,
                            Index community_count, int roi, int* size) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(community_count);
  int count = 0;
  for (std::size_t v = 0; v < voxel_to_roi.size(); ++v) {
    if (voxel_to_roi[v] == roi) {
      w(voxel_to_community[v]) += 1.0;
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorCode::kEmptyRoi, "ROI " + std::to_string(roi) + " is empty");
  }
  *size = count;
  return w / count;
}

}  // namespace

double expected_roi_correlation(const std::vector<int>& voxel_to_roi,
                                const std::vector<int>& voxel_to_community,
                                const Matrix& factor_cov, double noise_std,
                                int roi_i, int roi_j) {
  int ni = 0;
  int nj = 0;
  const Index k = factor_cov.rows();
  const Eigen::VectorXd wi =
      roi_weights(voxel_to_roi, voxel_to_community, k, roi_i, &ni);
  const Eigen::VectorXd wj =
      roi_weights(voxel_to_roi, voxel_to_community, k, roi_j, &nj);
  const double s2 = noise_std * noise_std;
  const double var_i = wi.dot(factor_cov * wi) + s2 / ni;
  const double var_j = wj.dot(factor_cov * wj) + s2 / nj;
  double cov = wi.dot(factor_cov * wj);
  if (roi_i == roi_j) cov += s2 / ni;
  return cov / std::sqrt(var_i * var_j);
}

namespace {

std::string atlas_id_for(std::size_t index, int roi_count) {
  return std::string(1, static_cast<char>('a' + index)) +
         std::to_string(roi_count);
}

std::string two_digit(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", v);
  return buf;
}

int best_roi_for(const std::vector<int>& voxel_to_roi,
                 const std::vector<int>& voxel_to_community, int roi_count,
                 int community, int exclude) {
  std::vector<int> hits(static_cast<std::size_t>(roi_count), 0);
  for (std::size_t v = 0; v < voxel_to_roi.size(); ++v) {
    if (voxel_to_community[v] == community) ++hits[voxel_to_roi[v]];
  }
  int best = -1;
  for (int r = 0; r < roi_count; ++r) {
    if (r == exclude) continue;
    if (best < 0 || hits[r] > hits[best]) best = r;
  }
  return best;
}

}  // namespace

SynthResult generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const int m = cfg.voxel_count;
  const auto atlas_count = cfg.atlases.size();

  std::vector<std::vector<int>> partitions;
  for (const auto& spec : cfg.atlases) {
    partitions.push_back(
        make_partition(m, spec.roi_count, cfg.swap_fraction, spec.partition_seed));
  }

  // Background communities are contiguous voxel blocks; planted communities
  // carve a share of voxels out of two anchor ROIs per atlas.
  GroundTruth truth;
  truth.effect_size = cfg.effect_size;
  truth.noise_std = cfg.noise_std;
  truth.voxel_to_community.resize(static_cast<std::size_t>(m));
  for (int v = 0; v < m; ++v) {
    truth.voxel_to_community[static_cast<std::size_t>(v)] = static_cast<int>(
        static_cast<long long>(v) * cfg.background_communities / m);
  }
  std::vector<bool> claimed(static_cast<std::size_t>(m), false);
  int next_community = cfg.background_communities;
  for (std::size_t x = 0; x < atlas_count; ++x) {
    const int n = cfg.atlases[x].roi_count;
    const int x1 = static_cast<int>(x) + 1;
    const int anchors[2] = {n * x1 / 5 % n, n * (x1 + 2) / 5 % n};
    PlantedPair pair;
    pair.anchor_atlas = static_cast<int>(x);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED0000ULL + x));
    for (int side = 0; side < 2; ++side) {
      std::vector<int> members;
      for (int v = 0; v < m; ++v) {
        if (partitions[x][static_cast<std::size_t>(v)] == anchors[side] &&
            !claimed[static_cast<std::size_t>(v)]) {
          members.push_back(v);
        }
      }
      std::shuffle(members.begin(), members.end(), rng);
      const auto take = static_cast<std::size_t>(std::lround(
          cfg.planted_fraction *
          static_cast<double>(std::count(partitions[x].begin(),
                                         partitions[x].end(), anchors[side]))));
      members.resize(std::min(take, members.size()));
      if (members.empty()) {
        throw Error(ErrorCode::kEmptyRoi, "planted community has no voxels");
      }
      for (int v : members) {
        truth.voxel_to_community[static_cast<std::size_t>(v)] = next_community;
        claimed[static_cast<std::size_t>(v)] = true;
      }
      (side == 0 ? pair.community_a : pair.community_b) = next_community++;
    }
    truth.pairs.push_back(pair);
  }

  const int k = next_community;
  truth.factor_cov_control = Matrix::Identity(k, k);
  truth.factor_cov_effect = truth.factor_cov_control;
  for (const auto& p : truth.pairs) {
    truth.factor_cov_effect(p.community_a, p.community_b) = cfg.effect_size;
    truth.factor_cov_effect(p.community_b, p.community_a) = cfg.effect_size;
  }
  Eigen::LLT<Matrix> chol_control(truth.factor_cov_control);
  Eigen::LLT<Matrix> chol_effect(truth.factor_cov_effect);
  if (chol_effect.info() != Eigen::Success) {
    throw Error(ErrorCode::kDegenerateCovariance,
                "planted factor covariance is not positive definite");
  }
  const Matrix l_control = chol_control.matrixL();
  const Matrix l_effect = chol_effect.matrixL();

  const Matrix positions = voxel_positions(m, cfg.voxel_spacing_mm);
  Dataset ds;
  ds.class_names.push_back("control");
  for (int c = 1; c < cfg.class_count; ++c) {
    ds.class_names.push_back(cfg.class_count == 2 ? "effect"
                                                  : "effect" + std::to_string(c));
  }
  for (std::size_t x = 0; x < atlas_count; ++x) {
    const int n = cfg.atlases[x].roi_count;
    Atlas atlas;
    atlas.id = atlas_id_for(x, n);
    for (int r = 0; r < n; ++r) atlas.roi_names.push_back(atlas.id + "_roi" + two_digit(r));
    atlas.centroids = synth_atlas_centroids(partitions[x], n, positions);
    ds.atlases.push_back(std::move(atlas));

    AtlasTruth at;
    at.atlas_id = ds.atlases.back().id;
    at.voxel_to_roi = partitions[x];
    double best_gap = -1.0;
    for (std::size_t p = 0; p < truth.pairs.size(); ++p) {
      PlantedRoiPair rp;
      rp.pair_index = static_cast<int>(p);
      rp.roi_a = best_roi_for(partitions[x], truth.voxel_to_community, n,
                              truth.pairs[p].community_a, -1);
      rp.roi_b = best_roi_for(partitions[x], truth.voxel_to_community, n,
                              truth.pairs[p].community_b, rp.roi_a);
      rp.expected_corr_control = expected_roi_correlation(
          partitions[x], truth.voxel_to_community, truth.factor_cov_control,
          cfg.noise_std, rp.roi_a, rp.roi_b);
      rp.expected_corr_effect = expected_roi_correlation(
          partitions[x], truth.voxel_to_community, truth.factor_cov_effect,
          cfg.noise_std, rp.roi_a, rp.roi_b);
      const double gap = rp.expected_corr_effect - rp.expected_corr_control;
      if (gap > best_gap) {
        best_gap = gap;
        at.primary = static_cast<int>(p);
      }
      at.planted.push_back(rp);
    }
    truth.atlases.push_back(std::move(at));
  }

  // Per-subject streams make generation order-independent.
  const int t = cfg.timepoints;
  for (int i = 0; i < cfg.subject_count; ++i) {
    Subject s;
    char id[32];
    std::snprintf(id, sizeof(id), "sub-%04d", i);
    s.id = id;
    s.label = i % cfg.class_count;
    std::mt19937_64 rng(derive_seed(cfg.seed, 1000000ULL + static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix z(k, t);
    for (Index r = 0; r < k; ++r) {
      for (Index c = 0; c < t; ++c) z(r, c) = normal(rng);
    }
    const Matrix factors = (s.label == 0 ? l_control : l_effect) * z;
    Matrix voxels(m, t);
    for (int v = 0; v < m; ++v) {
      const int c = truth.voxel_to_community[static_cast<std::size_t>(v)];
      for (Index col = 0; col < t; ++col) {
        voxels(v, col) = factors(c, col) + cfg.noise_std * normal(rng);
      }
    }
    for (std::size_t x = 0; x < atlas_count; ++x) {
      const int n = cfg.atlases[x].roi_count;
      Matrix roi_signal = Matrix::Zero(n, t);
      std::vector<int> counts(static_cast<std::size_t>(n), 0);
      for (int v = 0; v < m; ++v) {
        const int r = partitions[x][static_cast<std::size_t>(v)];
        roi_signal.row(r) += voxels.row(v);
        ++counts[static_cast<std::size_t>(r)];
      }
      for (int r = 0; r < n; ++r) roi_signal.row(r) /= counts[static_cast<std::size_t>(r)];
      const auto& id = ds.atlases[x].id;
      s.networks.emplace(id, pearson_connectivity(roi_signal, id));
    }
    ds.subjects.push_back(std::move(s));
  }
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

void write_ground_truth(const GroundTruth& truth,
                        const std::filesystem::path& path) {
  json j;
  j["effect_size"] = truth.effect_size;
  j["noise_std"] = truth.noise_std;
  j["voxel_to_community"] = truth.voxel_to_community;
  j["pairs"] = json::array();
  for (const auto& p : truth.pairs) {
    j["pairs"].push_back({{"anchor_atlas", p.anchor_atlas},
                          {"community_a", p.community_a},
                          {"community_b", p.community_b}});
  }
  j["atlases"] = json::array();
  for (const auto& a : truth.atlases) {
    json aj;
    aj["atlas_id"] = a.atlas_id;
    aj["voxel_to_roi"] = a.voxel_to_roi;
    aj["primary"] = a.primary;
    aj["planted_roi_pairs"] = json::array();
    for (const auto& rp : a.planted) {
      aj["planted_roi_pairs"].push_back(
          {{"pair_index", rp.pair_index},
           {"roi_a", rp.roi_a},
           {"roi_b", rp.roi_b},
           {"expected_corr_control", rp.expected_corr_control},
           {"expected_corr_effect", rp.expected_corr_effect}});
    }
    j["atlases"].push_back(std::move(aj));
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  GroundTruth t;
  try {
    const json j = json::parse(in);
    t.effect_size = j.at("effect_size").get<double>();
    t.noise_std = j.at("noise_std").get<double>();
    t.voxel_to_community = j.at("voxel_to_community").get<std::vector<int>>();
    for (const auto& pj : j.at("pairs")) {
      t.pairs.push_back({pj.at("anchor_atlas").get<int>(),
                         pj.at("community_a").get<int>(),
                         pj.at("community_b").get<int>()});
    }
    for (const auto& aj : j.at("atlases")) {
      AtlasTruth a;
      a.atlas_id = aj.at("atlas_id").get<std::string>();
      a.voxel_to_roi = aj.at("voxel_to_roi").get<std::vector<int>>();
      a.primary = aj.at("primary").get<int>();
      for (const auto& rj : aj.at("planted_roi_pairs")) {
        a.planted.push_back({rj.at("pair_index").get<int>(), rj.at("roi_a").get<int>(),
                             rj.at("roi_b").get<int>(),
                             rj.at("expected_corr_control").get<double>(),
                             rj.at("expected_corr_effect").get<double>()});
      }
      t.atlases.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path.string() + ": " + e.what());
  }
  return t;
}

}  // namespace atlasfuse::synth

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
#ifndef ATLASFUSE_MODEL_HPP_
#define ATLASFUSE_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "atlasfuse/autograd.hpp"
#include "atlasfuse/connectome.hpp"

namespace atlasfuse {

enum class AtlasSelection { kBoth, kFirstOnly, kSecondOnly };

struct ModelConfig {
  int hidden_dim = 100;
  int incompatible_count = 4;
  int knn_k = 5;
  // 0 selects half the mean ROI count of the active atlases.
  int pool_clusters = 0;
  double temperature = 0.75;
  double keep_fraction = 0.20;
  int class_count = 2;

  // Component switches used by the ablation harness. `disentangle` covers
  // both the identity embedding and the incompatible nodes; turning it off
  // leaves a vanilla Transformer block.
  bool disentangle = true;
  bool inter_atlas = true;
  bool subject_consistency = true;
  bool population_consistency = true;
  AtlasSelection atlas_selection = AtlasSelection::kBoth;

  void validate(Index min_roi_count) const;
};

// Learnable tensors by name. Ordered so iteration is deterministic.
struct ModelParams {
  std::map<std::string, Matrix> tensors;

  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return tensors.count(name) != 0;
  }
  Index scalar_count() const;
};

// JSON {name: {rows, cols, data}} with row-major data; round trip is exact.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

// Vars for one forward/backward pass. Built from ModelParams; leaves are
// parameters when gradients are requested, constants otherwise.
class ParamBinding {
 public:
  ParamBinding(const ModelParams& params, bool requires_grad);

  const ad::Var& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  // Gradients of every bound tensor, keyed like ModelParams.
  ModelParams gradients() const;

 private:
  std::map<std::string, ad::Var> vars_;
};

// r orthonormal rows of width d via Gram-Schmidt on Gaussian draws.
Matrix init_incompatible(int r, int d, std::mt19937_64& rng);

struct InterAtlasAdjacency {
  // Directed kNN links; row u points at its k nearest ROIs in the other atlas.
  Matrix raw;
  // raw OR raw^T OR I.
  Matrix adjacency;
  // D^-1/2 adjacency D^-1/2.
  Matrix normalized;
};

InterAtlasAdjacency build_inter_atlas_adjacency(const Matrix& centroids_a,
                                                const Matrix& centroids_b,
                                                int k);

// Symmetric GCN normalization. Throws ZeroDegreeNode on an isolated node.
Matrix normalize_adjacency(const Matrix& adjacency);

// --- Building blocks -------------------------------------------------------

struct EmbedParams {
  ad::Var input_w, input_b;
  // Undefined when the identity embedding is disabled.
  ad::Var identity, mlp1_w, mlp1_b, mlp2_w, mlp2_b;
};

// X~ = X input_w + input_b; H_ID = X~ + MLP(X~ + identity).
ad::Var identity_embed(const ad::Var& x, const EmbedParams& p);

struct TransformerParams {
  ad::Var incompatible;  // undefined for a vanilla block
  ad::Var w_q, w_k, w_v;
  ad::Var ln1_gamma, ln1_beta;
  ad::Var ffn1_w, ffn1_b, ffn2_w, ffn2_b;
  ad::Var ln2_gamma, ln2_beta;
};

struct TransformerOutput {
  ad::Var h_prime;        // (n + r) x d
  ad::Var attention;      // (n + r) x (n + r)
  ad::Var node_features;  // n x d, incompatible rows dropped
};

// When `detach_incompatible` is set, ROI queries cannot attend to the
// incompatible keys; used to check that ROI outputs then ignore W_INC.
TransformerOutput disentangle_transformer(const ad::Var& h_id,
                                          const TransformerParams& p,
                                          bool detach_incompatible = false);

// relu(normalized_adjacency * h * weight)
ad::Var gcn(const Matrix& normalized_adjacency, const ad::Var& h,
            const ad::Var& weight);

struct DiffPoolOutput {
  ad::Var assignment;  // S, n x n'
  ad::Var embedded;    // Z, n x d
  ad::Var pooled;      // S^T Z, n' x d
};

DiffPoolOutput diffpool(const Matrix& normalized_adjacency, const ad::Var& h,
                        const ad::Var& pool_w, const ad::Var& emb_w);
ad::Var coarsen(const ad::Var& assignment, const ad::Var& embedded);

// Column-wise mean.
ad::Var readout(const ad::Var& h);

struct HeadParams {
  ad::Var w1, b1, w2, b2;
};

ad::Var classify_head(const std::vector<ad::Var>& readouts, const HeadParams& p);

// --- Full model ------------------------------------------------------------

struct PreparedSubject {
  std::string id;
  int label = 0;
  std::vector<Matrix> features;         // per active atlas, X
  std::vector<Matrix> intra_adjacency;  // normalized top-k graph + self-loops
};

struct AtlasTrace {
  ad::Var h_id;
  ad::Var h_prime;
  ad::Var attention;
  ad::Var node_features;
  ad::Var fused;  // this atlas's slice after inter-atlas message passing
  ad::Var assignment;
  ad::Var embedded;
  ad::Var pooled;
  ad::Var readout;
};

struct ForwardTrace {
  std::vector<AtlasTrace> atlases;
  std::shared_ptr<const InterAtlasAdjacency> inter_atlas;
  ad::Var h_ab;
  ad::Var fused_ab;
  ad::Var logits;  // 1 x C
};

struct ForwardOptions {
  bool detach_incompatible = false;
};

class Model {
 public:
  // Atlases are ordered by id; the configured selection then picks one or
  // both. The classification head concatenates readouts in that order.
  Model(ModelConfig config, std::vector<Atlas> atlases);

  const ModelConfig& config() const { return config_; }
  int atlas_count() const { return static_cast<int>(atlases_.size()); }
  const Atlas& atlas(int slot) const { return atlases_[static_cast<std::size_t>(slot)]; }
  int pool_clusters() const { return pool_clusters_; }
  bool uses_incompatible() const { return config_.disentangle; }
  bool uses_inter_atlas() const { return config_.inter_atlas && atlas_count() == 2; }
  bool uses_diffpool() const {
    return config_.subject_consistency && atlas_count() == 2;
  }
  bool uses_population() const {
    return config_.population_consistency && atlas_count() == 2;
  }
  const std::shared_ptr<const InterAtlasAdjacency>& inter_atlas() const {
    return inter_atlas_;
  }

  ModelParams init_params(std::uint64_t seed) const;
  PreparedSubject prepare(const Subject& subject) const;
  ForwardTrace forward(const PreparedSubject& subject, const ParamBinding& params,
                       const ForwardOptions& options = {}) const;

  static std::string slot_prefix(int slot) { return "atlas" + std::to_string(slot) + "."; }

 private:
  ModelConfig config_;
  std::vector<Atlas> atlases_;
  int pool_clusters_ = 0;
  std::shared_ptr<const InterAtlasAdjacency> inter_atlas_;
};

}  // namespace atlasfuse

#endif  // ATLASFUSE_MODEL_HPP_

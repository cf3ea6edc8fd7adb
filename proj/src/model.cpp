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
#include "atlasfuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

void ModelConfig::validate(Index min_roi_count) const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "model config: " + what);
  };
  if (hidden_dim < 1) fail("hidden_dim must be >= 1");
  if (disentangle) {
    if (incompatible_count < 1) fail("incompatible_count must be >= 1");
    if (incompatible_count > hidden_dim) fail("incompatible_count exceeds hidden_dim");
  }
  if (knn_k < 1) fail("knn_k must be >= 1");
  if (knn_k > min_roi_count) {
    throw Error(ErrorCode::kKTooLarge,
                "knn_k " + std::to_string(knn_k) + " exceeds smallest atlas (" +
                    std::to_string(min_roi_count) + " ROIs)");
  }
  if (pool_clusters != 0 && pool_clusters < 2) fail("pool_clusters must be >= 2");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) fail("keep_fraction must be in (0, 1]");
  if (class_count < 2) fail("class_count must be >= 2");
}

Matrix& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no parameter '" + name + "'");
  }
  return it->second;
}

const Matrix& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no parameter '" + name + "'");
  }
  return it->second;
}

Index ModelParams::scalar_count() const {
  Index total = 0;
  for (const auto& [name, m] : tensors) total += m.size();
  return total;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, m] : params.tensors) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    }
    j[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << j.dump() << '\n';
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  ModelParams p;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& [name, tj] : j.items()) {
      const auto rows = tj.at("rows").get<Index>();
      const auto cols = tj.at("cols").get<Index>();
      const auto data = tj.at("data").get<std::vector<double>>();
      if (static_cast<Index>(data.size()) != rows * cols) {
        throw Error(ErrorCode::kShapeMismatch, "parameter '" + name + "' size");
      }
      Matrix m(rows, cols);
      for (Index i = 0; i < rows; ++i) {
        for (Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)];
      }
      p.tensors.emplace(name, std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigParse, path.string() + ": " + e.what());
  }
  return p;
}

ParamBinding::ParamBinding(const ModelParams& params, bool requires_grad) {
  for (const auto& [name, m] : params.tensors) {
    vars_.emplace(name, requires_grad ? ad::Var::parameter(m) : ad::Var::constant(m));
  }
}

const ad::Var& ParamBinding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unbound parameter '" + name + "'");
  }
  return it->second;
}

ModelParams ParamBinding::gradients() const {
  ModelParams g;
  for (const auto& [name, v] : vars_) g.tensors.emplace(name, v.grad());
  return g;
}

Matrix init_incompatible(int r, int d, std::mt19937_64& rng) {
  if (r < 1 || r > d) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot orthogonalize " + std::to_string(r) + " vectors in " +
                    std::to_string(d) + " dimensions");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(r, d);
  for (int i = 0; i < r; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
      Eigen::RowVectorXd v(d);
      for (int j = 0; j < d; ++j) v(j) = normal(rng);
      // Modified Gram-Schmidt, applied twice for numerical orthogonality.
      for (int pass = 0; pass < 2; ++pass) {
        for (int p = 0; p < i; ++p) v -= v.dot(w.row(p)) * w.row(p);
      }
      const double norm = v.norm();
      if (norm > 1e-8) {
        w.row(i) = v / norm;
        ok = true;
      }
    }
    if (!ok) {
      throw Error(ErrorCode::kRankDeficientInit,
                  "Gram-Schmidt collapsed after 10 draws");
    }
  }
  return w;
}

Matrix normalize_adjacency(const Matrix& adjacency) {
  Eigen::VectorXd deg = adjacency.rowwise().sum();
  for (Index i = 0; i < deg.size(); ++i) {
    if (!(deg(i) > 0.0)) {
      throw Error(ErrorCode::kZeroDegreeNode,
                  "node " + std::to_string(i) + " has zero degree");
    }
  }
  Eigen::VectorXd inv = deg.cwiseSqrt().cwiseInverse();
  return inv.asDiagonal() * adjacency * inv.asDiagonal();
}

namespace {

// Indices of the k rows of `targets` nearest to `point`; ties by index.
std::vector<Index> nearest(const Eigen::RowVector3d& point, const Matrix& targets,
                           int k) {
  std::vector<std::pair<double, Index>> d;
  d.reserve(static_cast<std::size_t>(targets.rows()));
  for (Index j = 0; j < targets.rows(); ++j) {
    d.emplace_back((targets.row(j) - point).squaredNorm(), j);
  }
  std::partial_sort(d.begin(), d.begin() + k, d.end());
  std::vector<Index> out;
  for (int i = 0; i < k; ++i) out.push_back(d[static_cast<std::size_t>(i)].second);
  return out;
}

}  // namespace

InterAtlasAdjacency build_inter_atlas_adjacency(const Matrix& centroids_a,
                                                const Matrix& centroids_b,
                                                int k) {
  const Index na = centroids_a.rows();
  const Index nb = centroids_b.rows();
  if (centroids_a.cols() != 3 || centroids_b.cols() != 3) {
    throw Error(ErrorCode::kShapeMismatch, "centroids must be n x 3");
  }
  if (k < 1 || k > std::min(na, nb)) {
    throw Error(ErrorCode::kKTooLarge,
                "k=" + std::to_string(k) + " with atlases of " +
                    std::to_string(na) + " and " + std::to_string(nb) + " ROIs");
  }
  InterAtlasAdjacency out;
  out.raw = Matrix::Zero(na + nb, na + nb);
  for (Index u = 0; u < na; ++u) {
    for (Index v : nearest(centroids_a.row(u), centroids_b, k)) out.raw(u, na + v) = 1.0;
  }
  for (Index v = 0; v < nb; ++v) {
    for (Index u : nearest(centroids_b.row(v), centroids_a, k)) out.raw(na + v, u) = 1.0;
  }
  out.adjacency = out.raw.cwiseMax(out.raw.transpose());
  out.adjacency.diagonal().setOnes();
  out.normalized = normalize_adjacency(out.adjacency);
  return out;
}

ad::Var identity_embed(const ad::Var& x, const EmbedParams& p) {
  if (x.cols() != p.input_w.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "identity_embed: features have " + std::to_string(x.cols()) +
                    " columns, projection expects " +
                    std::to_string(p.input_w.rows()));
  }
  ad::Var projected = ad::add_row(ad::matmul(x, p.input_w), p.input_b);
  if (!p.identity.defined()) return projected;
  if (p.identity.rows() != x.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "identity_embed: W_ID row count");
  }
  ad::Var hidden = ad::relu(
      ad::add_row(ad::matmul(ad::add(projected, p.identity), p.mlp1_w), p.mlp1_b));
  ad::Var mlp = ad::add_row(ad::matmul(hidden, p.mlp2_w), p.mlp2_b);
  return ad::add(projected, mlp);
}

TransformerOutput disentangle_transformer(const ad::Var& h_id,
                                          const TransformerParams& p,
                                          bool detach_incompatible) {
  const Index n = h_id.rows();
  const Index r = p.incompatible.defined() ? p.incompatible.rows() : 0;
  TransformerOutput out;
  out.h_prime = r > 0 ? ad::vstack({h_id, p.incompatible}) : h_id;

  ad::Var q = ad::matmul(out.h_prime, p.w_q);
  ad::Var k = ad::matmul(out.h_prime, p.w_k);
  ad::Var v = ad::matmul(out.h_prime, p.w_v);
  ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)),
                             1.0 / std::sqrt(static_cast<double>(n + r)));
  if (detach_incompatible && r > 0) {
    Matrix bias = Matrix::Zero(n + r, n + r);
    bias.block(0, n, n, r).setConstant(-1e30);
    scores = ad::add(scores, ad::Var::constant(std::move(bias)));
  }
  out.attention = ad::row_softmax(scores);
  ad::Var h1 = ad::layer_norm(ad::add(out.h_prime, ad::matmul(out.attention, v)),
                              p.ln1_gamma, p.ln1_beta);
  ad::Var ffn = ad::add_row(
      ad::matmul(ad::relu(ad::add_row(ad::matmul(h1, p.ffn1_w), p.ffn1_b)), p.ffn2_w),
      p.ffn2_b);
  ad::Var h2 = ad::layer_norm(ad::add(h1, ffn), p.ln2_gamma, p.ln2_beta);
  out.node_features = r > 0 ? ad::slice_rows(h2, 0, n) : h2;
  return out;
}

ad::Var gcn(const Matrix& normalized_adjacency, const ad::Var& h,
            const ad::Var& weight) {
  ad::Var propagated = ad::matmul(ad::Var::constant(normalized_adjacency), h);
  return ad::relu(ad::matmul(propagated, weight));
}

ad::Var coarsen(const ad::Var& assignment, const ad::Var& embedded) {
  return ad::matmul(ad::transpose(assignment), embedded);
}

DiffPoolOutput diffpool(const Matrix& normalized_adjacency, const ad::Var& h,
                        const ad::Var& pool_w, const ad::Var& emb_w) {
  ad::Var propagated = ad::matmul(ad::Var::constant(normalized_adjacency), h);
  DiffPoolOutput out;
  // Assignment logits are not rectified.
  out.assignment = ad::row_softmax(ad::matmul(propagated, pool_w));
  out.embedded = ad::relu(ad::matmul(propagated, emb_w));
  out.pooled = coarsen(out.assignment, out.embedded);
  return out;
}

ad::Var readout(const ad::Var& h) {
  if (h.rows() < 1) throw Error(ErrorCode::kShapeMismatch, "readout of empty graph");
  return ad::col_mean(h);
}

ad::Var classify_head(const std::vector<ad::Var>& readouts, const HeadParams& p) {
  ad::Var joined = readouts.size() == 1 ? readouts.front() : ad::hstack(readouts);
  ad::Var hidden = ad::relu(ad::add_row(ad::matmul(joined, p.w1), p.b1));
  return ad::add_row(ad::matmul(hidden, p.w2), p.b2);
}

Model::Model(ModelConfig config, std::vector<Atlas> atlases)
    : config_(std::move(config)) {
  std::sort(atlases.begin(), atlases.end(),
            [](const Atlas& a, const Atlas& b) { return a.id < b.id; });
  if (atlases.empty()) throw Error(ErrorCode::kInvalidArgument, "model needs an atlas");
  switch (config_.atlas_selection) {
    case AtlasSelection::kBoth:
      if (atlases.size() != 2) {
        throw Error(ErrorCode::kInvalidArgument,
                    "fusion model expects exactly two atlases, got " +
                        std::to_string(atlases.size()));
      }
      atlases_ = std::move(atlases);
      break;
    case AtlasSelection::kFirstOnly:
      atlases_ = {atlases.front()};
      break;
    case AtlasSelection::kSecondOnly:
      if (atlases.size() < 2) {
        throw Error(ErrorCode::kInvalidArgument, "no second atlas to select");
      }
      atlases_ = {atlases[1]};
      break;
  }
  Index min_n = atlases_.front().roi_count();
  Index sum_n = 0;
  for (const auto& a : atlases_) {
    min_n = std::min(min_n, a.roi_count());
    sum_n += a.roi_count();
  }
  config_.validate(min_n);
  pool_clusters_ = config_.pool_clusters != 0
                       ? config_.pool_clusters
                       : static_cast<int>(sum_n / static_cast<Index>(atlases_.size()) / 2);
  if (pool_clusters_ < 2) {
    throw Error(ErrorCode::kInvalidArgument, "derived pool_clusters < 2");
  }
  if (atlases_.size() == 2) {
    inter_atlas_ = std::make_shared<InterAtlasAdjacency>(build_inter_atlas_adjacency(
        atlases_[0].centroids, atlases_[1].centroids, config_.knn_k));
  }
}

namespace {

Matrix glorot(Index rows, Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace

ModelParams Model::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  const Index d = config_.hidden_dim;
  ModelParams p;
  auto put = [&p](const std::string& name, Matrix m) {
    p.tensors.emplace(name, std::move(m));
  };
  for (int s = 0; s < atlas_count(); ++s) {
    const std::string pre = slot_prefix(s);
    const Index n = atlas(s).roi_count();
    put(pre + "input_w", glorot(n, d, rng));
    put(pre + "input_b", Matrix::Zero(1, d));
    if (uses_incompatible()) {
      put(pre + "identity", glorot(n, d, rng));
      put(pre + "id_mlp1_w", glorot(d, d, rng));
      put(pre + "id_mlp1_b", Matrix::Zero(1, d));
      put(pre + "id_mlp2_w", glorot(d, d, rng));
      put(pre + "id_mlp2_b", Matrix::Zero(1, d));
      put(pre + "incompatible", init_incompatible(config_.incompatible_count,
                                                  config_.hidden_dim, rng));
    }
    put(pre + "w_q", glorot(d, d, rng));
    put(pre + "w_k", glorot(d, d, rng));
    put(pre + "w_v", glorot(d, d, rng));
    put(pre + "ln1_gamma", Matrix::Ones(1, d));
    put(pre + "ln1_beta", Matrix::Zero(1, d));
    put(pre + "ffn1_w", glorot(d, d, rng));
    put(pre + "ffn1_b", Matrix::Zero(1, d));
    put(pre + "ffn2_w", glorot(d, d, rng));
    put(pre + "ffn2_b", Matrix::Zero(1, d));
    put(pre + "ln2_gamma", Matrix::Ones(1, d));
    put(pre + "ln2_beta", Matrix::Zero(1, d));
    if (uses_diffpool()) {
      put(pre + "pool_w", glorot(d, pool_clusters_, rng));
      put(pre + "emb_w", glorot(d, d, rng));
    }
  }
  if (uses_inter_atlas()) put("inter_atlas_w", glorot(d, d, rng));
  const Index head_in = d * atlas_count();
  put("head1_w", glorot(head_in, d, rng));
  put("head1_b", Matrix::Zero(1, d));
  put("head2_w", glorot(d, config_.class_count, rng));
  put("head2_b", Matrix::Zero(1, config_.class_count));
  return p;
}

PreparedSubject Model::prepare(const Subject& subject) const {
  PreparedSubject out;
  out.id = subject.id;
  out.label = subject.label;
  for (const auto& a : atlases_) {
    auto it = subject.networks.find(a.id);
    if (it == subject.networks.end()) {
      throw Error(ErrorCode::kAtlasMismatch,
                  "subject '" + subject.id + "' lacks atlas '" + a.id + "'");
    }
    const Matrix& x = it->second.matrix;
    if (x.rows() != a.roi_count()) {
      throw Error(ErrorCode::kAtlasMismatch,
                  "subject '" + subject.id + "' atlas '" + a.id + "' size");
    }
    out.features.push_back(x);
    if (uses_diffpool()) {
      Matrix adj = sparsify_topk(x, config_.keep_fraction);
      adj.diagonal().setOnes();
      out.intra_adjacency.push_back(normalize_adjacency(adj));
    }
  }
  return out;
}

ForwardTrace Model::forward(const PreparedSubject& subject, const ParamBinding& params,
                            const ForwardOptions& options) const {
  if (subject.features.size() != atlases_.size()) {
    throw Error(ErrorCode::kShapeMismatch, "prepared subject atlas count");
  }
  ForwardTrace trace;
  trace.inter_atlas = inter_atlas_;
  std::vector<ad::Var> transformer_out;
  for (int s = 0; s < atlas_count(); ++s) {
    const std::string pre = slot_prefix(s);
    EmbedParams ep;
    ep.input_w = params[pre + "input_w"];
    ep.input_b = params[pre + "input_b"];
    TransformerParams tp;
    if (uses_incompatible()) {
      ep.identity = params[pre + "identity"];
      ep.mlp1_w = params[pre + "id_mlp1_w"];
      ep.mlp1_b = params[pre + "id_mlp1_b"];
      ep.mlp2_w = params[pre + "id_mlp2_w"];
      ep.mlp2_b = params[pre + "id_mlp2_b"];
      tp.incompatible = params[pre + "incompatible"];
    }
    tp.w_q = params[pre + "w_q"];
    tp.w_k = params[pre + "w_k"];
    tp.w_v = params[pre + "w_v"];
    tp.ln1_gamma = params[pre + "ln1_gamma"];
    tp.ln1_beta = params[pre + "ln1_beta"];
    tp.ffn1_w = params[pre + "ffn1_w"];
    tp.ffn1_b = params[pre + "ffn1_b"];
    tp.ffn2_w = params[pre + "ffn2_w"];
    tp.ffn2_b = params[pre + "ffn2_b"];
    tp.ln2_gamma = params[pre + "ln2_gamma"];
    tp.ln2_beta = params[pre + "ln2_beta"];

    AtlasTrace at;
    at.h_id = identity_embed(ad::Var::constant(subject.features[static_cast<std::size_t>(s)]), ep);
    TransformerOutput t = disentangle_transformer(at.h_id, tp, options.detach_incompatible);
    at.h_prime = t.h_prime;
    at.attention = t.attention;
    at.node_features = t.node_features;
    transformer_out.push_back(t.node_features);
    trace.atlases.push_back(std::move(at));
  }

  if (uses_inter_atlas()) {
    trace.h_ab = ad::vstack(transformer_out);
    trace.fused_ab = gcn(inter_atlas_->normalized, trace.h_ab, params["inter_atlas_w"]);
    Index at = 0;
    for (auto& a : trace.atlases) {
      const Index n = a.node_features.rows();
      a.fused = ad::slice_rows(trace.fused_ab, at, n);
      at += n;
    }
  } else {
    for (auto& a : trace.atlases) a.fused = a.node_features;
    if (atlas_count() == 2) trace.h_ab = ad::vstack(transformer_out);
  }

  std::vector<ad::Var> readouts;
  for (int s = 0; s < atlas_count(); ++s) {
    auto& a = trace.atlases[static_cast<std::size_t>(s)];
    if (uses_diffpool()) {
      const std::string pre = slot_prefix(s);
      DiffPoolOutput dp = diffpool(subject.intra_adjacency[static_cast<std::size_t>(s)],
                                   a.fused, params[pre + "pool_w"], params[pre + "emb_w"]);
      a.assignment = dp.assignment;
      a.embedded = dp.embedded;
      a.pooled = dp.pooled;
    }
    a.readout = readout(a.fused);
    readouts.push_back(a.readout);
  }
  HeadParams hp{params["head1_w"], params["head1_b"], params["head2_w"], params["head2_b"]};
  trace.logits = classify_head(readouts, hp);
  return trace;
}

}  // namespace atlasfuse

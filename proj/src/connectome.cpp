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
#include "atlasfuse/connectome.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

namespace fs = std::filesystem;
using nlohmann::json;

void Atlas::validate() const {
  if (roi_names.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "atlas '" + id + "' has no ROIs");
  }
  if (centroids.rows() != roi_count() || centroids.cols() != 3) {
    throw Error(ErrorCode::kAtlasMismatch,
                "atlas '" + id + "': centroid rows do not match ROI count");
  }
  if (!centroids.allFinite()) {
    throw Error(ErrorCode::kNonFiniteEntry,
                "atlas '" + id + "' has a non-finite centroid");
  }
  std::set<std::string> seen(roi_names.begin(), roi_names.end());
  if (seen.size() != roi_names.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "atlas '" + id + "' has duplicate ROI names");
  }
}

void BrainNetwork::validate() const {
  const Index n = matrix.rows();
  if (matrix.cols() != n || n == 0) {
    throw Error(ErrorCode::kShapeMismatch, "network matrix must be square");
  }
  if (!matrix.allFinite()) {
    throw Error(ErrorCode::kNonFiniteEntry, "network matrix has NaN/Inf");
  }
  for (Index i = 0; i < n; ++i) {
    if (matrix(i, i) != 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "network diagonal must be 1");
    }
    for (Index j = 0; j < n; ++j) {
      const double v = matrix(i, j);
      if (v < -1.0 || v > 1.0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "network entry outside [-1, 1]");
      }
      if (std::abs(v - matrix(j, i)) > 1e-9) {
        throw Error(ErrorCode::kInvalidArgument, "network is not symmetric");
      }
    }
  }
}

const Atlas& Dataset::atlas(const std::string& id) const {
  for (const auto& a : atlases) {
    if (a.id == id) return a;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown atlas '" + id + "'");
}

void Dataset::validate() const {
  if (class_count() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need at least two classes");
  }
  for (const auto& a : atlases) a.validate();
  std::vector<bool> present(class_names.size(), false);
  for (const auto& s : subjects) {
    if (s.label < 0 || s.label >= class_count()) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "subject '" + s.id + "' label " + std::to_string(s.label));
    }
    present[static_cast<std::size_t>(s.label)] = true;
    if (s.networks.size() != atlases.size()) {
      throw Error(ErrorCode::kAtlasMismatch,
                  "subject '" + s.id + "' does not cover the atlas set");
    }
    for (const auto& a : atlases) {
      auto it = s.networks.find(a.id);
      if (it == s.networks.end()) {
        throw Error(ErrorCode::kAtlasMismatch,
                    "subject '" + s.id + "' lacks atlas '" + a.id + "'");
      }
      if (it->second.roi_count() != a.roi_count()) {
        throw Error(ErrorCode::kAtlasMismatch,
                    "subject '" + s.id + "' atlas '" + a.id + "': matrix is " +
                        std::to_string(it->second.roi_count()) + ", atlas has " +
                        std::to_string(a.roi_count()) + " ROIs");
      }
      it->second.validate();
    }
  }
  if (!subjects.empty() &&
      std::find(present.begin(), present.end(), false) != present.end()) {
    throw Error(ErrorCode::kInvalidArgument, "labels do not cover every class");
  }
}

BrainNetwork pearson_connectivity(const Matrix& signals, std::string atlas_id) {
  const Index n = signals.rows();
  const Index t = signals.cols();
  if (t < 3) {
    throw Error(ErrorCode::kTooFewTimepoints,
                "need at least 3 timepoints, got " + std::to_string(t));
  }
  if (!signals.allFinite()) {
    throw Error(ErrorCode::kNonFiniteEntry, "signals contain NaN/Inf");
  }
  Matrix centered = signals.colwise() - signals.rowwise().mean();
  Eigen::VectorXd norms = centered.rowwise().norm();
  for (Index i = 0; i < n; ++i) {
    const double scale = signals.row(i).cwiseAbs().maxCoeff();
    if (!(norms(i) > 1e-12 * scale * std::sqrt(static_cast<double>(t))) ||
        norms(i) == 0.0) {
      throw Error(ErrorCode::kZeroVarianceRow,
                  "region " + std::to_string(i) + " has a constant signal");
    }
  }
  centered.array().colwise() /= norms.array();
  BrainNetwork net;
  net.atlas_id = std::move(atlas_id);
  net.matrix = centered * centered.transpose();
  net.matrix = net.matrix.cwiseMax(-1.0).cwiseMin(1.0);
  // Enforce exact symmetry; the product above can differ in the last ulp.
  net.matrix = (0.5 * (net.matrix + net.matrix.transpose())).eval();
  net.matrix.diagonal().setOnes();
  return net;
}

Matrix sparsify_topk(const Matrix& x, double keep_fraction) {
  const Index n = x.rows();
  if (x.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "sparsify_topk needs a square matrix");
  }
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "keep_fraction must be in (0, 1]");
  }
  std::vector<std::tuple<double, Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) edges.emplace_back(x(i, j), i, j);
  }
  const auto total = static_cast<double>(edges.size());
  auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * total - 1e-9));
  keep = std::min(keep, edges.size());
  std::stable_sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) <
           std::tie(std::get<1>(b), std::get<2>(b));
  });
  Matrix adj = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < keep; ++e) {
    const auto [v, i, j] = edges[e];
    adj(i, j) = 1.0;
    adj(j, i) = 1.0;
  }
  return adj;
}

namespace {

constexpr std::array<char, 4> kMagic = {'A', 'F', 'N', 'W'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) {
      throw Error(ErrorCode::kIoFailure, "truncated network header");
    }
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}

json read_json(const fs::path& path, ErrorCode missing) {
  std::ifstream in(path);
  if (!in) throw Error(missing, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int parse_label(const json& j) {
  if (j.is_number_integer()) return j.get<int>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    std::size_t used = 0;
    try {
      const int v = std::stoi(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::kConfigParse, "label must be an integer: " + j.dump());
}

}  // namespace

void write_network_file(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, 0);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) {
        out.put(static_cast<char>((bits >> (8 * b)) & 0xFFu));
      }
    }
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "short write " + path.string());
}

Matrix read_network_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": bad magic");
  }
  if (get_u32(in) != kFormatVersion) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": unsupported version");
  }
  const std::uint32_t n = get_u32(in);
  get_u32(in);
  std::vector<unsigned char> raw(static_cast<std::size_t>(n) * n * 8);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorCode::kIoFailure, path.string() + ": truncated matrix");
  }
  Matrix m(n, n);
  std::size_t at = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(raw[at++]) << (8 * b);
      }
      m(i, j) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorCode::kManifestMissing,
                "no manifest.json under " + dir.string());
  }
  const json manifest = read_json(manifest_path, ErrorCode::kManifestMissing);

  Dataset ds;
  try {
    ds.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    for (const auto& id : manifest.at("atlases")) {
      const auto atlas_id = id.get<std::string>();
      const json aj =
          read_json(dir / ("atlas_" + atlas_id + ".json"), ErrorCode::kIoFailure);
      Atlas atlas;
      atlas.id = aj.at("id").get<std::string>();
      atlas.roi_names = aj.at("roi_names").get<std::vector<std::string>>();
      const auto& cj = aj.at("centroids");
      atlas.centroids.resize(static_cast<Index>(cj.size()), 3);
      for (std::size_t r = 0; r < cj.size(); ++r) {
        if (cj[r].size() != 3) {
          throw Error(ErrorCode::kAtlasMismatch, "centroid must have 3 coordinates");
        }
        for (std::size_t c = 0; c < 3; ++c) {
          atlas.centroids(static_cast<Index>(r), static_cast<Index>(c)) =
              cj[r][c].get<double>();
        }
      }
      if (atlas.id != atlas_id) {
        throw Error(ErrorCode::kAtlasMismatch,
                    "atlas file id '" + atlas.id + "' != '" + atlas_id + "'");
      }
      atlas.validate();
      ds.atlases.push_back(std::move(atlas));
    }
    for (const auto& sj : manifest.at("subjects")) {
      Subject s;
      s.id = sj.at("id").get<std::string>();
      s.label = parse_label(sj.at("label"));
      if (s.label < 0 || s.label >= ds.class_count()) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    "subject '" + s.id + "' label " + std::to_string(s.label) +
                        " with " + std::to_string(ds.class_count()) + " classes");
      }
      for (const auto& [atlas_id, rel] : sj.at("files").items()) {
        BrainNetwork net;
        net.atlas_id = atlas_id;
        net.matrix = read_network_file(dir / rel.get<std::string>());
        if (!net.matrix.allFinite()) {
          throw Error(ErrorCode::kNonFiniteEntry,
                      "subject '" + s.id + "' atlas '" + atlas_id + "'");
        }
        s.networks.emplace(atlas_id, std::move(net));
      }
      ds.subjects.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, std::string("manifest: ") + e.what());
  }
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir / "subjects", ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + dir.string());

  json manifest;
  manifest["class_names"] = dataset.class_names;
  manifest["atlases"] = json::array();
  for (const auto& a : dataset.atlases) {
    manifest["atlases"].push_back(a.id);
    json aj;
    aj["id"] = a.id;
    aj["roi_names"] = a.roi_names;
    aj["centroids"] = json::array();
    for (Index r = 0; r < a.centroids.rows(); ++r) {
      aj["centroids"].push_back(
          {a.centroids(r, 0), a.centroids(r, 1), a.centroids(r, 2)});
    }
    write_json(dir / ("atlas_" + a.id + ".json"), aj);
  }
  manifest["subjects"] = json::array();
  for (const auto& s : dataset.subjects) {
    json sj;
    sj["id"] = s.id;
    sj["label"] = s.label;
    sj["files"] = json::object();
    for (const auto& [atlas_id, net] : s.networks) {
      const std::string rel = "subjects/" + s.id + "_" + atlas_id + ".bin";
      write_network_file(dir / rel, net.matrix);
      sj["files"][atlas_id] = rel;
    }
    manifest["subjects"].push_back(std::move(sj));
  }
  write_json(dir / "manifest.json", manifest);
}

}  // namespace atlasfuse

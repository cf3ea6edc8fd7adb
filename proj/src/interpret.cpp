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
#include "atlasfuse/interpret.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "atlasfuse/error.hpp"

namespace atlasfuse {

using nlohmann::json;

AttentionMap extract_attention_map(const Model& model, const std::vector<ForwardTrace>& traces,
                                   const std::string& atlas_id) {
  if (traces.empty()) throw Error(ErrorCode::kEmptyCohort, "no traces for '" + atlas_id + "'");
  int slot = -1;
  for (int s = 0; s < model.atlas_count(); ++s) {
    if (model.atlas(s).id == atlas_id) slot = s;
  }
  if (slot < 0) throw Error(ErrorCode::kInvalidArgument, "model has no atlas '" + atlas_id + "'");

  const Atlas& atlas = model.atlas(slot);
  const Index n = atlas.roi_count();
  AttentionMap map;
  map.atlas_id = atlas_id;
  map.roi_names = atlas.roi_names;
  map.matrix = Matrix::Zero(n, n);
  for (const auto& t : traces) {
    map.matrix += t.atlases[static_cast<std::size_t>(slot)].attention.value().topLeftCorner(n, n);
  }
  map.matrix /= static_cast<double>(traces.size());
  map.saliency = map.matrix.colwise().sum().transpose();
  map.cohort_size = static_cast<Index>(traces.size());
  return map;
}

std::vector<RankedRoi> top_k_rois(const AttentionMap& map, Index k) {
  const Index n = map.saliency.size();
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kKTooLarge,
                "top-k of " + std::to_string(k) + " with " + std::to_string(n) + " ROIs");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&map](Index a, Index b) {
    return map.saliency(a) > map.saliency(b);
  });
  std::vector<RankedRoi> out;
  for (Index i = 0; i < k; ++i) {
    const Index r = order[static_cast<std::size_t>(i)];
    out.push_back({r, map.roi_names[static_cast<std::size_t>(r)], map.saliency(r)});
  }
  return out;
}

void export_heatmap(const AttentionMap& map, const std::filesystem::path& dir, Index k) {
  const Index n = map.matrix.rows();
  json j;
  j["atlas_id"] = map.atlas_id;
  j["roi_names"] = map.roi_names;
  j["matrix"] = json::array();
  for (Index i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Index c = 0; c < n; ++c) row[static_cast<std::size_t>(c)] = map.matrix(i, c);
    j["matrix"].push_back(row);
  }
  j["saliency"] = std::vector<double>(map.saliency.data(), map.saliency.data() + map.saliency.size());
  j["top_rois"] = json::array();
  for (const auto& r : top_k_rois(map, std::min(k, n))) {
    j["top_rois"].push_back({{"index", r.index}, {"name", r.name}, {"score", r.score}});
  }
  j["metadata"] = {{"cohort", map.cohort},
                   {"cohort_size", map.cohort_size},
                   {"reduction", "mean post-softmax attention, ROI block only"},
                   {"saliency", "column sum (attention received)"}};

  const auto base = dir / ("attention_" + map.atlas_id);
  std::ofstream js(base.string() + ".json");
  if (!js) throw Error(ErrorCode::kIoFailure, "cannot write " + base.string() + ".json");
  js << j.dump(2) << '\n';

  std::ofstream csv(base.string() + ".csv");
  if (!csv) throw Error(ErrorCode::kIoFailure, "cannot write " + base.string() + ".csv");
  csv << "roi";
  for (const auto& name : map.roi_names) csv << ',' << name;
  csv << '\n';
  char buf[64];
  for (Index i = 0; i < n; ++i) {
    csv << map.roi_names[static_cast<std::size_t>(i)];
    for (Index c = 0; c < n; ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", map.matrix(i, c));
      csv << buf;
    }
    csv << '\n';
  }
  if (!js || !csv) throw Error(ErrorCode::kIoFailure, "short write for " + base.string());
}

AttentionMap read_heatmap(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + json_path.string());
  AttentionMap map;
  try {
    const json j = json::parse(in);
    map.atlas_id = j.at("atlas_id").get<std::string>();
    map.roi_names = j.at("roi_names").get<std::vector<std::string>>();
    const auto& mj = j.at("matrix");
    const auto n = static_cast<Index>(mj.size());
    map.matrix.resize(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < n; ++c) {
        map.matrix(i, c) = mj[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
      }
    }
    map.saliency = map.matrix.colwise().sum().transpose();
    for (const auto& r : j.at("top_rois")) {
      map.top.push_back({r.at("index").get<Index>(), r.at("name").get<std::string>(),
                         r.at("score").get<double>()});
    }
    map.cohort = j.at("metadata").at("cohort").get<std::string>();
    map.cohort_size = j.at("metadata").at("cohort_size").get<Index>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigParse, json_path.string() + ": " + e.what());
  }
  return map;
}

Matrix read_heatmap_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + csv_path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Index>(rows.size());
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n) {
      throw Error(ErrorCode::kShapeMismatch, csv_path.string() + ": ragged row");
    }
    for (Index c = 0; c < n; ++c) m(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  return m;
}

std::vector<std::size_t> select_cohort(const std::vector<Prediction>& predictions,
                                       int positive_class, std::string* cohort) {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].label != positive_class) continue;
    members.push_back(i);
    if (predictions[i].predicted == positive_class) correct.push_back(i);
  }
  if (!correct.empty()) {
    if (cohort) *cohort = "correct class " + std::to_string(positive_class);
    return correct;
  }
  if (members.empty()) {
    throw Error(ErrorCode::kEmptyCohort,
                "no subjects of class " + std::to_string(positive_class));
  }
  if (cohort) *cohort = "all class " + std::to_string(positive_class);
  return members;
}

}  // namespace atlasfuse

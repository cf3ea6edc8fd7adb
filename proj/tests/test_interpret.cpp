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
#include <doctest.h>

#include "atlasfuse/gradcheck.hpp"
#include "atlasfuse/interpret.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace atlasfuse;
using testutil::error_of;

namespace {

struct Cohort {
  GradCheckInstance inst = make_gradcheck_instance(4);
  std::vector<ForwardTrace> traces;
  Cohort() {
    const ParamBinding bound(inst.params, false);
    for (const auto& s : inst.batch) traces.push_back(inst.model.forward(s, bound));
  }
};

AttentionMap map_from(const Matrix& m) {
  AttentionMap map;
  map.atlas_id = "x";
  for (Index i = 0; i < m.rows(); ++i) map.roi_names.push_back("r" + std::to_string(i));
  map.matrix = m;
  map.saliency = m.colwise().sum().transpose();
  return map;
}

}  // namespace

TEST_CASE("attention map averages ROI blocks") {
  Cohort c;
  const std::string id = c.inst.model.atlas(1).id;
  const Index n = c.inst.model.atlas(1).roi_count();

  const AttentionMap one = extract_attention_map(c.inst.model, {c.traces[0]}, id);
  CHECK(one.matrix == c.traces[0].atlases[1].attention.value().topLeftCorner(n, n));
  CHECK(one.roi_names == c.inst.model.atlas(1).roi_names);

  const AttentionMap all = extract_attention_map(c.inst.model, c.traces, id);
  Matrix want = Matrix::Zero(n, n);
  for (const auto& t : c.traces) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) want(i, j) += t.atlases[1].attention.value()(i, j) / 3.0;
    }
  }
  CHECK((all.matrix - want).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(all.matrix.minCoeff() >= 0.0);
  CHECK(all.cohort_size == 3);
  CHECK((all.saliency - all.matrix.colwise().sum().transpose()).cwiseAbs().maxCoeff() == 0.0);

  const AttentionMap first = extract_attention_map(c.inst.model, {c.traces[0]}, id);
  const AttentionMap rest = extract_attention_map(c.inst.model, {c.traces[1], c.traces[2]}, id);
  CHECK(((first.matrix + 2.0 * rest.matrix) / 3.0 - all.matrix).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(error_of([&] { extract_attention_map(c.inst.model, {}, id); }) ==
        ErrorCode::kEmptyCohort);
}

TEST_CASE("top-k ranking") {
  const AttentionMap uniform = map_from(Matrix::Constant(6, 6, 0.1));
  const auto top = top_k_rois(uniform, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].index == 0);
  CHECK(top[1].index == 1);
  CHECK(top[2].index == 2);

  Matrix m = Matrix::Constant(6, 6, 0.1);
  m.col(4) *= 10.0;
  CHECK(top_k_rois(map_from(m), 1)[0].index == 4);
  CHECK(top_k_rois(map_from(m), 1)[0].name == "r4");

  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed));
    const AttentionMap map = map_from(oracle::random_matrix(rng, 9, 9, 0.0, 1.0));
    std::vector<std::pair<double, Index>> all;
    for (Index i = 0; i < 9; ++i) all.emplace_back(-map.saliency(i), i);
    std::sort(all.begin(), all.end());
    const auto got = top_k_rois(map, 9);
    for (std::size_t i = 0; i < 9; ++i) CHECK(got[i].index == all[i].second);
  }
  CHECK(error_of([&] { top_k_rois(uniform, 7); }) == ErrorCode::kKTooLarge);
}

TEST_CASE("saliency is permutation equivariant") {
  std::mt19937_64 rng(3);
  const Matrix m = oracle::random_matrix(rng, 5, 5, 0.0, 1.0);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.indices() << 3, 0, 4, 1, 2;
  const Matrix pm = p * m * p.transpose();
  const Eigen::VectorXd s = map_from(m).saliency;
  CHECK((map_from(pm).saliency - p * s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("heat-map export round trip") {
  testutil::TempDir dir("heatmap");
  Cohort c;
  const std::string id = c.inst.model.atlas(0).id;
  AttentionMap map = extract_attention_map(c.inst.model, c.traces, id);
  map.cohort = "test cohort";
  export_heatmap(map, dir.path(), 4);
  const AttentionMap back = read_heatmap(dir / ("attention_" + id + ".json"));
  CHECK(back.matrix == map.matrix);
  CHECK(back.roi_names == map.roi_names);
  CHECK(back.atlas_id == id);
  REQUIRE(back.top.size() == 4);
  CHECK(back.top[0].index == top_k_rois(map, 4)[0].index);
  CHECK(read_heatmap_csv(dir / ("attention_" + id + ".csv")) == map.matrix);
  CHECK(error_of([&] { export_heatmap(map, dir / "missing" / "deeper.json", 4); }) ==
        ErrorCode::kIoFailure);
}

TEST_CASE("cohort selection") {
  std::vector<Prediction> p(4);
  p[0] = {1, 1, {}};
  p[1] = {1, 0, {}};
  p[2] = {0, 0, {}};
  p[3] = {1, 1, {}};
  std::string note;
  CHECK(select_cohort(p, 1, &note) == std::vector<std::size_t>{0, 3});
  p[0].predicted = p[3].predicted = 0;
  CHECK(select_cohort(p, 1, &note) == std::vector<std::size_t>{0, 1, 3});
  CHECK(note.find("all") != std::string::npos);
  CHECK(error_of([&] { select_cohort(p, 2, nullptr); }) == ErrorCode::kEmptyCohort);
}

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

#include <fstream>

#include <json.hpp>

#include "atlasfuse/connectome.hpp"
#include "atlasfuse/synthgen.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace atlasfuse;
using testutil::error_of;

TEST_CASE("pearson: identical and anticorrelated rows") {
  std::mt19937_64 rng(3);
  Matrix x = oracle::random_matrix(rng, 4, 50);
  x.row(2) = x.row(0);
  x.row(3) = -x.row(1).array() + 5.0;
  const BrainNetwork net = pearson_connectivity(x, "a");
  CHECK(net.matrix(0, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(net.matrix(1, 3) == doctest::Approx(-1.0).epsilon(1e-14));
  for (Index i = 0; i < 4; ++i) CHECK(net.matrix(i, i) == 1.0);
  CHECK(net.matrix == net.matrix.transpose());
  net.validate();
}

TEST_CASE("pearson: matches textbook formula on seeded signals") {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(seed));
    const Matrix x = oracle::random_matrix(rng, 6, 100);
    const Matrix got = pearson_connectivity(x).matrix;
    const Matrix want = oracle::pearson(x);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pearson: invariant under positive affine row rescaling") {
  std::mt19937_64 rng(11);
  const Matrix x = oracle::random_matrix(rng, 5, 40);
  Matrix y = x;
  for (Index i = 0; i < y.rows(); ++i) y.row(i) = y.row(i).array() * (1.5 + i) + 3.0 * i;
  CHECK((pearson_connectivity(x).matrix - pearson_connectivity(y).matrix).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("pearson: errors") {
  Matrix x = Matrix::Random(3, 10);
  x.row(1).setConstant(2.0);
  CHECK(error_of([&] { pearson_connectivity(x); }) == ErrorCode::kZeroVarianceRow);
  CHECK(error_of([] { pearson_connectivity(Matrix::Random(3, 2)); }) ==
        ErrorCode::kTooFewTimepoints);
}

TEST_CASE("sparsify_topk: five nodes keep the two largest edges") {
  Matrix x = Matrix::Identity(5, 5);
  double v = 0.05;
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      x(i, j) = x(j, i) = v;
      v += 0.07;
    }
  }
  const Matrix a = sparsify_topk(x, 0.2);
  CHECK(a.sum() == 4.0);
  CHECK(a(3, 4) == 1.0);
  CHECK(a(2, 4) == 1.0);
  CHECK(a.diagonal().isZero());
}

TEST_CASE("sparsify_topk: keep everything and ties") {
  std::mt19937_64 rng(5);
  const Matrix x = pearson_connectivity(oracle::random_matrix(rng, 7, 30)).matrix;
  const Matrix full = sparsify_topk(x, 1.0);
  CHECK(full == Matrix::Ones(7, 7) - Matrix::Identity(7, 7));

  Matrix flat = Matrix::Constant(6, 6, 0.3);
  flat.diagonal().setOnes();
  const Matrix a = sparsify_topk(flat, 0.2);
  // ceil(0.2 * 15) = 3 edges, the lexicographically smallest pairs.
  CHECK(a.sum() == 6.0);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(0, 2) == 1.0);
  CHECK(a(0, 3) == 1.0);
}

TEST_CASE("sparsify_topk: matches full-sort oracle") {
  for (int seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(static_cast<unsigned>(100 + seed));
    const int n = 4 + seed % 9;
    const Matrix x = pearson_connectivity(oracle::random_matrix(rng, n, 20)).matrix;
    for (double keep : {0.1, 0.2, 0.5}) {
      const Matrix a = sparsify_topk(x, keep);
      CHECK(a == oracle::topk(x, keep));
      CHECK(a.sum() / 2 == std::ceil(keep * n * (n - 1) / 2 - 1e-9));
    }
  }
}

TEST_CASE("network file round trip is bit exact") {
  testutil::TempDir dir("netfile");
  std::mt19937_64 rng(1);
  const Matrix m = oracle::random_matrix(rng, 9, 9);
  write_network_file(dir / "m.bin", m);
  CHECK(read_network_file(dir / "m.bin") == m);
  std::ifstream is(dir / "m.bin", std::ios::binary);
  char magic[4];
  is.read(magic, 4);
  CHECK(std::string(magic, 4) == "AFNW");
  CHECK(std::filesystem::file_size(dir / "m.bin") == 16 + 81 * 8);
}

namespace {

synth::SynthConfig small_synth() {
  synth::SynthConfig cfg;
  cfg.voxel_count = 60;
  cfg.timepoints = 30;
  cfg.atlases = {{6, 1}, {8, 2}};
  cfg.subject_count = 12;
  cfg.background_communities = 4;
  return cfg;
}

}  // namespace

TEST_CASE("dataset round trip") {
  testutil::TempDir dir("dataset");
  const Dataset ds = synth::generate_dataset(small_synth()).dataset;
  save_dataset(ds, dir.path());
  const Dataset back = load_dataset(dir.path());
  REQUIRE(back.subjects.size() == ds.subjects.size());
  CHECK(back.class_names == ds.class_names);
  REQUIRE(back.atlases.size() == ds.atlases.size());
  for (std::size_t a = 0; a < ds.atlases.size(); ++a) {
    CHECK(back.atlases[a].id == ds.atlases[a].id);
    CHECK(back.atlases[a].roi_names == ds.atlases[a].roi_names);
    CHECK(back.atlases[a].centroids == ds.atlases[a].centroids);
  }
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
    CHECK(back.subjects[i].id == ds.subjects[i].id);
    CHECK(back.subjects[i].label == ds.subjects[i].label);
    for (const auto& [id, net] : ds.subjects[i].networks) {
      CHECK(back.subjects[i].networks.at(id).matrix == net.matrix);
    }
  }
}

TEST_CASE("dataset load errors") {
  testutil::TempDir dir("dataset_err");
  CHECK(error_of([&] { load_dataset(dir / "nothing"); }) == ErrorCode::kManifestMissing);

  const Dataset ds = synth::generate_dataset(small_synth()).dataset;
  save_dataset(ds, dir.path());
  nlohmann::json manifest;
  std::ifstream(dir / "manifest.json") >> manifest;

  SUBCASE("wrong matrix size") {
    const std::string rel = manifest["subjects"][0]["files"]["a6"].get<std::string>();
    write_network_file(dir.path() / rel, Matrix::Identity(5, 5));
    CHECK(error_of([&] { load_dataset(dir.path()); }) == ErrorCode::kAtlasMismatch);
  }
  SUBCASE("label out of range") {
    manifest["subjects"][0]["label"] = "7";
    std::ofstream(dir / "manifest.json") << manifest.dump();
    CHECK(error_of([&] { load_dataset(dir.path()); }) == ErrorCode::kLabelOutOfRange);
  }
  SUBCASE("non-finite entry") {
    const std::string rel = manifest["subjects"][1]["files"]["b8"].get<std::string>();
    Matrix m = ds.subjects[1].networks.at("b8").matrix;
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    write_network_file(dir.path() / rel, m);
    CHECK(error_of([&] { load_dataset(dir.path()); }) == ErrorCode::kNonFiniteEntry);
  }
}

TEST_CASE("type invariants") {
  BrainNetwork net{"a", Matrix::Identity(3, 3)};
  net.validate();
  net.matrix(0, 1) = 0.5;
  CHECK(error_of([&] { net.validate(); }) == ErrorCode::kInvalidArgument);

  Atlas atlas{"a", {"r0", "r0"}, Matrix::Zero(2, 3)};
  CHECK(error_of([&] { atlas.validate(); }) == ErrorCode::kInvalidArgument);
}

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
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "atlasfuse/cli.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using atlasfuse::cli::run;

namespace {

struct Captured {
  int code;
  std::string err;
};

Captured call(std::vector<std::string> args) {
  args.insert(args.begin(), "atlasfuse");
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  const int code = run(args);
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  return {code, err.str()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::stringstream ss;
    ss << std::ifstream(e.path(), std::ios::binary).rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

nlohmann::json read_json(const fs::path& p) {
  nlohmann::json j;
  std::ifstream(p) >> j;
  return j;
}

const std::vector<std::string> kSmallData = {"--subjects", "30", "--timepoints", "40"};
const std::vector<std::string> kFast = {"--hidden_dim", "8", "--max_epochs", "2", "--folds", "3"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("cli: unknown command and missing data") {
  setenv("ATLASFUSE_LOG", "quiet", 1);
  const Captured bad = call({"frobnicate"});
  CHECK(bad.code == 2);
  CHECK(nlohmann::json::parse(bad.err)["error"] == "UnknownCommand");

  const Captured missing = call({"train", "--data", "missing_dir", "--out", "unused"});
  CHECK(missing.code != 0);
  const auto j = nlohmann::json::parse(missing.err);
  CHECK(j["message"].get<std::string>().find("missing_dir") != std::string::npos);
  CHECK_FALSE(fs::exists("unused"));

  CHECK(call({"cv", "--no-such-flag", "1"}).code == 2);
}

TEST_CASE("cli: generate is deterministic") {
  testutil::TempDir dir("cli_gen");
  REQUIRE(call(with({"generate", "--seed", "7", "--out", (dir / "d1").string()}, kSmallData)).code == 0);
  REQUIRE(call(with({"generate", "--seed", "7", "--out", (dir / "d2").string()}, kSmallData)).code == 0);
  CHECK(snapshot(dir / "d1") == snapshot(dir / "d2"));
  CHECK(fs::exists(dir / "d1" / "ground_truth.json"));
  CHECK(fs::exists(dir / "d1" / "manifest.json"));
}

TEST_CASE("cli: config precedence and effective config") {
  testutil::TempDir dir("cli_cfg");
  std::ofstream(dir / "cfg.json") << R"({"k": 3, "lambda1": 2.0, "seed": 11})";
  const Captured c = call({"gradcheck", "--config", (dir / "cfg.json").string(), "--k", "4",
                           "--gradcheck_samples", "200", "--out", (dir / "gc").string()});
  CHECK(c.code == 0);
  const auto eff = read_json(dir / "gc" / "config.json");
  CHECK(eff["k"] == 4);
  CHECK(eff["lambda1"] == 2.0);
  CHECK(eff["seed"] == 11);
  CHECK(eff["lambda3"] == 1e-5);
  const auto gc = read_json(dir / "gc" / "gradcheck.json");
  CHECK(gc["configured"]["passed"] == true);
  CHECK(gc["zero"]["passed"] == true);

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(call({"gradcheck", "--config", (dir / "bad.json").string()}).code == 2);
  std::ofstream(dir / "unknown.json") << R"({"lambda9": 1})";
  const Captured u = call({"gradcheck", "--config", (dir / "unknown.json").string()});
  CHECK(u.code == 2);
  CHECK(nlohmann::json::parse(u.err)["error"] == "ConfigParse");
  CHECK(call({"gradcheck", "--init_lr", "1e-5", "--min_lr", "1e-4"}).code == 1);
}

TEST_CASE("cli: cv, ablate, train, explain leave the dataset untouched") {
  testutil::TempDir dir("cli_run");
  const std::string data = (dir / "data").string();
  REQUIRE(call(with({"generate", "--out", data}, kSmallData)).code == 0);
  const auto before = snapshot(data);

  const Captured cv = call(with({"cv", "--data", data, "--out", (dir / "cv").string(), "--lambda1",
                                 "10", "--lambda2", "10", "--lambda3", "1e-5", "--lambda4", "1",
                                 "--k", "5"},
                                kFast));
  CHECK(cv.code == 0);
  CHECK(fs::exists(dir / "cv" / "summary.tsv"));
  CHECK(fs::exists(dir / "cv" / "folds.json"));
  CHECK(fs::exists(dir / "cv" / "logs" / "train_fold2.jsonl"));
  CHECK(read_json(dir / "cv" / "config.json")["lambda1"] == 10.0);

  CHECK(call(with({"train", "--data", data, "--out", (dir / "tr").string(), "--fold", "1"}, kFast))
            .code == 0);
  CHECK(fs::exists(dir / "tr" / "params.json"));
  CHECK(fs::exists(dir / "tr" / "metrics.json"));

  CHECK(call(with({"explain", "--data", data, "--out", (dir / "ex").string(), "--params",
                   (dir / "tr" / "params.json").string(), "--fold", "1"},
                  kFast))
            .code == 0);
  CHECK(fs::exists(dir / "ex" / "attention_a20.json"));
  CHECK(fs::exists(dir / "ex" / "attention_b24.csv"));
  const auto check = read_json(dir / "ex" / "planted_check.json");
  CHECK(check.contains("a20"));
  CHECK(check["b24"].contains("pair_in_top"));

  CHECK(call(with({"ablate", "--data", data, "--out", (dir / "ab").string(), "--max_epochs", "1"},
                  {"--hidden_dim", "8", "--folds", "3"}))
            .code == 0);
  std::ifstream tsv(dir / "ab" / "ablation.tsv");
  std::string header;
  std::getline(tsv, header);
  CHECK(header.find("variant") == 0);

  CHECK(snapshot(data) == before);
}

TEST_CASE("cli: effective config is written before a failing computation") {
  testutil::TempDir dir("cli_fail");
  const std::string data = (dir / "data").string();
  REQUIRE(call(with({"generate", "--out", data}, kSmallData)).code == 0);
  std::ofstream(dir / "p.json") << R"({"head1_w": {"rows": 1, "cols": 1, "data": [0.0]}})";
  const Captured c = call(with({"explain", "--data", data, "--out", (dir / "ex").string(),
                                "--params", (dir / "p.json").string()},
                               kFast));
  CHECK(c.code == 1);
  CHECK(fs::exists(dir / "ex" / "config.json"));
}

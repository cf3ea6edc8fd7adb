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
#ifndef ATLASFUSE_TESTS_TEST_UTIL_HPP_
#define ATLASFUSE_TESTS_TEST_UTIL_HPP_

#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "atlasfuse/error.hpp"

namespace testutil {

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("atlasfuse_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

template <typename F>
atlasfuse::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const atlasfuse::Error& e) {
    return e.code();
  }
  FAIL("expected an atlasfuse::Error");
  return atlasfuse::ErrorCode::kInvalidArgument;
}

}  // namespace testutil

#endif  // ATLASFUSE_TESTS_TEST_UTIL_HPP_

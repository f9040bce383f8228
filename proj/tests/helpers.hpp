#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "srnn/error.hpp"

// Fresh scratch directory per test case; wiped on entry, left behind on
// failure so the artifacts can be inspected.
inline std::filesystem::path test_dir(const std::string& name) {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "srnn_test_work" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Runs fn and asserts that it throws srnn::Error with the given code.
template <class Fn>
void expect_error(srnn::ErrorCode code, Fn&& fn) {
  try {
    fn();
    FAIL("expected srnn::Error(" << srnn::error_code_name(code) << "), nothing thrown");
  } catch (const srnn::Error& e) {
    INFO(e.what());
    REQUIRE(srnn::error_code_name(e.code()) == srnn::error_code_name(code));
  }
}

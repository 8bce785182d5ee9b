#pragma once

#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "coupnet/boosting.hpp"
#include "oracles.hpp"

namespace testing_support {

// Every boosted model trained by the suite goes through here so the training
// error bound is asserted on each run.
inline coupnet::BoostedEnsemble train_checked(const coupnet::LabeledDataset& d, const coupnet::BoostingParams& p) {
  auto e = coupnet::train_boosted(d, p);
  const auto check = oracle::boosting_bound(e, d);
  EXPECT_TRUE(check.holds()) << "training error " << check.training_error << " exceeds bound " << check.bound;
  return e;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("coupnet_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::istringstream lines(const std::string& s) { return std::istringstream(s); }

}  // namespace testing_support

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fogscene/config.hpp"

namespace fogscene::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "fogscene");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Small networks and a 16×32 corpus so whole stages run in seconds.
RunConfig tiny_run_config();
models::SegDepthConfig tiny_model(int num_classes = 5, Resolution res = {16, 32});
models::TranslationConfig tiny_translation();

std::string read_file(const std::filesystem::path& p);
/// Every regular file under `dir`, relative, sorted.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir);

}  // namespace fogscene::testing

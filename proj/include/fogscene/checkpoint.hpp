#pragma once

// Binary checkpoint container:
//   "FOGSCKPT" | u32 version | u64 header bytes | JSON header | tensor payload
// The header holds free-form metadata and a table of (name, dtype, shape,
// offset, nbytes). Tensors keep insertion order, so save→load→save is
// byte-identical.

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fogscene/optim.hpp"

namespace fogscene {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  void put(const std::string& name, const torch::Tensor& t);
  bool has(const std::string& name) const;
  /// Throws FormatError when absent.
  const torch::Tensor& get(const std::string& name) const;

  /// Parameters and buffers under `prefix/`.
  void put_module(const std::string& prefix, const torch::nn::Module& m);
  /// Copies stored values into `m`. Throws FormatError on missing names or
  /// shape mismatches.
  void load_module(const std::string& prefix, torch::nn::Module& m) const;

  void put_optimizer(const std::string& prefix, const Adam& opt);
  void load_optimizer(const std::string& prefix, Adam& opt) const;

  /// State of torch's default CPU generator (dropout masks, initialisation).
  void put_torch_rng();
  void restore_torch_rng() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws FormatError for missing, truncated, foreign or version-mismatched
/// files; `expected_version` is exposed for tests.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::uint32_t expected_version = kCheckpointVersion);

/// FNV-1a over the raw bytes of every parameter and buffer, for freeze checks.
std::uint64_t module_hash(const torch::nn::Module& m);

}  // namespace fogscene

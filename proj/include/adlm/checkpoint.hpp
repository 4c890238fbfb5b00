#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace adlm {

// Self-describing binary container: magic `adlmckpt`, format version, the
// vocabulary hash, named 2-D arrays (64-bit little-endian payloads, row
// major), and a config snapshot. Loaders reject unknown versions.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t vocab_hash = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;
  std::string config_snapshot;

  const Eigen::MatrixXd& array(const std::string& name) const;
  bool has_array(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace adlm

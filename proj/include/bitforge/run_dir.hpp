#pragma once

// Run directories: <out>/run-<config hash>-s<seed>/ with a manifest.txt
// that is itself a loadable config file. Artifact checksums are appended
// as comment lines, so the manifest still parses.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "bitforge/config.hpp"

namespace bitforge {

class RunDir {
 public:
  RunDir(const std::filesystem::path& out, const TrainConfig& cfg);

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

  /// Writes the config snapshot; called before any result is produced.
  void write_manifest() const;
  /// Records the FNV-1a checksum of an artifact and rewrites the manifest.
  void record(const std::string& name);

  static std::string name_for(const TrainConfig& cfg);

 private:
  std::filesystem::path path_;
  TrainConfig cfg_;
  std::map<std::string, std::uint64_t> artifacts_;
};

std::uint64_t file_checksum(const std::filesystem::path& path);

/// stage_05.ckpt for the stage whose input depth is 4.
std::string stage_file(int input_depth);

}  // namespace bitforge

#pragma once

// Experiment description read from flat key=value files.
//
//   # comment
//   [train]            section headers only group lines for readers
//   epochs_total = 40
//
// Keys are global; unknown keys, malformed values and violated invariants
// are rejected with ConfigError.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bitforge/dataset.hpp"
#include "bitforge/nets.hpp"
#include "bitforge/optim.hpp"

namespace bitforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  int depth_in = 4;   // b_L
  int depth_out = 8;  // b_H

  std::size_t patch_size = 64;
  std::size_t batch_size = 8;
  std::size_t epochs_total = 40;
  std::size_t epochs_sgd = 10;
  std::size_t patches_per_epoch = 50;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  optim::DecayMode decay_mode = optim::DecayMode::kL2;

  nets::ArchConfig arch;

  // bit-depth dataset
  std::size_t synth_count = 40;
  std::size_t synth_size = 96;
  std::vector<data::Generator> generators = data::SynthSpec{}.generators;
  std::string data_dir;  // when set, PNGs here replace the synthetic set
  double heldout_fraction = 0.1;

  // SR pretraining
  std::size_t sr_count = 16;
  std::size_t sr_patch_size = 48;
  std::size_t sr_batch_size = 8;
  std::size_t sr_epochs = 10;
  std::size_t sr_patches_per_epoch = 64;
  double sr_lr = 1e-3;

  /// One stage per predicted plane: b_L, b_L + 1, ..., b_H - 1 (input depths).
  std::vector<int> stage_depths() const;

  data::SynthSpec dataset_spec() const;
  /// Different stream from dataset_spec, so SR images never repeat
  /// bit-depth images.
  data::SynthSpec sr_dataset_spec() const;

  /// Checks every invariant; throws ConfigError.
  void validate() const;

  /// Canonical key=value text, one key per line in a fixed order. Parsing
  /// it back yields an equal config.
  std::string to_text() const;
  std::uint64_t hash() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Applies one `key=value` assignment.
void apply_setting(TrainConfig& cfg, std::string_view key, std::string_view value);

/// Parses file text on top of `base`.
TrainConfig parse_config_text(std::string_view text, TrainConfig base = {});

/// defaults <- file (if given) <- overrides, then validate. Setting
/// epochs_total without epochs_sgd puts a quarter of the epochs on SGD.
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides);

/// Splits "key=value"; throws ConfigError on a missing '='.
std::pair<std::string, std::string> split_assignment(std::string_view text);

}  // namespace bitforge

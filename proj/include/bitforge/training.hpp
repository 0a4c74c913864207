#pragma once

// SR trunk pretraining and per-stage bit-plane training.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "bitforge/config.hpp"
#include "bitforge/nets.hpp"
#include "bitforge/optim.hpp"

namespace bitforge::train {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Receives one finished log line at a time; may be called from worker
/// threads, so implementations serialize if they share a stream.
using LogFn = std::function<void(const std::string&)>;

struct Trunks {
  std::shared_ptr<const nets::SrTrunk> x2;
  std::shared_ptr<const nets::SrTrunk> x4;
};

struct EpochRecord {
  std::size_t epoch = 0;
  optim::Kind optimizer = optim::Kind::kSgdMomentum;
  double loss = 0.0;  // mean over the epoch's batches
};

struct PretrainResult {
  Trunks trunks;
  std::vector<double> loss_x2;  // per epoch, L1
  std::vector<double> loss_x4;
};

/// Trains one trunk plus its upsampling head on bicubic pairs from the SR
/// dataset with L1 loss and Adam, then drops the head and freezes the trunk.
nets::SrTrunk pretrain_trunk(const TrainConfig& cfg, nets::ScaleTag scale,
                             const std::vector<PlanarImage>& images,
                             std::vector<double>* epoch_loss, const LogFn& log = {});

PretrainResult pretrain_sr(const TrainConfig& cfg, const LogFn& log = {});

struct StageResult {
  nets::SubmodelWeights weights;
  std::vector<EpochRecord> log;
  std::uint64_t trunk_checksum_before = 0;
  std::uint64_t trunk_checksum_after = 0;
};

/// Trains the stage that maps depth b to plane b + 1. Inputs are
/// quantize(gt, b), targets extract_bitplane(quantize(gt, b + 1), b + 1).
/// SGD with momentum for epochs_sgd epochs, Adam afterwards.
StageResult train_stage(const TrainConfig& cfg, int depth, const Trunks& trunks,
                        const std::vector<PlanarImage>& train_images,
                        const LogFn& log = {});

/// Trains every configured stage. Stages are independent, so up to
/// thread_cap() of them run at once; each one is deterministic on its own.
std::vector<StageResult> train_stages(const TrainConfig& cfg, const Trunks& trunks,
                                      const std::vector<PlanarImage>& train_images,
                                      const LogFn& log = {});

/// BITFORGE_THREADS when set to a positive integer, otherwise the hardware
/// concurrency (at least 1).
std::size_t thread_cap();

/// The bit-depth images a config describes: data_dir PNGs or the synthetic set.
std::vector<PlanarImage> bit_depth_images(const TrainConfig& cfg);

/// Combined checksum of both trunks (0 when absent).
std::uint64_t trunk_checksum(const Trunks& trunks);

}  // namespace bitforge::train

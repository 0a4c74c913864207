#pragma once

// Network blocks of one cascade stage and their assembly.
//
//   image (b-bit, scaled to [0,1])
//     |-- SR trunk x2 (frozen) --|
//     |-- SR trunk x4 (frozen) --|-- concat -- 1x1 fuse -- CBAM
//     |-- inception -------------|
//   -- D x IRA -- CBAM tail -- IRB -> 3 logit planes
//
// Parameters are held by value in each block; a block's `collect` appends
// (name, tensor handle) pairs so optimizers and checkpoints see the same
// storage the forward pass uses.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bitforge/bitcore.hpp"
#include "bitforge/checkpoint.hpp"
#include "bitforge/rng.hpp"
#include "bitforge/tensor.hpp"

namespace bitforge::nets {

using tensor::Tensor;
using ParamList = std::vector<checkpoint::NamedTensor>;

struct ArchConfig {
  std::size_t trunk_width = 16;   // C
  std::size_t sr_res_blocks = 4;
  std::size_t fused_width = 32;   // F
  std::size_t ira_blocks = 4;     // D
  std::size_t ira_expansion = 2;  // e
  bool use_sr = true;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// -- layers -------------------------------------------------------------------

struct Conv2d {
  Tensor weight;               // out, in, k, k
  std::optional<Tensor> bias;  // out
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// He-normal weights (fan-in), zero bias; "same" padding for odd k.
  static Conv2d make(std::size_t in, std::size_t out, std::size_t k, Rng& rng,
                     bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct DepthwiseConv2d {
  Tensor weight;  // c, 1, k, k
  std::size_t padding = 0;

  static DepthwiseConv2d make(std::size_t channels, std::size_t k, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// -- SR encoder ------------------------------------------------------------------

enum class ScaleTag { kX2 = 2, kX4 = 4 };

struct SrEncoderSpec {
  ScaleTag scale = ScaleTag::kX2;
  std::size_t trunk_width = 16;
  std::size_t num_res_blocks = 4;
  bool frozen = false;
};

struct ResBlock {
  Conv2d conv1, conv2;
  Tensor operator()(const Tensor& x) const;
};

/// EDSR-style body: 3x3 head to C channels, residual blocks, 3x3 tail with
/// a long skip from the head. No upsampling; spatial size is preserved.
struct SrTrunk {
  SrEncoderSpec spec;
  Conv2d head;
  std::vector<ResBlock> blocks;
  Conv2d tail;

  static SrTrunk make(const SrEncoderSpec& spec, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  /// Freezing clears requires_grad on every parameter.
  void set_frozen(bool frozen);
  std::uint64_t checksum() const;
};

/// Upsampling head used only while pretraining a trunk: conv to 3*s*s
/// channels, pixel shuffle, 3x3 conv to RGB.
struct SrHead {
  std::size_t scale = 2;
  Conv2d expand;
  Conv2d out;

  static SrHead make(std::size_t trunk_width, std::size_t scale, Rng& rng);
  Tensor operator()(const Tensor& features) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// -- learnable blocks -------------------------------------------------------------

/// Four branches of width/4 channels each: 1x1; 1x1->3x3; 1x1->5x5;
/// 3x3 average pool->1x1. ReLU after every conv.
struct Inception {
  Conv2d b1, b2_reduce, b2, b3_reduce, b3, b4;

  static Inception make(std::size_t in, std::size_t width, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Channel attention (shared 1x1 bottleneck over avg- and max-pooled
/// descriptors, reduction 8) followed by spatial attention (7x7 conv over
/// channel-avg and channel-max maps).
struct Cbam {
  Conv2d mlp_reduce, mlp_expand, spatial;

  static Cbam make(std::size_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  Tensor channel_gate(const Tensor& x) const;  // N,C,1,1
  Tensor spatial_gate(const Tensor& x) const;  // N,1,H,W
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Inverted residual with squeeze-excite attention:
/// x + project(se(relu(dw(relu(expand(x)))))).
struct IraBlock {
  Conv2d expand;
  DepthwiseConv2d dw;
  Conv2d se_reduce, se_expand;
  Conv2d project;

  static IraBlock make(std::size_t width, std::size_t expansion, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Inverted residual output block without attention, projecting to
/// `out_channels` logits.
struct IrbOut {
  Conv2d expand;
  DepthwiseConv2d dw;
  Conv2d project;

  static IrbOut make(std::size_t width, std::size_t expansion, std::size_t out_channels,
                     Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// -- submodel -----------------------------------------------------------------------

/// Everything one cascade stage needs to predict plane b+1 from a b-bit
/// image. Trunks are shared read-only and never updated.
struct SubmodelWeights {
  int input_depth = 4;
  ArchConfig arch;
  std::shared_ptr<const SrTrunk> sr2;  // null when !arch.use_sr
  std::shared_ptr<const SrTrunk> sr4;
  Inception inception;
  Conv2d fusion;
  Cbam cbam;
  std::vector<IraBlock> ira;
  Cbam tail;
  IrbOut irb;

  /// Parameters updated by bit-depth training, in a fixed order.
  ParamList learnable() const;
  /// Learnable plus frozen trunk parameters, as written to checkpoints.
  ParamList all() const;
};

SubmodelWeights make_submodel(const ArchConfig& arch, int input_depth,
                              std::shared_ptr<const SrTrunk> sr2,
                              std::shared_ptr<const SrTrunk> sr4, Rng& rng);

/// Sets every learnable weight and bias to zero.
void zero_learnable(SubmodelWeights& w);

/// Scales samples by 1 / (2^b - 1) into an N=1 tensor.
Tensor image_to_tensor(const PlanarImage& img);
/// Stacks equally sized images of the same depth into one batch.
Tensor images_to_tensor(const std::vector<PlanarImage>& imgs);

/// Concatenated x2 and x4 trunk features (N, 2C, H, W), or an undefined
/// tensor when the submodel has no trunks.
Tensor trunk_features(const SubmodelWeights& w, const Tensor& x);

/// Full stage forward on a normalized batch. `features` may carry
/// precomputed trunk_features for the same pixels.
Tensor submodel_forward(const SubmodelWeights& w, const Tensor& x,
                        const Tensor& features = {});

/// Forward on one image; checks the depth against the stage.
Tensor submodel_forward(const PlanarImage& img, const SubmodelWeights& w);

// -- persistence ------------------------------------------------------------------

/// Writes `path` (tensor checkpoint) and `path` + ".manifest" (plain text
/// key=value: depth, architecture, trunk specs, block names).
void save_submodel(const std::filesystem::path& path, const SubmodelWeights& w);
SubmodelWeights load_submodel(const std::filesystem::path& path);

void save_trunk(const std::filesystem::path& path, const SrTrunk& trunk);
SrTrunk load_trunk(const std::filesystem::path& path);

}  // namespace bitforge::nets

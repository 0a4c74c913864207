#pragma once

// Integer bit-plane algebra for RGB images and the classical bit-depth
// expansion baselines. Everything here is exact; the learned pipeline is
// checked against these routines.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace bitforge {

inline constexpr int kMaxBitDepth = 16;
inline constexpr std::size_t kChannels = 3;

/// Planar RGB image with 16-bit storage and an explicit logical depth.
/// Samples are laid out channel-major: index = (c * height + y) * width + x.
class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(std::size_t width, std::size_t height, int bit_depth);
  PlanarImage(std::size_t width, std::size_t height, int bit_depth,
              std::vector<std::uint16_t> samples);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return kChannels; }
  int bit_depth() const { return bit_depth_; }
  std::uint32_t max_value() const { return (1u << bit_depth_) - 1u; }
  std::size_t plane_size() const { return width_ * height_; }
  std::size_t size() const { return samples_.size(); }

  std::uint16_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return samples_[(c * height_ + y) * width_ + x];
  }
  /// Unchecked write; callers keep values within the logical range.
  void set(std::size_t c, std::size_t y, std::size_t x, std::uint16_t v) {
    samples_[(c * height_ + y) * width_ + x] = v;
  }

  std::span<const std::uint16_t> samples() const { return samples_; }
  std::span<std::uint16_t> mutable_samples() { return samples_; }

  /// Throws std::invalid_argument if any sample exceeds 2^bit_depth - 1.
  void validate() const;

  /// Rectangular crop of all three channels.
  PlanarImage crop(std::size_t x0, std::size_t y0, std::size_t w,
                   std::size_t h) const;

  friend bool operator==(const PlanarImage&, const PlanarImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  int bit_depth_ = 8;
  std::vector<std::uint16_t> samples_;
};

/// One binary significance level of a PlanarImage, same layout.
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(std::size_t width, std::size_t height);
  BitPlane(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t channels() const { return kChannels; }
  std::size_t size() const { return bits_.size(); }

  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return bits_[(c * height_ + y) * width_ + x];
  }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> mutable_bits() { return bits_; }

  friend bool operator==(const BitPlane&, const BitPlane&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// floor(v / 2^(b_H - b_L)) per sample.
PlanarImage quantize(const PlanarImage& img, int target_depth);

/// Plane k (1 = MSB) of the image at its own depth.
BitPlane extract_bitplane(const PlanarImage& img, int k);

/// Inverse of extract_bitplane over k = 1..b; planes are MSB first.
PlanarImage assemble(std::span<const BitPlane> planes);

/// sample' = 2 * sample + bit, depth + 1.
PlanarImage append_lsb(const PlanarImage& img, const BitPlane& plane);

/// Appends zero LSBs.
PlanarImage zero_pad_expand(const PlanarImage& img, int target_depth);

/// Fills the new low bits by repeating the source bit pattern from the MSB.
PlanarImage bit_replicate_expand(const PlanarImage& img, int target_depth);

/// round(v * (2^b_H - 1) / (2^b_L - 1)), ties away from zero, in exact
/// integer arithmetic.
PlanarImage gain_expand(const PlanarImage& img, int target_depth);

/// Scalar forms of the expanders, shared by the image versions and handy
/// for exhaustive checks.
std::uint32_t bit_replicate_value(std::uint32_t v, int from_depth, int to_depth);
std::uint32_t gain_value(std::uint32_t v, int from_depth, int to_depth);

}  // namespace bitforge

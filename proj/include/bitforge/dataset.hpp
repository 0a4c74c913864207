#pragma once

// Synthetic 16-bit training images and the resampling used for SR pairs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bitforge/bitcore.hpp"
#include "bitforge/rng.hpp"
#include "bitforge/tensor.hpp"

namespace bitforge::data {

enum class Generator {
  kLinearGradient,
  kRadialGradient,
  kSmoothNoise,
  kShapes,
  kUniformNoise,  // iid samples; metric oracles only, not banding-prone
};

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view name);

struct SynthSpec {
  std::size_t count = 40;
  std::size_t size = 96;
  std::vector<Generator> generators = {Generator::kLinearGradient, Generator::kRadialGradient,
                                       Generator::kSmoothNoise, Generator::kShapes};
  std::uint64_t seed = 0;
};

/// Image i uses generators[i % n] and its own derived stream, so any image
/// can be regenerated without the others.
std::vector<PlanarImage> synth_dataset(const SynthSpec& spec);
PlanarImage synth_image(Generator g, std::size_t size, std::uint64_t seed);

/// Independent uniform samples in [0, 2^depth - 1].
PlanarImage uniform_random_image(std::size_t width, std::size_t height, int depth, Rng& rng);

/// Writes img_NNNN.png (+ sidecar) for every image.
void write_dataset(const std::filesystem::path& dir, const std::vector<PlanarImage>& images);
/// Reads every *.png in `dir` in name order.
std::vector<PlanarImage> read_dataset(const std::filesystem::path& dir);

/// Training and held-out halves: the last ceil(fraction * n) images are
/// held out (at least one, and at least one left for training).
struct Split {
  std::vector<PlanarImage> train;
  std::vector<PlanarImage> heldout;
};
Split split_heldout(const std::vector<PlanarImage>& images, double fraction);

/// Samples scaled to [0, 1] as a (3, H, W) buffer.
std::vector<double> normalized_samples(const PlanarImage& img);

/// Antialiased bicubic (a = -0.5) downsampling by an integer factor with
/// half-pixel centers; the kernel is widened by the factor and renormalized,
/// borders are clamped. Input and output are (C, H, W) buffers.
std::vector<double> bicubic_downsample(const std::vector<double>& planes, std::size_t channels,
                                       std::size_t height, std::size_t width,
                                       std::size_t factor);

/// Copies a (c, ph, pw) window at (y0, x0) out of a (C, H, W) buffer into
/// `dst`.
void crop_planes(const double* src, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t y0, std::size_t x0, std::size_t ph, std::size_t pw, double* dst);

}  // namespace bitforge::data

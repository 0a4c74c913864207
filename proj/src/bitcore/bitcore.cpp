#include "bitforge/bitcore.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace bitforge {
namespace {

void check_depth(int depth, const char* what) {
  if (depth < 1 || depth > kMaxBitDepth) {
    throw std::invalid_argument(std::string(what) + ": bit depth " +
                                std::to_string(depth) + " outside [1, 16]");
  }
}

void check_expansion(const PlanarImage& img, int target_depth, const char* what) {
  check_depth(target_depth, what);
  if (img.bit_depth() >= target_depth) {
    throw std::invalid_argument(std::string(what) + ": target depth " +
                                std::to_string(target_depth) +
                                " must exceed source depth " +
                                std::to_string(img.bit_depth()));
  }
}

template <typename F>
PlanarImage map_samples(const PlanarImage& img, int depth, F&& fn) {
  PlanarImage out(img.width(), img.height(), depth);
  auto src = img.samples();
  auto dst = out.mutable_samples();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint16_t>(fn(static_cast<std::uint32_t>(src[i])));
  }
  return out;
}

}  // namespace

PlanarImage::PlanarImage(std::size_t width, std::size_t height, int bit_depth)
    : width_(width), height_(height), bit_depth_(bit_depth),
      samples_(width * height * kChannels, 0) {
  check_depth(bit_depth, "PlanarImage");
}

PlanarImage::PlanarImage(std::size_t width, std::size_t height, int bit_depth,
                         std::vector<std::uint16_t> samples)
    : width_(width), height_(height), bit_depth_(bit_depth),
      samples_(std::move(samples)) {
  check_depth(bit_depth, "PlanarImage");
  if (samples_.size() != width * height * kChannels) {
    throw std::invalid_argument("PlanarImage: sample count does not match 3 x width x height");
  }
  validate();
}

void PlanarImage::validate() const {
  const std::uint32_t limit = max_value();
  for (std::uint16_t v : samples_) {
    if (v > limit) {
      throw std::invalid_argument("PlanarImage: sample " + std::to_string(v) +
                                  " exceeds " + std::to_string(bit_depth_) +
                                  "-bit range");
    }
  }
}

PlanarImage PlanarImage::crop(std::size_t x0, std::size_t y0, std::size_t w,
                              std::size_t h) const {
  if (x0 + w > width_ || y0 + h > height_) {
    throw std::out_of_range("PlanarImage::crop: window outside image");
  }
  PlanarImage out(w, h, bit_depth_);
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        out.set(c, y, x, at(c, y0 + y, x0 + x));
      }
    }
  }
  return out;
}

BitPlane::BitPlane(std::size_t width, std::size_t height)
    : width_(width), height_(height), bits_(width * height * kChannels, 0) {}

BitPlane::BitPlane(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (bits_.size() != width * height * kChannels) {
    throw std::invalid_argument("BitPlane: bit count does not match 3 x width x height");
  }
  for (std::uint8_t b : bits_) {
    if (b > 1) throw std::invalid_argument("BitPlane: entries must be 0 or 1");
  }
}

PlanarImage quantize(const PlanarImage& img, int target_depth) {
  check_depth(target_depth, "quantize");
  if (target_depth >= img.bit_depth()) {
    throw std::invalid_argument("quantize: target depth must be below source depth");
  }
  const int shift = img.bit_depth() - target_depth;
  return map_samples(img, target_depth, [shift](std::uint32_t v) { return v >> shift; });
}

BitPlane extract_bitplane(const PlanarImage& img, int k) {
  if (k < 1 || k > img.bit_depth()) {
    throw std::invalid_argument("extract_bitplane: significance index " +
                                std::to_string(k) + " outside [1, " +
                                std::to_string(img.bit_depth()) + "]");
  }
  const int shift = img.bit_depth() - k;
  BitPlane plane(img.width(), img.height());
  auto src = img.samples();
  auto dst = plane.mutable_bits();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint8_t>((src[i] >> shift) & 1u);
  }
  return plane;
}

PlanarImage assemble(std::span<const BitPlane> planes) {
  if (planes.empty()) throw std::invalid_argument("assemble: no planes");
  const int depth = static_cast<int>(planes.size());
  check_depth(depth, "assemble");
  const std::size_t w = planes[0].width();
  const std::size_t h = planes[0].height();
  for (const auto& p : planes) {
    if (p.width() != w || p.height() != h) {
      throw std::invalid_argument("assemble: planes have mismatched dimensions");
    }
  }
  PlanarImage out(w, h, depth);
  auto dst = out.mutable_samples();
  for (int k = 1; k <= depth; ++k) {
    const int shift = depth - k;
    auto bits = planes[static_cast<std::size_t>(k - 1)].bits();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<std::uint16_t>(dst[i] | (bits[i] << shift));
    }
  }
  return out;
}

PlanarImage append_lsb(const PlanarImage& img, const BitPlane& plane) {
  if (img.bit_depth() >= kMaxBitDepth) {
    throw std::invalid_argument("append_lsb: image is already 16-bit");
  }
  if (img.width() != plane.width() || img.height() != plane.height()) {
    throw std::invalid_argument("append_lsb: plane dimensions do not match image");
  }
  PlanarImage out(img.width(), img.height(), img.bit_depth() + 1);
  auto src = img.samples();
  auto bits = plane.bits();
  auto dst = out.mutable_samples();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint16_t>((src[i] << 1) | bits[i]);
  }
  return out;
}

PlanarImage zero_pad_expand(const PlanarImage& img, int target_depth) {
  check_expansion(img, target_depth, "zero_pad_expand");
  const int shift = target_depth - img.bit_depth();
  return map_samples(img, target_depth, [shift](std::uint32_t v) { return v << shift; });
}

std::uint32_t bit_replicate_value(std::uint32_t v, int from_depth, int to_depth) {
  std::uint32_t out = 0;
  int filled = 0;
  while (filled < to_depth) {
    const int take = std::min(from_depth, to_depth - filled);
    out = (out << take) | (v >> (from_depth - take));
    filled += take;
  }
  return out;
}

std::uint32_t gain_value(std::uint32_t v, int from_depth, int to_depth) {
  const std::uint64_t num = (std::uint64_t{1} << to_depth) - 1;
  const std::uint64_t den = (std::uint64_t{1} << from_depth) - 1;
  // v * num / den with ties rounded up; all operands are non-negative.
  return static_cast<std::uint32_t>((2 * v * num + den) / (2 * den));
}

PlanarImage bit_replicate_expand(const PlanarImage& img, int target_depth) {
  check_expansion(img, target_depth, "bit_replicate_expand");
  const int from = img.bit_depth();
  return map_samples(img, target_depth, [from, target_depth](std::uint32_t v) {
    return bit_replicate_value(v, from, target_depth);
  });
}

PlanarImage gain_expand(const PlanarImage& img, int target_depth) {
  check_expansion(img, target_depth, "gain_expand");
  const int from = img.bit_depth();
  return map_samples(img, target_depth, [from, target_depth](std::uint32_t v) {
    return gain_value(v, from, target_depth);
  });
}

}  // namespace bitforge

#include "bitforge/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bitforge::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("libpng: ") + msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

int read_sidecar_depth(const std::filesystem::path& png_path) {
  const auto meta = sidecar_path(png_path);
  std::ifstream in(meta);
  if (!in) return 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (line.substr(0, eq) == "bit_depth") {
      try {
        return std::stoi(line.substr(eq + 1));
      } catch (const std::exception&) {
        throw std::runtime_error("malformed bit_depth in " + meta.string());
      }
    }
  }
  return 0;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& png_path) {
  auto p = png_path;
  p += ".meta";
  return p;
}

void write_png(const std::filesystem::path& path, const PlanarImage& img) {
  const int container = img.bit_depth() <= 8 ? 8 : 16;
  auto file = open_file(path, "wb");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw std::runtime_error("png_create_info_struct failed");

  const auto w = img.width();
  const auto h = img.height();
  const std::size_t bytes_per_sample = container / 8;
  std::vector<png_byte> row(w * kChannels * bytes_per_sample);

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               container, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const std::uint16_t v = img.at(c, y, x);
        const std::size_t o = (x * kChannels + c) * bytes_per_sample;
        if (container == 8) {
          row[o] = static_cast<png_byte>(v);
        } else {
          row[o] = static_cast<png_byte>(v >> 8);  // network byte order
          row[o + 1] = static_cast<png_byte>(v & 0xff);
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);

  std::ofstream meta(sidecar_path(path));
  if (!meta) throw std::runtime_error("cannot write " + sidecar_path(path).string());
  meta << "bit_depth=" << img.bit_depth() << "\n";
}

PlanarImage read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error(path.string() + " is not a PNG file");
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw std::runtime_error("png_create_info_struct failed");

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);

  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    depth = 8;
  }
  if (depth < 8) {
    if (color == PNG_COLOR_TYPE_GRAY) png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const std::size_t bytes_per_sample = depth / 8;
  if (rowbytes != w * kChannels * bytes_per_sample) {
    throw std::runtime_error(path.string() + ": unsupported PNG layout");
  }
  std::vector<png_byte> row(rowbytes);

  const int sidecar = read_sidecar_depth(path);
  const int logical = sidecar > 0 ? sidecar : depth;
  if (logical > depth) {
    throw std::runtime_error(path.string() + ": sidecar depth exceeds container depth");
  }
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(w) * h * kChannels);
  for (std::size_t y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        const std::size_t o = (x * kChannels + c) * bytes_per_sample;
        const std::uint16_t v = bytes_per_sample == 1
                                    ? row[o]
                                    : static_cast<std::uint16_t>((row[o] << 8) | row[o + 1]);
        samples[(c * h + y) * w + x] = v;
      }
    }
  }
  png_read_end(png, nullptr);
  return PlanarImage(w, h, logical, std::move(samples));
}

}  // namespace bitforge::io

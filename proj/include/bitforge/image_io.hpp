#pragma once

#include <filesystem>

#include "bitforge/bitcore.hpp"

namespace bitforge::io {

/// Path of the plain-text sidecar that records the logical depth.
std::filesystem::path sidecar_path(const std::filesystem::path& png_path);

/// Writes an RGB PNG. Depths up to 8 use an 8-bit container, deeper images
/// a 16-bit one. Samples are stored unscaled; the logical depth goes into
/// the `bit_depth=` sidecar.
void write_png(const std::filesystem::path& path, const PlanarImage& img);

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA; alpha dropped).
/// The logical depth comes from the sidecar when present, otherwise from
/// the container.
PlanarImage read_png(const std::filesystem::path& path);

}  // namespace bitforge::io

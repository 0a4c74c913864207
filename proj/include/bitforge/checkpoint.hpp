#pragma once

// Binary parameter checkpoints.
//
//   magic    8 bytes  "BITFORGE"
//   version  u32      1
//   count    u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (no terminator)
//     rank     u32, extents u64 x rank
//     data     f64 x numel
//
// All integers and floats are little-endian. Reading back a saved file
// reproduces every value bit for bit.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "bitforge/tensor.hpp"

namespace bitforge::checkpoint {

inline constexpr char kMagic[8] = {'B', 'I', 'T', 'F', 'O', 'R', 'G', 'E'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  tensor::Tensor value;
};

void write(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read(std::istream& in);

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load(const std::filesystem::path& path);

}  // namespace bitforge::checkpoint

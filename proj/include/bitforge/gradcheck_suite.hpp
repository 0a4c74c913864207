#pragma once

// Finite-difference checks for every differentiable operation and network
// block, each on three input shapes. Used by `bitforge gradcheck` and the
// test suite.

#include <cstdint>
#include <string>
#include <vector>

#include "bitforge/gradcheck.hpp"

namespace bitforge::gradcheck {

struct Case {
  std::string name;  // "conv2d[2x3x8x8]"
  Builder f;
  std::vector<tensor::Tensor> inputs;
  Options options;
};

std::vector<Case> standard_cases(std::uint64_t seed = 0);

/// The whole stage network on a 1x3x8x8 input, probing the input and a
/// sample of every parameter tensor.
Case submodel_case(std::uint64_t seed = 0);

Report run_case(const Case& c);

}  // namespace bitforge::gradcheck

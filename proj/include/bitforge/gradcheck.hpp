#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bitforge/tensor.hpp"

namespace bitforge::gradcheck {

struct Options {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, scaled by max(1, |f(x)|):
  /// central differences carry roundoff of order eps * |f| / step, so
  /// gradients below that scale are judged on absolute error.
  double floor = 1e-6;
  /// Coordinates probed per input; 0 probes every element.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 0;
};

struct Report {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  /// Probes whose +step and -step evaluations took different branches of a
  /// piecewise op (see tensor::BranchTrace); no derivative exists across
  /// the kink, so they are counted and left out.
  std::size_t straddled = 0;
  std::string worst;  // "input[i] index j: analytic a vs numeric n"
  bool passed = false;
};

using Builder = std::function<tensor::Tensor(std::span<const tensor::Tensor>)>;

/// Compares the reverse-mode gradient of a scalar-valued builder against
/// central differences on every input flagged requires_grad. Inputs are
/// perturbed in place and restored. Throws std::invalid_argument when the
/// builder returns more than one element.
Report grad_check(const Builder& f, std::span<const tensor::Tensor> inputs,
                  const Options& options = {});

}  // namespace bitforge::gradcheck

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "bitforge/tensor.hpp"

namespace bitforge::optim {

enum class Kind { kSgdMomentum, kAdam };

/// How the configured decay rate is applied.
///   kL2:     g' = g + decay * w, for both optimizers (default)
///   kLrTime: lr_t = lr / (1 + decay * t), no gradient term
enum class DecayMode { kL2, kLrTime };

std::string_view to_string(Kind kind);

struct OptimizerState {
  Kind kind = Kind::kSgdMomentum;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  DecayMode decay_mode = DecayMode::kL2;
  std::uint64_t step_count = 0;
  // velocity for sgd, first moment for adam
  std::vector<std::vector<double>> first;
  // second moment, adam only
  std::vector<std::vector<double>> second;

  static OptimizerState sgd(double lr, double momentum, double weight_decay);
  static OptimizerState adam(double lr, double weight_decay, double beta1 = 0.9,
                             double beta2 = 0.999, double epsilon = 1e-8);

  /// Learning rate used for the next step.
  double effective_lr() const;
};

/// v <- momentum * v + g'; w <- w - lr * v. Parameters without a gradient
/// are treated as having a zero gradient.
void sgd_step(std::span<tensor::Tensor> params, OptimizerState& state);

/// Adam with bias correction; decay handled as in sgd_step.
void adam_step(std::span<tensor::Tensor> params, OptimizerState& state);

/// Dispatches on state.kind.
void step(std::span<tensor::Tensor> params, OptimizerState& state);

}  // namespace bitforge::optim

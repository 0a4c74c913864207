#include "bitforge/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bitforge::optim {
namespace {

void ensure_slots(std::vector<std::vector<double>>& slots,
                  std::span<tensor::Tensor> params) {
  if (slots.empty()) {
    slots.reserve(params.size());
    for (const auto& p : params) slots.emplace_back(p.numel(), 0.0);
    return;
  }
  if (slots.size() != params.size()) {
    throw std::invalid_argument("optimizer: state tracks " + std::to_string(slots.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (slots[i].size() != params[i].numel()) {
      throw std::invalid_argument("optimizer: slot " + std::to_string(i) +
                                  " does not match parameter shape " +
                                  tensor::to_string(params[i].shape()));
    }
  }
}

double decayed_grad(const OptimizerState& s, std::span<const double> g, std::span<const double> w,
                    std::size_t i) {
  const double gi = g.empty() ? 0.0 : g[i];
  return s.decay_mode == DecayMode::kL2 ? gi + s.weight_decay * w[i] : gi;
}

}  // namespace

std::string_view to_string(Kind kind) {
  return kind == Kind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerState OptimizerState::sgd(double lr, double momentum, double weight_decay) {
  OptimizerState s;
  s.kind = Kind::kSgdMomentum;
  s.learning_rate = lr;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double weight_decay, double beta1, double beta2,
                                    double epsilon) {
  OptimizerState s;
  s.kind = Kind::kAdam;
  s.learning_rate = lr;
  s.weight_decay = weight_decay;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

double OptimizerState::effective_lr() const {
  if (decay_mode == DecayMode::kLrTime) {
    return learning_rate / (1.0 + weight_decay * static_cast<double>(step_count));
  }
  return learning_rate;
}

void sgd_step(std::span<tensor::Tensor> params, OptimizerState& state) {
  if (state.kind != Kind::kSgdMomentum) throw std::logic_error("sgd_step on a non-SGD state");
  ensure_slots(state.first, params);
  const double lr = state.effective_lr();
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].mutable_data();
    auto g = params[p].grad();
    auto& v = state.first[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = state.momentum * v[i] + decayed_grad(state, g, w, i);
      w[i] -= lr * v[i];
    }
  }
  ++state.step_count;
}

void adam_step(std::span<tensor::Tensor> params, OptimizerState& state) {
  if (state.kind != Kind::kAdam) throw std::logic_error("adam_step on a non-Adam state");
  ensure_slots(state.first, params);
  ensure_slots(state.second, params);
  const double lr = state.effective_lr();
  const double t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].mutable_data();
    auto g = params[p].grad();
    auto& m = state.first[p];
    auto& v = state.second[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = decayed_grad(state, g, w, i);
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
  ++state.step_count;
}

void step(std::span<tensor::Tensor> params, OptimizerState& state) {
  if (state.kind == Kind::kAdam) {
    adam_step(params, state);
  } else {
    sgd_step(params, state);
  }
}

}  // namespace bitforge::optim

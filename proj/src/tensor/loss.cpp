#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bitforge/ops.hpp"

namespace bitforge::ops {

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("bce_with_logits: logits " + tensor::to_string(logits.shape()) +
                                " vs targets " + tensor::to_string(targets.shape()));
  }
  const std::size_t n = logits.numel();
  if (n == 0) throw std::invalid_argument("bce_with_logits: empty input");
  auto x = logits.data();
  auto y = targets.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw std::invalid_argument("bce_with_logits: targets must be 0 or 1");
    }
    acc += std::max(x[i], 0.0) - x[i] * y[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double inv = 1.0 / static_cast<double>(n);
  // Targets are treated as constants even if flagged for gradients.
  Tensor y_const = targets.detach();
  return Tensor::from_op("bce_with_logits", {1}, {acc * inv}, {logits},
                         [y_const, inv](tensor::detail::Node& self) {
                           auto& px = *self.parents[0];
                           auto& gx = px.grad_buffer();
                           const double g = self.grad[0] * inv;
                           auto yd = y_const.data();
                           for (std::size_t i = 0; i < gx.size(); ++i) {
                             const double v = px.data[i];
                             const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                                     : std::exp(v) / (1.0 + std::exp(v));
                             gx[i] += g * (s - yd[i]);
                           }
                         });
}

Tensor mean_abs_error(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw std::invalid_argument("mean_abs_error: prediction " +
                                tensor::to_string(prediction.shape()) + " vs target " +
                                tensor::to_string(target.shape()));
  }
  const std::size_t n = prediction.numel();
  if (n == 0) throw std::invalid_argument("mean_abs_error: empty input");
  auto p = prediction.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(p[i] - t[i]);
  if (tensor::BranchTrace::active()) {
    for (std::size_t i = 0; i < n; ++i) {
      tensor::BranchTrace::record(p[i] > t[i] ? 2 : p[i] < t[i] ? 1 : 0);
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  Tensor t_const = target.detach();
  return Tensor::from_op("mean_abs_error", {1}, {acc * inv}, {prediction},
                         [t_const, inv](tensor::detail::Node& self) {
                           auto& pp = *self.parents[0];
                           auto& gp = pp.grad_buffer();
                           const double g = self.grad[0] * inv;
                           auto td = t_const.data();
                           for (std::size_t i = 0; i < gp.size(); ++i) {
                             const double d = pp.data[i] - td[i];
                             if (d > 0) gp[i] += g;
                             else if (d < 0) gp[i] -= g;
                           }
                         });
}

}  // namespace bitforge::ops

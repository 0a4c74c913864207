#include <cmath>

#include "bitforge/nets.hpp"
#include "bitforge/ops.hpp"

namespace bitforge::nets {
namespace {

Tensor he_normal(tensor::Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> data(tensor::numel(shape));
  for (auto& v : data) v = sd * rng.normal();
  return Tensor(std::move(shape), std::move(data), true);
}

}  // namespace

Conv2d Conv2d::make(std::size_t in, std::size_t out, std::size_t k, Rng& rng, bool with_bias) {
  Conv2d c;
  c.weight = he_normal({out, in, k, k}, in * k * k, rng);
  if (with_bias) c.bias = Tensor::zeros({out}, true);
  c.padding = k / 2;
  return c;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, stride, padding);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  if (bias) out.push_back({prefix + ".bias", *bias});
}

DepthwiseConv2d DepthwiseConv2d::make(std::size_t channels, std::size_t k, Rng& rng) {
  DepthwiseConv2d d;
  d.weight = he_normal({channels, 1, k, k}, k * k, rng);
  d.padding = k / 2;
  return d;
}

Tensor DepthwiseConv2d::operator()(const Tensor& x) const {
  return ops::depthwise_conv2d(x, weight, 1, padding);
}

void DepthwiseConv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
}

}  // namespace bitforge::nets

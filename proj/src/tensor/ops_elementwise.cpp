#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bitforge/ops.hpp"

namespace bitforge::ops {
namespace {

using tensor::Shape;

// a-shaped iteration with b broadcast, both padded to rank 4.
struct Broadcast {
  std::array<std::size_t, 4> ext{1, 1, 1, 1};
  std::array<std::size_t, 4> bstride{0, 0, 0, 0};
  bool same = false;
};

Broadcast plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Broadcast plan;
  if (a.shape() == b.shape()) {
    plan.same = true;
    return plan;
  }
  if (a.rank() > 4 || b.rank() > a.rank()) {
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " +
                                tensor::to_string(b.shape()) + " onto " +
                                tensor::to_string(a.shape()));
  }
  std::array<std::size_t, 4> bext{1, 1, 1, 1};
  for (std::size_t i = 0; i < a.rank(); ++i) plan.ext[4 - a.rank() + i] = a.dim(i);
  if (b.numel() != 1) {
    for (std::size_t i = 0; i < b.rank(); ++i) bext[4 - b.rank() + i] = b.dim(i);
  }
  std::size_t stride = 1;
  for (int d = 3; d >= 0; --d) {
    if (bext[d] == plan.ext[d]) {
      plan.bstride[d] = bext[d] == 1 ? 0 : stride;
    } else if (bext[d] == 1) {
      plan.bstride[d] = 0;
    } else {
      throw std::invalid_argument(std::string(op) + ": cannot broadcast " +
                                  tensor::to_string(b.shape()) + " onto " +
                                  tensor::to_string(a.shape()));
    }
    stride *= bext[d];
  }
  return plan;
}

// fn(ia, ib) over every element of a.
template <typename F>
void for_each_pair(const Broadcast& p, std::size_t n, F&& fn) {
  if (p.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i);
    return;
  }
  std::size_t ia = 0;
  for (std::size_t i0 = 0; i0 < p.ext[0]; ++i0) {
    for (std::size_t i1 = 0; i1 < p.ext[1]; ++i1) {
      for (std::size_t i2 = 0; i2 < p.ext[2]; ++i2) {
        const std::size_t base = i0 * p.bstride[0] + i1 * p.bstride[1] + i2 * p.bstride[2];
        for (std::size_t i3 = 0; i3 < p.ext[3]; ++i3) fn(ia++, base + i3 * p.bstride[3]);
      }
    }
  }
}

template <typename F>
std::vector<double> map_unary(const Tensor& x, F&& fn) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(xd[i]);
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto plan = plan_broadcast(a, b, "add");
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for_each_pair(plan, out.size(), [&](std::size_t i, std::size_t j) { out[i] = ad[i] + bd[j]; });
  return Tensor::from_op("add", a.shape(), std::move(out), {a, b},
                         [plan](tensor::detail::Node& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           if (pa.requires_grad) {
                             auto& ga = pa.grad_buffer();
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
                           }
                           if (pb.requires_grad) {
                             auto& gb = pb.grad_buffer();
                             for_each_pair(plan, self.grad.size(), [&](std::size_t i, std::size_t j) {
                               gb[j] += self.grad[i];
                             });
                           }
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto plan = plan_broadcast(a, b, "mul");
  std::vector<double> out(a.numel());
  auto ad = a.data();
  auto bd = b.data();
  for_each_pair(plan, out.size(), [&](std::size_t i, std::size_t j) { out[i] = ad[i] * bd[j]; });
  return Tensor::from_op("mul", a.shape(), std::move(out), {a, b},
                         [plan](tensor::detail::Node& self) {
                           auto& pa = *self.parents[0];
                           auto& pb = *self.parents[1];
                           const auto& g = self.grad;
                           if (pa.requires_grad) {
                             auto& ga = pa.grad_buffer();
                             for_each_pair(plan, g.size(), [&](std::size_t i, std::size_t j) {
                               ga[i] += g[i] * pb.data[j];
                             });
                           }
                           if (pb.requires_grad) {
                             auto& gb = pb.grad_buffer();
                             for_each_pair(plan, g.size(), [&](std::size_t i, std::size_t j) {
                               gb[j] += g[i] * pa.data[i];
                             });
                           }
                         });
}

Tensor relu(const Tensor& x) {
  auto out = map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
  if (tensor::BranchTrace::active()) {
    for (double v : x.data()) tensor::BranchTrace::record(v > 0.0);
  }
  return Tensor::from_op("relu", x.shape(), std::move(out), {x},
                         [](tensor::detail::Node& self) {
                           auto& px = *self.parents[0];
                           auto& gx = px.grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) {
                             gx[i] += px.data[i] > 0.0 ? self.grad[i] : 0.0;
                           }
                         });
}

Tensor sigmoid(const Tensor& x) {
  auto out = map_unary(x, stable_sigmoid);
  return Tensor::from_op("sigmoid", x.shape(), std::move(out), {x},
                         [](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) {
                             const double s = self.data[i];
                             gx[i] += self.grad[i] * s * (1.0 - s);
                           }
                         });
}

Tensor scale(const Tensor& x, double factor) {
  auto out = map_unary(x, [factor](double v) { return v * factor; });
  return Tensor::from_op("scale", x.shape(), std::move(out), {x},
                         [factor](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
                         });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return Tensor::from_op("sum", {1}, {acc}, {x}, [](tensor::detail::Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (auto& v : gx) v += g;
  });
}

}  // namespace bitforge::ops

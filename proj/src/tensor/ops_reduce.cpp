#include <algorithm>
#include <stdexcept>
#include <string>

#include "bitforge/ops.hpp"

namespace bitforge::ops {
namespace {

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected a 4-D tensor, got " +
                                tensor::to_string(t.shape()));
  }
}

}  // namespace

Tensor global_avg_pool(const Tensor& x) {
  require_rank4(x, "global_avg_pool");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(plane);
  std::vector<double> out(nc);
  for (std::size_t p = 0; p < nc; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.data()[p * plane + i];
    out[p] = acc * inv;
  }
  return Tensor::from_op("global_avg_pool", {x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                         [nc, plane, inv](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t p = 0; p < nc; ++p) {
                             const double g = self.grad[p] * inv;
                             for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g;
                           }
                         });
}

Tensor global_max_pool(const Tensor& x) {
  require_rank4(x, "global_max_pool");
  const std::size_t nc = x.dim(0) * x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  if (plane == 0) throw std::invalid_argument("global_max_pool: empty spatial extent");
  std::vector<double> out(nc);
  std::vector<std::size_t> arg(nc);
  for (std::size_t p = 0; p < nc; ++p) {
    const double* row = x.data().data() + p * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (row[i] > row[best]) best = i;  // strict: first maximum wins
    }
    arg[p] = p * plane + best;
    out[p] = row[best];
  }
  if (tensor::BranchTrace::active()) {
    for (auto a : arg) tensor::BranchTrace::record(a);
  }
  return Tensor::from_op("global_max_pool", {x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                         [arg = std::move(arg)](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t p = 0; p < arg.size(); ++p) gx[arg[p]] += self.grad[p];
                         });
}

Tensor channel_avg_map(const Tensor& x) {
  require_rank4(x, "channel_avg_map");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(c);
  std::vector<double> out(n * plane, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    double* dst = out.data() + b * plane;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src = x.data().data() + (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
  }
  return Tensor::from_op("channel_avg_map", {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x},
                         [n, c, plane, inv](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t b = 0; b < n; ++b) {
                             const double* g = self.grad.data() + b * plane;
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               double* dst = gx.data() + (b * c + ch) * plane;
                               for (std::size_t i = 0; i < plane; ++i) dst[i] += g[i] * inv;
                             }
                           }
                         });
}

Tensor channel_max_map(const Tensor& x) {
  require_rank4(x, "channel_max_map");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (c == 0) throw std::invalid_argument("channel_max_map: no channels");
  std::vector<double> out(n * plane);
  std::vector<std::size_t> arg(n * plane);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      std::size_t best = (b * c) * plane + i;
      for (std::size_t ch = 1; ch < c; ++ch) {
        const std::size_t idx = (b * c + ch) * plane + i;
        if (x.data()[idx] > x.data()[best]) best = idx;
      }
      arg[b * plane + i] = best;
      out[b * plane + i] = x.data()[best];
    }
  }
  if (tensor::BranchTrace::active()) {
    for (auto a : arg) tensor::BranchTrace::record(a);
  }
  return Tensor::from_op("channel_max_map", {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x},
                         [arg = std::move(arg)](tensor::detail::Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t p = 0; p < arg.size(); ++p) gx[arg[p]] += self.grad[p];
                         });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const auto& first = parts.front();
  if (first.rank() < 2) throw std::invalid_argument("concat: inputs need a channel axis");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.rank() && p.dim(0) == first.dim(0);
    for (std::size_t d = 2; ok && d < p.rank(); ++d) ok = p.dim(d) == first.dim(d);
    if (!ok) {
      throw std::invalid_argument("concat: " + tensor::to_string(p.shape()) +
                                  " does not match " + tensor::to_string(first.shape()) +
                                  " outside the channel axis");
    }
    channels += p.dim(1);
  }
  const std::size_t n = first.dim(0);
  std::size_t inner = 1;
  for (std::size_t d = 2; d < first.rank(); ++d) inner *= first.dim(d);

  tensor::Shape shape = first.shape();
  shape[1] = channels;
  std::vector<double> out(n * channels * inner);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.dim(1) * inner;
    for (std::size_t b = 0; b < n; ++b) {
      std::copy_n(p.data().data() + b * block, block,
                  out.data() + b * channels * inner + offset);
    }
    offset += block;
    widths.push_back(block);
  }
  return Tensor::from_op("concat", std::move(shape), std::move(out), parts,
                         [n, channels, inner, widths](tensor::detail::Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                             auto& parent = *self.parents[k];
                             const std::size_t block = widths[k];
                             if (parent.requires_grad) {
                               auto& g = parent.grad_buffer();
                               for (std::size_t b = 0; b < n; ++b) {
                                 const double* src = self.grad.data() + b * channels * inner + offset;
                                 for (std::size_t i = 0; i < block; ++i) g[b * block + i] += src[i];
                               }
                             }
                             offset += block;
                           }
                         });
}

}  // namespace bitforge::ops

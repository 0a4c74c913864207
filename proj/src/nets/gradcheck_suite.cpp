#include "bitforge/gradcheck_suite.hpp"

#include "bitforge/nets.hpp"
#include "bitforge/ops.hpp"

namespace bitforge::gradcheck {
namespace {

using tensor::Shape;
using tensor::Tensor;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> d(tensor::numel(shape));
  for (auto& v : d) v = rng.normal();
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

std::string label(const std::string& op, const Shape& s) {
  std::string out = op + "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

// Reduces y to a scalar with fixed random weights, so every output element
// carries a distinct gradient.
Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng, false)));
}

using Unary = Tensor (*)(const Tensor&);

void add_unary(std::vector<Case>& cases, const std::string& name, Unary op,
               const std::vector<Shape>& shapes, Rng& rng) {
  for (const auto& s : shapes) {
    const std::uint64_t ws = rng.next();
    cases.push_back({label(name, s),
                     [op, ws](std::span<const Tensor> in) { return weighted_sum(op(in[0]), ws); },
                     {random_tensor(s, rng)},
                     {}});
  }
}

// Zero biases park ReLU inputs exactly on the kink (a channel that is all
// zero after one ReLU feeds exactly 0 into the next), where central
// differences are meaningless.
void randomize_biases(const nets::ParamList& params, Rng& rng) {
  for (const auto& p : params) {
    if (!p.name.ends_with(".bias")) continue;
    for (auto& v : Tensor(p.value).mutable_data()) v = 0.2 * rng.normal();
  }
}

// Blocks hold parameter handles, so listing the parameters as inputs lets
// the check perturb the same storage the captured block reads.
template <typename Block>
void add_block(std::vector<Case>& cases, const std::string& name, const Block& block,
               const std::vector<Shape>& shapes, Rng& rng, std::size_t per_input,
               double input_scale = 1.0) {
  nets::ParamList params;
  block.collect(name, params);
  randomize_biases(params, rng);
  for (const auto& s : shapes) {
    const std::uint64_t ws = rng.next();
    std::vector<Tensor> inputs = {random_tensor(s, rng)};
    for (auto& v : inputs[0].mutable_data()) v *= input_scale;
    for (const auto& p : params) inputs.push_back(p.value);
    Options o;
    o.max_per_input = per_input;
    o.seed = ws;
    cases.push_back({label(name, s),
                     [block, ws](std::span<const Tensor> in) {
                       return weighted_sum(block(in[0]), ws);
                     },
                     inputs, o});
  }
}

}  // namespace

std::vector<Case> standard_cases(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck"));
  std::vector<Case> cases;
  const std::vector<Shape> images = {{1, 2, 5, 5}, {2, 3, 6, 7}, {1, 4, 8, 8}};

  // conv2d: 3x3 pad 1, 3x3 stride 2, 1x1 pointwise, each with bias
  struct ConvGeom {
    std::size_t k, stride, pad;
  };
  for (auto g : {ConvGeom{3, 1, 1}, ConvGeom{3, 2, 0}, ConvGeom{1, 1, 0}}) {
    for (const auto& s : images) {
      const std::size_t out = 3;
      const std::uint64_t ws = rng.next();
      std::vector<Tensor> in = {random_tensor(s, rng), random_tensor({out, s[1], g.k, g.k}, rng),
                                random_tensor({out}, rng)};
      cases.push_back({label("conv2d_k" + std::to_string(g.k) + "s" + std::to_string(g.stride), s),
                       [g, ws](std::span<const Tensor> t) {
                         return weighted_sum(ops::conv2d(t[0], t[1], t[2], g.stride, g.pad), ws);
                       },
                       in,
                       {}});
    }
  }
  for (std::size_t stride : {1, 2}) {
    for (const auto& s : images) {
      const std::uint64_t ws = rng.next();
      std::vector<Tensor> in = {random_tensor(s, rng), random_tensor({s[1], 1, 3, 3}, rng)};
      cases.push_back({label("depthwise_s" + std::to_string(stride), s),
                       [stride, ws](std::span<const Tensor> t) {
                         return weighted_sum(ops::depthwise_conv2d(t[0], t[1], stride, 1), ws);
                       },
                       in,
                       {}});
    }
  }
  add_unary(cases, "avg_pool3", [](const Tensor& x) { return ops::avg_pool2d(x, 3, 1, 1); },
            images, rng);
  add_unary(cases, "pixel_shuffle2", [](const Tensor& x) { return ops::pixel_shuffle(x, 2); },
            {{1, 4, 3, 3}, {2, 8, 2, 5}, {1, 12, 4, 4}}, rng);
  add_unary(cases, "pixel_unshuffle2", [](const Tensor& x) { return ops::pixel_unshuffle(x, 2); },
            {{1, 1, 4, 4}, {2, 2, 6, 4}, {1, 3, 8, 2}}, rng);
  add_unary(cases, "relu", ops::relu, images, rng);
  add_unary(cases, "sigmoid", ops::sigmoid, images, rng);
  add_unary(cases, "scale", [](const Tensor& x) { return ops::scale(x, -1.75); }, images, rng);
  add_unary(cases, "global_avg_pool", ops::global_avg_pool, images, rng);
  add_unary(cases, "global_max_pool", ops::global_max_pool, images, rng);
  add_unary(cases, "channel_avg_map", ops::channel_avg_map, images, rng);
  add_unary(cases, "channel_max_map", ops::channel_max_map, images, rng);

  // binary ops: full shape, per-channel gate, spatial map
  for (const auto& s : images) {
    const std::vector<Shape> rhs = {s, {s[0], s[1], 1, 1}, {s[0], 1, s[2], s[3]}};
    for (const auto& r : rhs) {
      const std::uint64_t ws = rng.next();
      std::vector<Tensor> in = {random_tensor(s, rng), random_tensor(r, rng)};
      cases.push_back({label("add", s) + label("", r),
                       [ws](std::span<const Tensor> t) {
                         return weighted_sum(ops::add(t[0], t[1]), ws);
                       },
                       in,
                       {}});
      in = {random_tensor(s, rng), random_tensor(r, rng)};
      cases.push_back({label("mul", s) + label("", r),
                       [ws](std::span<const Tensor> t) {
                         return weighted_sum(ops::mul(t[0], t[1]), ws);
                       },
                       in,
                       {}});
    }
    const std::uint64_t ws = rng.next();
    cases.push_back({label("mul_sigmoid", s),
                     [ws](std::span<const Tensor> t) {
                       return weighted_sum(ops::mul(t[0], ops::sigmoid(t[1])), ws);
                     },
                     {random_tensor(s, rng), random_tensor(s, rng)},
                     {}});
  }
  for (const auto& s : images) {
    const std::uint64_t ws = rng.next();
    std::vector<Tensor> in = {random_tensor(s, rng), random_tensor({s[0], 2, s[2], s[3]}, rng),
                              random_tensor({s[0], 1, s[2], s[3]}, rng)};
    cases.push_back({label("concat", s),
                     [ws](std::span<const Tensor> t) {
                       return weighted_sum(ops::concat({t[0], t[1], t[2]}), ws);
                     },
                     in,
                     {}});
  }
  for (const auto& s : images) {
    std::vector<double> y(tensor::numel(s));
    for (auto& v : y) v = static_cast<double>(rng.below(2));
    const Tensor target(s, y);
    cases.push_back({label("bce_with_logits", s),
                     [target](std::span<const Tensor> t) {
                       return ops::bce_with_logits(t[0], target);
                     },
                     {random_tensor(s, rng)},
                     {}});
    const Tensor other = random_tensor(s, rng, false);
    cases.push_back({label("mean_abs_error", s),
                     [other](std::span<const Tensor> t) {
                       return ops::mean_abs_error(t[0], other);
                     },
                     {random_tensor(s, rng)},
                     {}});
  }
  // conv -> sigmoid -> bce composite
  for (const auto& s : images) {
    std::vector<double> y(s[0] * 2 * s[2] * s[3]);
    for (auto& v : y) v = static_cast<double>(rng.below(2));
    const Tensor target({s[0], 2, s[2], s[3]}, y);
    std::vector<Tensor> in = {random_tensor(s, rng), random_tensor({2, s[1], 3, 3}, rng),
                              random_tensor({2}, rng)};
    cases.push_back({label("conv_sigmoid_bce", s),
                     [target](std::span<const Tensor> t) {
                       auto z = ops::conv2d(t[0], t[1], t[2], 1, 1);
                       return ops::bce_with_logits(ops::scale(ops::sigmoid(z), 4.0), target);
                     },
                     in,
                     {}});
  }

  // network blocks, parameters included as inputs
  Rng init(derive_seed(seed, "gradcheck-blocks"));
  const std::vector<Shape> feat8 = {{1, 8, 5, 5}, {2, 8, 6, 7}, {1, 8, 8, 8}};
  const std::vector<Shape> rgb = {{1, 3, 5, 5}, {2, 3, 6, 7}, {1, 3, 8, 8}};
  add_block(cases, "conv_layer", nets::Conv2d::make(8, 4, 3, init), feat8, rng, 0);
  add_block(cases, "depthwise_layer", nets::DepthwiseConv2d::make(8, 3, init), feat8, rng, 0);
  add_block(cases, "inception", nets::Inception::make(3, 8, init), rgb, rng, 12);
  // unit-variance inputs push the channel gate to pre-activations near 15,
  // where its gradients drop below finite-difference roundoff
  add_block(cases, "cbam", nets::Cbam::make(8, init), feat8, rng, 12, 0.5);
  add_block(cases, "ira", nets::IraBlock::make(8, 2, init), feat8, rng, 12);
  add_block(cases, "irb", nets::IrbOut::make(8, 2, 3, init), feat8, rng, 12);
  {
    nets::SrTrunk trunk = nets::SrTrunk::make({nets::ScaleTag::kX2, 4, 2, false}, init);
    add_block(cases, "sr_trunk", trunk, rgb, rng, 12);
  }
  add_block(cases, "sr_head_x2", nets::SrHead::make(4, 2, init),
            {{1, 4, 3, 3}, {2, 4, 4, 5}, {1, 4, 5, 5}}, rng, 12);
  add_block(cases, "sr_head_x4", nets::SrHead::make(4, 4, init),
            {{1, 4, 2, 2}, {2, 4, 3, 2}, {1, 4, 3, 3}}, rng, 12);
  return cases;
}

Case submodel_case(std::uint64_t seed) {
  Rng init(derive_seed(seed, "gradcheck-submodel"));
  nets::ArchConfig arch;
  auto sr2 = std::make_shared<nets::SrTrunk>(
      nets::SrTrunk::make({nets::ScaleTag::kX2, arch.trunk_width, arch.sr_res_blocks, true}, init));
  auto sr4 = std::make_shared<nets::SrTrunk>(
      nets::SrTrunk::make({nets::ScaleTag::kX4, arch.trunk_width, arch.sr_res_blocks, true}, init));
  const nets::SubmodelWeights w = nets::make_submodel(arch, 4, sr2, sr4, init);

  std::vector<double> y(3 * 8 * 8);
  for (auto& v : y) v = static_cast<double>(init.below(2));
  const Tensor target({1, 3, 8, 8}, y);

  std::vector<Tensor> inputs = {random_tensor({1, 3, 8, 8}, init)};
  for (auto& v : inputs[0].mutable_data()) v = 0.5 + 0.25 * v;
  randomize_biases(w.learnable(), init);
  for (const auto& p : w.learnable()) inputs.push_back(p.value);
  Options o;
  o.max_per_input = 6;
  o.seed = seed;
  return {"submodel[1x3x8x8]",
          [w, target](std::span<const Tensor> in) {
            return ops::bce_with_logits(nets::submodel_forward(w, in[0]), target);
          },
          inputs, o};
}

Report run_case(const Case& c) { return grad_check(c.f, c.inputs, c.options); }

}  // namespace bitforge::gradcheck

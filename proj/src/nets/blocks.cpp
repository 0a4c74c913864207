#include <stdexcept>
#include <string>

#include "bitforge/nets.hpp"
#include "bitforge/ops.hpp"

namespace bitforge::nets {

Tensor ResBlock::operator()(const Tensor& x) const {
  return ops::add(x, conv2(ops::relu(conv1(x))));
}

SrTrunk SrTrunk::make(const SrEncoderSpec& spec, Rng& rng) {
  SrTrunk t;
  t.spec = spec;
  const std::size_t c = spec.trunk_width;
  t.head = Conv2d::make(kChannels, c, 3, rng);
  for (std::size_t i = 0; i < spec.num_res_blocks; ++i) {
    ResBlock b;
    b.conv1 = Conv2d::make(c, c, 3, rng);
    b.conv2 = Conv2d::make(c, c, 3, rng);
    t.blocks.push_back(std::move(b));
  }
  t.tail = Conv2d::make(c, c, 3, rng);
  t.set_frozen(spec.frozen);
  return t;
}

Tensor SrTrunk::operator()(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != kChannels) {
    throw std::invalid_argument("SrTrunk: expected N,3,H,W input, got " +
                                tensor::to_string(x.shape()));
  }
  const Tensor h = head(x);
  Tensor r = h;
  for (const auto& b : blocks) r = b(r);
  return ops::add(tail(r), h);
}

void SrTrunk::collect(const std::string& prefix, ParamList& out) const {
  head.collect(prefix + ".head", out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = prefix + ".blocks." + std::to_string(i);
    blocks[i].conv1.collect(p + ".conv1", out);
    blocks[i].conv2.collect(p + ".conv2", out);
  }
  tail.collect(prefix + ".tail", out);
}

void SrTrunk::set_frozen(bool frozen) {
  spec.frozen = frozen;
  ParamList params;
  collect("", params);
  for (auto& p : params) p.value.set_requires_grad(!frozen);
}

std::uint64_t SrTrunk::checksum() const {
  ParamList params;
  collect("", params);
  std::uint64_t h = fnv1a64(std::string_view("trunk"));
  for (const auto& p : params) {
    auto d = p.value.data();
    h = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(d.data()),
                          d.size() * sizeof(double)),
                h);
  }
  return h;
}

SrHead SrHead::make(std::size_t trunk_width, std::size_t scale, Rng& rng) {
  if (scale != 2 && scale != 4) {
    throw std::invalid_argument("SrHead: scale must be 2 or 4, got " + std::to_string(scale));
  }
  SrHead h;
  h.scale = scale;
  h.expand = Conv2d::make(trunk_width, kChannels * scale * scale, 3, rng);
  h.out = Conv2d::make(kChannels, kChannels, 3, rng);
  return h;
}

Tensor SrHead::operator()(const Tensor& features) const {
  return out(ops::pixel_shuffle(expand(features), scale));
}

void SrHead::collect(const std::string& prefix, ParamList& out_params) const {
  expand.collect(prefix + ".expand", out_params);
  out.collect(prefix + ".out", out_params);
}

Inception Inception::make(std::size_t in, std::size_t width, Rng& rng) {
  if (width % 4 != 0 || width == 0) {
    throw std::invalid_argument("Inception: width " + std::to_string(width) +
                                " is not a positive multiple of 4");
  }
  const std::size_t q = width / 4;
  Inception m;
  m.b1 = Conv2d::make(in, q, 1, rng);
  m.b2_reduce = Conv2d::make(in, q, 1, rng);
  m.b2 = Conv2d::make(q, q, 3, rng);
  m.b3_reduce = Conv2d::make(in, q, 1, rng);
  m.b3 = Conv2d::make(q, q, 5, rng);
  m.b4 = Conv2d::make(in, q, 1, rng);
  return m;
}

Tensor Inception::operator()(const Tensor& x) const {
  Tensor y1 = ops::relu(b1(x));
  Tensor y2 = ops::relu(b2(ops::relu(b2_reduce(x))));
  Tensor y3 = ops::relu(b3(ops::relu(b3_reduce(x))));
  Tensor y4 = ops::relu(b4(ops::avg_pool2d(x, 3, 1, 1)));
  return ops::concat({y1, y2, y3, y4});
}

void Inception::collect(const std::string& prefix, ParamList& out) const {
  b1.collect(prefix + ".b1", out);
  b2_reduce.collect(prefix + ".b2_reduce", out);
  b2.collect(prefix + ".b2", out);
  b3_reduce.collect(prefix + ".b3_reduce", out);
  b3.collect(prefix + ".b3", out);
  b4.collect(prefix + ".b4", out);
}

Cbam Cbam::make(std::size_t channels, Rng& rng) {
  if (channels < 8) {
    throw std::invalid_argument("Cbam: needs at least 8 channels for reduction 8, got " +
                                std::to_string(channels));
  }
  Cbam m;
  m.mlp_reduce = Conv2d::make(channels, channels / 8, 1, rng);
  m.mlp_expand = Conv2d::make(channels / 8, channels, 1, rng);
  m.spatial = Conv2d::make(2, 1, 7, rng);
  return m;
}

Tensor Cbam::channel_gate(const Tensor& x) const {
  auto mlp = [this](const Tensor& d) { return mlp_expand(ops::relu(mlp_reduce(d))); };
  return ops::sigmoid(ops::add(mlp(ops::global_avg_pool(x)), mlp(ops::global_max_pool(x))));
}

Tensor Cbam::spatial_gate(const Tensor& x) const {
  return ops::sigmoid(spatial(ops::concat({ops::channel_avg_map(x), ops::channel_max_map(x)})));
}

Tensor Cbam::operator()(const Tensor& x) const {
  Tensor refined = ops::mul(x, channel_gate(x));
  return ops::mul(refined, spatial_gate(refined));
}

void Cbam::collect(const std::string& prefix, ParamList& out) const {
  mlp_reduce.collect(prefix + ".mlp_reduce", out);
  mlp_expand.collect(prefix + ".mlp_expand", out);
  spatial.collect(prefix + ".spatial", out);
}

IraBlock IraBlock::make(std::size_t width, std::size_t expansion, Rng& rng) {
  const std::size_t hidden = width * expansion;
  if (hidden < 4) throw std::invalid_argument("IraBlock: expanded width must be >= 4");
  IraBlock b;
  b.expand = Conv2d::make(width, hidden, 1, rng);
  b.dw = DepthwiseConv2d::make(hidden, 3, rng);
  b.se_reduce = Conv2d::make(hidden, hidden / 4, 1, rng);
  b.se_expand = Conv2d::make(hidden / 4, hidden, 1, rng);
  b.project = Conv2d::make(hidden, width, 1, rng);
  return b;
}

Tensor IraBlock::operator()(const Tensor& x) const {
  Tensor h = ops::relu(dw(ops::relu(expand(x))));
  Tensor gate = ops::sigmoid(se_expand(ops::relu(se_reduce(ops::global_avg_pool(h)))));
  return ops::add(x, project(ops::mul(h, gate)));
}

void IraBlock::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  dw.collect(prefix + ".dw", out);
  se_reduce.collect(prefix + ".se_reduce", out);
  se_expand.collect(prefix + ".se_expand", out);
  project.collect(prefix + ".project", out);
}

IrbOut IrbOut::make(std::size_t width, std::size_t expansion, std::size_t out_channels,
                    Rng& rng) {
  const std::size_t hidden = width * expansion;
  IrbOut b;
  b.expand = Conv2d::make(width, hidden, 1, rng);
  b.dw = DepthwiseConv2d::make(hidden, 3, rng);
  b.project = Conv2d::make(hidden, out_channels, 1, rng);
  return b;
}

Tensor IrbOut::operator()(const Tensor& x) const {
  return project(ops::relu(dw(ops::relu(expand(x)))));
}

void IrbOut::collect(const std::string& prefix, ParamList& out) const {
  expand.collect(prefix + ".expand", out);
  dw.collect(prefix + ".dw", out);
  project.collect(prefix + ".project", out);
}

}  // namespace bitforge::nets

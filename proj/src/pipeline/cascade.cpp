#include <stdexcept>
#include <string>

#include "bitforge/cascade.hpp"

namespace bitforge::cascade {

BitPlane predict_plane(const PlanarImage& img, const nets::SubmodelWeights& w) {
  const auto logits = nets::submodel_forward(img, w);
  auto d = logits.data();
  std::vector<std::uint8_t> bits(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) bits[i] = d[i] > 0.0 ? 1 : 0;
  return BitPlane(img.width(), img.height(), std::move(bits));
}

PlanarImage run(const PlanarImage& img, int depth_out, const PlanePredictor& predict) {
  if (depth_out < img.bit_depth() || depth_out > kMaxBitDepth) {
    throw std::invalid_argument("cascade: cannot go from depth " +
                                std::to_string(img.bit_depth()) + " to " +
                                std::to_string(depth_out));
  }
  PlanarImage cur = img;
  while (cur.bit_depth() < depth_out) cur = append_lsb(cur, predict(cur));
  return cur;
}

PlanarImage cascade_infer(const PlanarImage& img, std::span<const nets::SubmodelWeights> stages,
                          int depth_out) {
  const int depth_in = img.bit_depth();
  if (depth_out <= depth_in ||
      stages.size() != static_cast<std::size_t>(depth_out - depth_in)) {
    throw std::invalid_argument("cascade: " + std::to_string(stages.size()) +
                                " stages cannot take depth " + std::to_string(depth_in) +
                                " to " + std::to_string(depth_out));
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].input_depth != depth_in + static_cast<int>(i)) {
      throw std::invalid_argument("cascade: stage " + std::to_string(i) + " expects depth " +
                                  std::to_string(stages[i].input_depth) + ", cascade is at " +
                                  std::to_string(depth_in + static_cast<int>(i)));
    }
  }
  return run(img, depth_out, [&](const PlanarImage& cur) {
    return predict_plane(cur, stages[static_cast<std::size_t>(cur.bit_depth() - depth_in)]);
  });
}

double plane_accuracy(const BitPlane& predicted, const BitPlane& truth) {
  if (predicted.width() != truth.width() || predicted.height() != truth.height()) {
    throw std::invalid_argument("plane_accuracy: dimension mismatch");
  }
  auto a = predicted.bits();
  auto b = truth.bits();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i];
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kZeroPad: return "zero_pad";
    case Method::kReplicate: return "replicate";
    case Method::kGain: return "gain";
    case Method::kCascade: return "cascade";
  }
  return "?";
}

PlanarImage expand(const PlanarImage& low, Method m, int depth_out) {
  switch (m) {
    case Method::kZeroPad: return zero_pad_expand(low, depth_out);
    case Method::kReplicate: return bit_replicate_expand(low, depth_out);
    case Method::kGain: return gain_expand(low, depth_out);
    case Method::kCascade: break;
  }
  throw std::invalid_argument("expand: the cascade needs trained stages");
}

std::vector<metrics::MetricRow> evaluate(const std::vector<PlanarImage>& gt, Method m,
                                         int depth_in, int depth_out,
                                         std::span<const nets::SubmodelWeights> stages,
                                         const std::string& label) {
  if (gt.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::string name = label.empty() ? std::string(to_string(m)) : label;
  std::vector<metrics::MetricRow> rows;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const PlanarImage& g = gt[i];
    if (g.bit_depth() < depth_out) {
      throw std::invalid_argument("evaluate: ground truth shallower than depth_out");
    }
    const PlanarImage truth = g.bit_depth() == depth_out ? g : quantize(g, depth_out);
    const PlanarImage low = quantize(g, depth_in);
    const PlanarImage out = m == Method::kCascade ? cascade_infer(low, stages, depth_out)
                                                  : expand(low, m, depth_out);
    const auto r = metrics::compare(out, truth);
    rows.push_back({name + "#" + std::to_string(i), depth_in, depth_out, r.psnr, r.ssim});
    psnr_sum += r.psnr;
    ssim_sum += r.ssim;
  }
  const double n = static_cast<double>(gt.size());
  rows.push_back({name, depth_in, depth_out, psnr_sum / n, ssim_sum / n});
  return rows;
}

}  // namespace bitforge::cascade

#pragma once

// Stage-by-stage inference and evaluation against classical expanders.

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bitforge/bitcore.hpp"
#include "bitforge/metrics.hpp"
#include "bitforge/nets.hpp"

namespace bitforge::cascade {

/// logit > 0 -> 1.
BitPlane predict_plane(const PlanarImage& img, const nets::SubmodelWeights& w);

using PlanePredictor = std::function<BitPlane(const PlanarImage&)>;

/// predict, append, repeat until depth_out.
PlanarImage run(const PlanarImage& img, int depth_out, const PlanePredictor& predict);

/// Stages must cover depths img.bit_depth() .. depth_out - 1 in order.
PlanarImage cascade_infer(const PlanarImage& img, std::span<const nets::SubmodelWeights> stages,
                          int depth_out);

/// Fraction of matching entries.
double plane_accuracy(const BitPlane& predicted, const BitPlane& truth);

enum class Method { kZeroPad, kReplicate, kGain, kCascade };
std::string_view to_string(Method m);

/// Expands quantize(gt, depth_in) to depth_out with a classical method.
PlanarImage expand(const PlanarImage& low, Method m, int depth_out);

/// Per-image rows ("<label>#<i>") followed by the mean row ("<label>").
/// Ground truth is quantize(gt, depth_out) of each 16-bit image.
std::vector<metrics::MetricRow> evaluate(const std::vector<PlanarImage>& gt, Method m,
                                         int depth_in, int depth_out,
                                         std::span<const nets::SubmodelWeights> stages = {},
                                         const std::string& label = "");

}  // namespace bitforge::cascade

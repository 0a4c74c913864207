#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bitforge/dataset.hpp"

namespace bitforge::data {
namespace {

double cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

struct Tap {
  std::vector<std::size_t> src;
  std::vector<double> weight;
};

// Weights for every output position along one axis.
std::vector<Tap> taps(std::size_t in, std::size_t out, std::size_t factor) {
  const double f = static_cast<double>(factor);
  std::vector<Tap> t(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * f - 0.5;
    const auto lo = static_cast<long>(std::floor(center - 2.0 * f)) + 1;
    const auto hi = static_cast<long>(std::ceil(center + 2.0 * f)) - 1;
    double sum = 0.0;
    for (long j = lo; j <= hi; ++j) {
      const double w = cubic((static_cast<double>(j) - center) / f);
      if (w == 0.0) continue;
      const long clamped = std::clamp<long>(j, 0, static_cast<long>(in) - 1);
      t[i].src.push_back(static_cast<std::size_t>(clamped));
      t[i].weight.push_back(w);
      sum += w;
    }
    for (auto& w : t[i].weight) w /= sum;
  }
  return t;
}

}  // namespace

std::vector<double> bicubic_downsample(const std::vector<double>& planes, std::size_t channels,
                                       std::size_t height, std::size_t width,
                                       std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("bicubic_downsample: zero factor");
  if (planes.size() != channels * height * width) {
    throw std::invalid_argument("bicubic_downsample: buffer does not match dimensions");
  }
  const std::size_t oh = height / factor, ow = width / factor;
  if (oh == 0 || ow == 0) throw std::invalid_argument("bicubic_downsample: image too small");
  const auto tx = taps(width, ow, factor);
  const auto ty = taps(height, oh, factor);

  // horizontal pass, then vertical
  std::vector<double> mid(channels * height * ow);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      const double* row = &planes[(c * height + y) * width];
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < tx[x].src.size(); ++k) s += tx[x].weight[k] * row[tx[x].src[k]];
        mid[(c * height + y) * ow + x] = s;
      }
    }
  }
  std::vector<double> out(channels * oh * ow);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < ty[y].src.size(); ++k) {
          s += ty[y].weight[k] * mid[(c * height + ty[y].src[k]) * ow + x];
        }
        out[(c * oh + y) * ow + x] = s;
      }
    }
  }
  return out;
}

void crop_planes(const double* src, std::size_t channels, std::size_t height, std::size_t width,
                 std::size_t y0, std::size_t x0, std::size_t ph, std::size_t pw, double* dst) {
  if (y0 + ph > height || x0 + pw > width) {
    throw std::out_of_range("crop_planes: window outside the image");
  }
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < ph; ++y) {
      const double* s = src + (c * height + y0 + y) * width + x0;
      std::copy(s, s + pw, dst + (c * ph + y) * pw);
    }
  }
}

}  // namespace bitforge::data

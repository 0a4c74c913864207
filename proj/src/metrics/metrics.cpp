#include "bitforge/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace bitforge::metrics {
namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

void check_pair(const PlanarImage& a, const PlanarImage& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument(std::string(what) + ": image dimensions differ");
  }
  if (a.bit_depth() != b.bit_depth()) {
    throw std::invalid_argument(std::string(what) + ": bit depths differ");
  }
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double sum = 0.0;
  const double center = (kWindow - 1) / 2.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - center;
    taps[i] = std::exp(-(d * d) / (2.0 * kSigma * kSigma));
    sum += taps[i];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Separable valid-mode filter: src is h x w, result (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w,
                                 std::size_t h, const std::array<double, kWindow>& taps) {
  const std::size_t ow = w - kWindow + 1;
  const std::size_t oh = h - kWindow + 1;
  std::vector<double> horiz(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    const double* row = &src[y * w];
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * row[x + k];
      horiz[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += taps[k] * horiz[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const PlanarImage& a, const PlanarImage& b) {
  check_pair(a, b, "psnr");
  auto sa = a.samples();
  auto sb = b.samples();
  if (sa.empty()) throw std::invalid_argument("psnr: empty images");
  // Squared errors are integers well below 2^32; the sum fits in 64 bits
  // for any image that fits in memory, so the MSE is exact up to the divide.
  std::uint64_t sse = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const std::int64_t d = static_cast<std::int64_t>(sa[i]) - sb[i];
    sse += static_cast<std::uint64_t>(d * d);
  }
  if (sse == 0) return std::numeric_limits<double>::infinity();
  const double mse = static_cast<double>(sse) / static_cast<double>(sa.size());
  const double peak = static_cast<double>(a.max_value());
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const PlanarImage& a, const PlanarImage& b) {
  check_pair(a, b, "ssim");
  const std::size_t w = a.width();
  const std::size_t h = a.height();
  if (w < kWindow || h < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const auto taps = gaussian_taps();
  const double peak = static_cast<double>(a.max_value());
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  const std::size_t n = w * h;
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < kChannels; ++c) {
    auto pa = a.samples().subspan(c * n, n);
    auto pb = b.samples().subspan(c * n, n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = pa[i];
      y[i] = pb[i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, taps);
    const auto my = filter_valid(y, w, h, taps);
    const auto sxx = filter_valid(xx, w, h, taps);
    const auto syy = filter_valid(yy, w, h, taps);
    const auto sxy = filter_valid(xy, w, h, taps);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
      const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
      total += num / den;
    }
    count += mx.size();
  }
  const double value = total / static_cast<double>(count);
  // Window sums can leave the ratio a few ulps outside the closed range.
  return std::clamp(value, -1.0, 1.0);
}

MetricReport compare(const PlanarImage& a, const PlanarImage& b) {
  return {psnr(a, b), ssim(a, b), a.plane_size()};
}

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "method,b_L,b_H,psnr_db,ssim\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.depth_in << ',' << r.depth_out << ','
        << format_value(r.psnr) << ',' << format_value(r.ssim) << '\n';
  }
}

}  // namespace bitforge::metrics

#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "bitforge/bitcore.hpp"

namespace bitforge::metrics {

struct MetricReport {
  double psnr = 0.0;  // dB, +inf for identical images
  double ssim = 0.0;
  std::size_t pixel_count = 0;
};

/// 10 log10(MAX^2 / MSE) in integer sample units, MAX = 2^b - 1.
double psnr(const PlanarImage& a, const PlanarImage& b);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), computed per
/// channel and averaged. Needs min(width, height) >= 11.
double ssim(const PlanarImage& a, const PlanarImage& b);

MetricReport compare(const PlanarImage& a, const PlanarImage& b);

/// One CSV line of a metric table.
struct MetricRow {
  std::string method;
  int depth_in = 0;
  int depth_out = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Writes `method,b_L,b_H,psnr_db,ssim` with a header line. Values use a
/// fixed 17-significant-digit format; infinite PSNR prints as `inf`.
void write_csv(std::ostream& out, const std::vector<MetricRow>& rows);
std::string format_value(double v);

}  // namespace bitforge::metrics

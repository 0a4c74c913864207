#pragma once

// Reference computations written independently of the library, used as
// ground truth by the unit and acceptance tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace oracle {

// Bits of v at `depth`, MSB first, as characters.
inline std::string bit_string(std::uint32_t v, int depth) {
  std::string s;
  for (int i = depth - 1; i >= 0; --i) s += ((v >> i) & 1u) ? '1' : '0';
  return s;
}

inline std::uint32_t from_bit_string(const std::string& s) {
  std::uint32_t v = 0;
  for (char ch : s) v = v * 2 + (ch == '1');
  return v;
}

// Exact mean squared residual of zero padding 4 -> 8 bits on uniform 8-bit
// samples: the residual is the dropped low nibble, uniform on 0..15.
inline double zero_pad_psnr_4_to_8() {
  double acc = 0.0;
  for (int e = 0; e < 16; ++e) acc += e * e;
  return 10.0 * std::log10(255.0 * 255.0 / (acc / 16.0));
}

inline double psnr_from_mse(double max_value, double mse) {
  return 10.0 * std::log10(max_value * max_value / mse);
}

// SSIM of two constant images: contrast and structure terms are 1.
inline double constant_ssim(double mean_a, double mean_b, double max_value) {
  const double c1 = (0.01 * max_value) * (0.01 * max_value);
  return (2 * mean_a * mean_b + c1) / (mean_a * mean_a + mean_b * mean_b + c1);
}

// Direct windowed SSIM on one channel, row-major h x w, valid windows only.
inline double ssim_channel(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t h, std::size_t w, double max_value) {
  constexpr int kWin = 11;
  double g[kWin], gs = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - 5;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    gs += g[i];
  }
  const double c1 = (0.01 * max_value) * (0.01 * max_value);
  const double c2 = (0.03 * max_value) * (0.03 * max_value);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + kWin <= h; ++y) {
    for (std::size_t x = 0; x + kWin <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < kWin; ++i) {
        for (int j = 0; j < kWin; ++j) {
          const double wt = g[i] * g[j] / (gs * gs);
          const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// Scalar recurrences for one-element parameters.
struct SgdScalar {
  double lr, momentum, decay, v = 0.0;
  double step(double w, double g) {
    v = momentum * v + (g + decay * w);
    return w - lr * v;
  }
};

struct AdamScalar {
  double lr, decay, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, s = 0.0;
  int t = 0;
  double step(double w, double g) {
    const double gd = g + decay * w;
    ++t;
    m = b1 * m + (1 - b1) * gd;
    s = b2 * s + (1 - b2) * gd * gd;
    const double mh = m / (1 - std::pow(b1, t)), sh = s / (1 - std::pow(b2, t));
    return w - lr * mh / (std::sqrt(sh) + eps);
  }
};

}  // namespace oracle

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include "bitforge/dataset.hpp"
#include "bitforge/image_io.hpp"

namespace bitforge::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Continuous-valued RGB field in [0,1], converted to 16 bits at the end.
struct Field {
  std::size_t size;
  std::vector<double> v;  // 3 * size * size
  explicit Field(std::size_t s) : size(s), v(kChannels * s * s, 0.0) {}
  double& at(std::size_t c, std::size_t y, std::size_t x) { return v[(c * size + y) * size + x]; }
};

PlanarImage to_16bit(const Field& f) {
  std::vector<std::uint16_t> s(f.v.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<std::uint16_t>(std::lround(std::clamp(f.v[i], 0.0, 1.0) * 65535.0));
  }
  return PlanarImage(f.size, f.size, 16, std::move(s));
}

// Per-channel endpoints spanning most of the range; sometimes descending.
void endpoints(Rng& rng, double& lo, double& hi) {
  lo = rng.uniform(0.0, 0.15);
  hi = rng.uniform(0.85, 1.0);
  if (rng.uniform() < 0.5) std::swap(lo, hi);
}

void linear_gradient(Field& f, Rng& rng) {
  const double theta = rng.uniform(0.0, kTwoPi);
  const double cx = std::cos(theta), cy = std::sin(theta);
  const double n = static_cast<double>(f.size);
  // projection range over the four corners
  const double t0 = std::min(0.0, cx * n) + std::min(0.0, cy * n);
  const double t1 = std::max(0.0, cx * n) + std::max(0.0, cy * n);
  for (std::size_t c = 0; c < kChannels; ++c) {
    double lo, hi;
    endpoints(rng, lo, hi);
    for (std::size_t y = 0; y < f.size; ++y) {
      for (std::size_t x = 0; x < f.size; ++x) {
        const double t = ((x + 0.5) * cx + (y + 0.5) * cy - t0) / (t1 - t0);
        f.at(c, y, x) = lo + (hi - lo) * t;
      }
    }
  }
}

void radial_gradient(Field& f, Rng& rng) {
  const double n = static_cast<double>(f.size);
  const double ox = rng.uniform(0.0, n), oy = rng.uniform(0.0, n);
  const double rmax = std::hypot(std::max(ox, n - ox), std::max(oy, n - oy));
  const double gamma = rng.uniform(0.6, 1.6);
  for (std::size_t c = 0; c < kChannels; ++c) {
    double lo, hi;
    endpoints(rng, lo, hi);
    for (std::size_t y = 0; y < f.size; ++y) {
      for (std::size_t x = 0; x < f.size; ++x) {
        const double r = std::hypot(x + 0.5 - ox, y + 0.5 - oy) / rmax;
        f.at(c, y, x) = lo + (hi - lo) * std::pow(r, gamma);
      }
    }
  }
}

// Sum of low-frequency plane waves: a field shared by all channels plus a
// weaker per-channel one, so colors stay correlated like natural images.
void smooth_noise(Field& f, Rng& rng) {
  struct Wave {
    double kx, ky, phase, amp;
  };
  auto draw = [&rng](std::size_t count) {
    std::vector<Wave> w(count);
    for (std::size_t k = 0; k < count; ++k) {
      const double cycles = rng.uniform(0.5, 3.0);
      const double dir = rng.uniform(0.0, kTwoPi);
      w[k] = {cycles * std::cos(dir), cycles * std::sin(dir), rng.uniform(0.0, kTwoPi),
              1.0 / (1.0 + static_cast<double>(k))};
    }
    return w;
  };
  auto eval = [](const std::vector<Wave>& waves, double u, double v) {
    double s = 0.0, norm = 0.0;
    for (const auto& w : waves) {
      s += w.amp * std::sin(kTwoPi * (w.kx * u + w.ky * v) + w.phase);
      norm += w.amp;
    }
    return s / norm;
  };
  const auto shared = draw(6);
  const double n = static_cast<double>(f.size);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto own = draw(3);
    const double offset = rng.uniform(-0.1, 0.1);
    for (std::size_t y = 0; y < f.size; ++y) {
      for (std::size_t x = 0; x < f.size; ++x) {
        const double u = (x + 0.5) / n, v = (y + 0.5) / n;
        f.at(c, y, x) = 0.5 + offset + 0.3 * eval(shared, u, v) + 0.1 * eval(own, u, v);
      }
    }
  }
}

// Flat-ish ellipses and rectangles over a low-contrast gradient; each shape
// carries its own slight ramp so its interior still bands.
void shapes(Field& f, Rng& rng) {
  const double n = static_cast<double>(f.size);
  {
    const double theta = rng.uniform(0.0, kTwoPi);
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double base = rng.uniform(0.2, 0.8), slope = rng.uniform(-0.3, 0.3);
      for (std::size_t y = 0; y < f.size; ++y) {
        for (std::size_t x = 0; x < f.size; ++x) {
          const double t = ((x + 0.5) * std::cos(theta) + (y + 0.5) * std::sin(theta)) / n;
          f.at(c, y, x) = base + slope * (t - 0.5);
        }
      }
    }
  }
  const std::size_t count = 3 + rng.below(4);
  for (std::size_t s = 0; s < count; ++s) {
    const bool ellipse = rng.uniform() < 0.5;
    const double ox = rng.uniform(0.0, n), oy = rng.uniform(0.0, n);
    const double rx = rng.uniform(n / 10, n / 3), ry = rng.uniform(n / 10, n / 3);
    double color[kChannels];
    for (auto& col : color) col = rng.uniform(0.1, 0.9);
    const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
    for (std::size_t y = 0; y < f.size; ++y) {
      for (std::size_t x = 0; x < f.size; ++x) {
        const double dx = (x + 0.5 - ox) / rx, dy = (y + 0.5 - oy) / ry;
        const bool inside = ellipse ? dx * dx + dy * dy <= 1.0
                                    : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (std::size_t c = 0; c < kChannels; ++c) {
          f.at(c, y, x) = color[c] + gx * dx + gy * dy;
        }
      }
    }
  }
}

}  // namespace

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::kLinearGradient: return "linear_gradient";
    case Generator::kRadialGradient: return "radial_gradient";
    case Generator::kSmoothNoise: return "smooth_noise";
    case Generator::kShapes: return "shapes";
    case Generator::kUniformNoise: return "uniform_noise";
  }
  return "?";
}

Generator parse_generator(std::string_view name) {
  for (auto g : {Generator::kLinearGradient, Generator::kRadialGradient, Generator::kSmoothNoise,
                 Generator::kShapes, Generator::kUniformNoise}) {
    if (to_string(g) == name) return g;
  }
  throw std::invalid_argument("unknown generator '" + std::string(name) + "'");
}

PlanarImage synth_image(Generator g, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  if (g == Generator::kUniformNoise) return uniform_random_image(size, size, 16, rng);
  Field f(size);
  switch (g) {
    case Generator::kLinearGradient: linear_gradient(f, rng); break;
    case Generator::kRadialGradient: radial_gradient(f, rng); break;
    case Generator::kSmoothNoise: smooth_noise(f, rng); break;
    case Generator::kShapes: shapes(f, rng); break;
    case Generator::kUniformNoise: break;
  }
  return to_16bit(f);
}

std::vector<PlanarImage> synth_dataset(const SynthSpec& spec) {
  if (spec.generators.empty()) throw std::invalid_argument("synth_dataset: no generators");
  if (spec.size == 0) throw std::invalid_argument("synth_dataset: zero image size");
  std::vector<PlanarImage> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    out.push_back(synth_image(spec.generators[i % spec.generators.size()], spec.size,
                              derive_seed(spec.seed, "synth", i)));
  }
  return out;
}

PlanarImage uniform_random_image(std::size_t width, std::size_t height, int depth, Rng& rng) {
  PlanarImage img(width, height, depth);
  const std::uint64_t levels = std::uint64_t{1} << depth;
  for (auto& s : img.mutable_samples()) s = static_cast<std::uint16_t>(rng.below(levels));
  return img;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<PlanarImage>& images) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.png", i);
    io::write_png(dir / name, images[i]);
  }
}

std::vector<PlanarImage> read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("dataset directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .png files in " + dir.string());
  std::vector<PlanarImage> out;
  for (const auto& f : files) out.push_back(io::read_png(f));
  return out;
}

Split split_heldout(const std::vector<PlanarImage>& images, double fraction) {
  if (images.size() < 2) throw std::invalid_argument("split_heldout: need at least 2 images");
  auto held = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(images.size())));
  held = std::clamp<std::size_t>(held, 1, images.size() - 1);
  Split s;
  s.train.assign(images.begin(), images.end() - static_cast<std::ptrdiff_t>(held));
  s.heldout.assign(images.end() - static_cast<std::ptrdiff_t>(held), images.end());
  return s;
}

std::vector<double> normalized_samples(const PlanarImage& img) {
  const double inv = 1.0 / static_cast<double>(img.max_value());
  std::vector<double> out(img.size());
  auto s = img.samples();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s[i] * inv;
  return out;
}

}  // namespace bitforge::data

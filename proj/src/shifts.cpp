#include "resque/shifts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "resque/errors.hpp"
#include "resque/rng.hpp"

namespace resque {

std::string_view to_string(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::gaussian:
      return "gaussian";
    case NoiseKind::blur:
      return "blur";
    case NoiseKind::salt_pepper:
      return "salt_pepper";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "blur") return NoiseKind::blur;
  if (name == "salt_pepper" || name == "salt-pepper") return NoiseKind::salt_pepper;
  throw ParameterError("unknown noise kind '" + std::string(name) + "'");
}

ShiftParams level_params(NoiseKind kind, int level) {
  if (level < 0 || level > kMaxShiftLevel) {
    throw ParameterError("shift level " + std::to_string(level) + " outside 0..10");
  }
  ShiftParams p{kind, level};
  const double l = level;
  switch (kind) {
    case NoiseKind::gaussian:
      p.sigma = 0.03 * l;
      break;
    case NoiseKind::blur:
      p.blur_sigma = 0.15 * l;
      p.blur_radius = static_cast<int>(std::ceil(2.0 * p.blur_sigma - 1e-12));
      break;
    case NoiseKind::salt_pepper:
      p.flip_fraction = 0.015 * l;
      break;
    default:
      throw ParameterError("unknown noise kind");
  }
  return p;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
  }
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& w : k) w /= total;
  return k;
}

namespace {

struct ImageGeometry {
  std::size_t channels, height, width;
};

ImageGeometry geometry_of(const Tensor& samples) {
  const auto& s = samples.shape();
  if (s.size() == 4) return {s[1], s[2], s[3]};
  if (s.size() == 3) return {1, s[1], s[2]};
  throw ParameterError("shifts need samples shaped (n, c, h, w) or (n, h, w)");
}

// Mirror index into [0, n) without repeating the edge sample (dcb|abcd|cba).
std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

void blur_image(std::span<float> img, const ImageGeometry& g, const std::vector<double>& kernel, int radius) {
  const long h = static_cast<long>(g.height);
  const long w = static_cast<long>(g.width);
  std::vector<double> tmp(g.height * g.width);
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    float* plane = img.data() + ch * g.height * g.width;
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * plane[y * w + reflect(x + t, w)];
        tmp[y * w + x] = acc;
      }
    }
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) acc += kernel[t + radius] * tmp[reflect(y + t, h) * w + x];
        plane[y * w + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
}

}  // namespace

LabeledDataset apply_shift(const LabeledDataset& ds, const NoiseSpec& spec) {
  const ShiftParams params = level_params(spec.kind, spec.level);
  const ImageGeometry g = geometry_of(ds.samples);
  for (float v : ds.samples.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ParameterError("shift input values must lie in [0, 1]");
  }
  LabeledDataset out = ds;
  if (spec.level == 0) return out;

  const std::size_t pixels = g.height * g.width;
  const auto kernel = params.kind == NoiseKind::blur ? gaussian_kernel(params.blur_sigma, params.blur_radius)
                                                     : std::vector<double>{};
  const std::size_t flips = round_count(params.flip_fraction, pixels);
  std::vector<std::size_t> positions(pixels);

  for (std::size_t i = 0; i < out.size(); ++i) {
    auto img = out.samples.row(i);
    Rng rng(derive_seed(spec.seed, i));
    switch (params.kind) {
      case NoiseKind::gaussian:
        for (float& v : img) {
          v = static_cast<float>(std::clamp(static_cast<double>(v) + params.sigma * rng.normal(), 0.0, 1.0));
        }
        break;
      case NoiseKind::blur:
        blur_image(img, g, kernel, params.blur_radius);
        break;
      case NoiseKind::salt_pepper:
        // Partial Fisher-Yates: the first `flips` slots become a uniform sample without replacement.
        std::iota(positions.begin(), positions.end(), std::size_t{0});
        for (std::size_t j = 0; j < flips; ++j) {
          const std::size_t pick = j + static_cast<std::size_t>(rng.uniform_index(pixels - j));
          std::swap(positions[j], positions[pick]);
          const float value = rng.coin() ? 1.0f : 0.0f;
          for (std::size_t ch = 0; ch < g.channels; ++ch) img[ch * pixels + positions[j]] = value;
        }
        break;
    }
  }
  return out;
}

}  // namespace resque

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "resque/datasets.hpp"

namespace resque {

enum class NoiseKind { gaussian, blur, salt_pepper };

std::string_view to_string(NoiseKind kind) noexcept;
/// Accepts "gaussian", "blur", "salt_pepper" (also "salt-pepper"); ParameterError otherwise.
NoiseKind parse_noise_kind(std::string_view name);

inline constexpr int kMaxShiftLevel = 10;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  int level = 0;  // 0 is the identity, 1..10 increasing intensity
  std::uint64_t seed = 0;
};

/// Ladder parameters for one (kind, level).
struct ShiftParams {
  NoiseKind kind = NoiseKind::gaussian;
  int level = 0;
  double sigma = 0.0;         // gaussian: pixel noise std
  double blur_sigma = 0.0;    // blur: kernel std in pixels
  int blur_radius = 0;        // blur: ceil(2 * blur_sigma)
  double flip_fraction = 0.0; // salt_pepper: fraction of pixel positions replaced
};

/// gaussian sigma = 0.03 * level; blur sigma = 0.15 * level; salt-pepper p = 0.015 * level.
ShiftParams level_params(NoiseKind kind, int level);

/// Normalized 1-D Gaussian kernel of length 2 * radius + 1.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Corrupts every sample of `ds`. Samples must be (n, channels, height, width)
/// or (n, height, width) with values in [0, 1]. Level 0 returns an exact copy.
/// Each sample draws from its own stream derived from (seed, sample index).
LabeledDataset apply_shift(const LabeledDataset& ds, const NoiseSpec& spec);

}  // namespace resque

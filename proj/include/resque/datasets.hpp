#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "resque/tensor.hpp"

namespace resque {

/// Samples (leading dimension n_s) with integer class labels in [0, num_classes).
struct LabeledDataset {
  Tensor samples;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> sample(std::size_t i) const { return samples.row(i); }
  std::vector<std::size_t> class_counts() const;

  /// Throws ParameterError if labels/samples disagree or a label is out of range.
  void validate() const;
  /// Throws MissingClassError for the first class with no samples.
  void require_all_classes() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

/// Class signal family: oriented gratings, concentric rings (radial frequency)
/// or a Gaussian blob at a class-specific position.
enum class Pattern { gratings, rings, blobs };

std::string_view to_string(Pattern pattern) noexcept;
Pattern parse_pattern(std::string_view name);

struct SyntheticSpec {
  Pattern pattern = Pattern::gratings;
  std::size_t num_classes = 5;
  std::size_t samples_per_class = 100;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::uint64_t seed = 1;
};

/// Class patterns are drawn from `seed`:
///  gratings  one (frequency in [3, 6) cycles per image, orientation) per class; random phase per sample
///  rings     one radial frequency per class; random phase and centre jitter
///  blobs     one position per class on a circle; random width and position jitter
/// Each sample also gets a per-channel gain and additive N(0, 0.05^2) pixel
/// noise, then is clipped to [0, 1]. Samples are ordered class-major.
LabeledDataset generate_synthetic(const SyntheticSpec& spec);

struct SplitSpec {
  double original_fraction = 0.70;
  double shifted_fraction = 0.50;
  double overlap_fraction = 0.20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitResult {
  LabeledDataset original;
  LabeledDataset shifted_base;
  std::vector<std::size_t> original_indices;  // into the source dataset, ascending
  std::vector<std::size_t> shifted_indices;
};

/// Rounds half away from zero, tolerant of binary representation error in
/// products such as 0.7 * 5.
std::size_t round_count(double fraction, std::size_t n);

/// Stratified original/shifted split with a shared overlap.
///
/// Totals are round(f * n_s) for each fraction, except that the overlap grows to
/// original + shifted - n_s when rounding would otherwise overbook. Per-class counts of the four
/// disjoint parts (original only, overlap, shifted only, unused) are each within
/// one of their proportional share and sum exactly to the totals.
SplitResult split_for_retraining(const LabeledDataset& ds, const SplitSpec& spec);

/// Dataset file: samples tensor with labels; num_classes is max(label) + 1 on read.
void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset read_dataset(const std::filesystem::path& path);

}  // namespace resque

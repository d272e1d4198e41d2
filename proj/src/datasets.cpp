#include "resque/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "resque/errors.hpp"
#include "resque/rng.hpp"
#include "resque/tensor_io.hpp"

namespace resque {

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (int label : labels) {
    if (label >= 0 && static_cast<std::size_t>(label) < num_classes) ++counts[label];
  }
  return counts;
}

void LabeledDataset::validate() const {
  if (samples.rank() == 0 || samples.dim(0) != labels.size()) {
    throw ParameterError("dataset has " + std::to_string(labels.size()) +
                         " labels but sample tensor leading dimension disagrees");
  }
  if (num_classes == 0) throw ParameterError("dataset num_classes must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ParameterError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                           " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

void LabeledDataset::require_all_classes() const {
  const auto counts = class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw MissingClassError(static_cast<int>(c));
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> shape = samples.shape();
  shape[0] = indices.size();
  const std::size_t stride = samples.row_size();
  std::vector<float> data;
  data.reserve(indices.size() * stride);
  std::vector<int> out_labels;
  out_labels.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto row = samples.row(idx);
    data.insert(data.end(), row.begin(), row.end());
    out_labels.push_back(labels[idx]);
  }
  return LabeledDataset{Tensor(std::move(shape), std::move(data)), std::move(out_labels), num_classes};
}

std::string_view to_string(Pattern pattern) noexcept {
  switch (pattern) {
    case Pattern::gratings: return "gratings";
    case Pattern::rings: return "rings";
    case Pattern::blobs: return "blobs";
  }
  return "?";
}

Pattern parse_pattern(std::string_view name) {
  if (name == "gratings") return Pattern::gratings;
  if (name == "rings") return Pattern::rings;
  if (name == "blobs") return Pattern::blobs;
  throw ParameterError("unknown pattern '" + std::string(name) + "' (expected gratings, rings or blobs)");
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ParameterError("num_classes must be >= 2");
  if (spec.samples_per_class < 8) throw ParameterError("samples_per_class must be >= 8");
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ParameterError("height, width and channels must be positive");
  }

  constexpr double kPi = std::numbers::pi;
  constexpr double kPixelNoise = 0.05;
  const auto k = static_cast<double>(spec.num_classes);
  const double cy = 0.5 * static_cast<double>(spec.height - 1);
  const double cx = 0.5 * static_cast<double>(spec.width - 1);
  const double extent = static_cast<double>(std::max(spec.height, spec.width));

  // orientation: gratings angle, blob angle on the circle; frequency: spatial or radial frequency
  struct ClassPattern {
    double orientation;
    double frequency;
  };
  std::vector<ClassPattern> patterns(spec.num_classes);
  Rng class_rng(derive_seed(spec.seed, 0));
  const double base_orientation = class_rng.uniform(0.0, kPi);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double spacing = (spec.pattern == Pattern::blobs ? 2.0 * kPi : kPi) / k;
    patterns[c].orientation = base_orientation + spacing * (static_cast<double>(c) + class_rng.uniform(-0.1, 0.1));
    patterns[c].frequency = class_rng.uniform(3.0, 6.0);
  }
  if (spec.pattern == Pattern::rings) {
    // evenly spaced radial frequencies in a seed-dependent order
    std::vector<std::size_t> order(spec.num_classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    class_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      patterns[c].frequency = 1.0 + 4.0 * (static_cast<double>(order[c]) + 0.5) / k;
    }
  }

  const std::size_t pixels = spec.height * spec.width;
  const std::size_t per_sample = pixels * spec.channels;
  const std::size_t n = spec.num_classes * spec.samples_per_class;
  std::vector<float> data(n * per_sample);
  std::vector<int> labels(n);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / spec.samples_per_class;
    labels[i] = static_cast<int>(c);
    Rng rng(derive_seed(spec.seed, 1 + i));
    const double theta = patterns[c].orientation + rng.uniform(-0.15, 0.15) * kPi / k;
    const double freq = patterns[c].frequency * rng.uniform(0.93, 1.07);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double amplitude = rng.uniform(0.25, 0.40);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    // rings: centre jitter; blobs: centre on a circle of radius extent/4
    double ox = cx + rng.uniform(-1.5, 1.5);
    double oy = cy + rng.uniform(-1.5, 1.5);
    const double blob_width = extent * rng.uniform(0.08, 0.12);
    if (spec.pattern == Pattern::blobs) {
      ox = cx + 0.25 * extent * ct + rng.uniform(-1.0, 1.0);
      oy = cy + 0.25 * extent * st + rng.uniform(-1.0, 1.0);
    }
    float* out = data.data() + i * per_sample;
    for (std::size_t ch = 0; ch < spec.channels; ++ch) {
      const double gain = amplitude * rng.uniform(0.8, 1.0);
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double px = static_cast<double>(x);
          const double py = static_cast<double>(y);
          double signal = 0.0;
          switch (spec.pattern) {
            case Pattern::gratings:
              signal = std::sin(2.0 * kPi * freq * ((px - cx) * ct + (py - cy) * st) / extent + phase);
              break;
            case Pattern::rings:
              signal = std::sin(2.0 * kPi * freq * std::hypot(px - ox, py - oy) / extent + phase);
              break;
            case Pattern::blobs: {
              const double d2 = (px - ox) * (px - ox) + (py - oy) * (py - oy);
              signal = 2.0 * std::exp(-0.5 * d2 / (blob_width * blob_width)) - 1.0;
              break;
            }
          }
          const double v = 0.5 + gain * signal + kPixelNoise * rng.normal();
          out[(ch * spec.height + y) * spec.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }

  return LabeledDataset{Tensor({n, spec.channels, spec.height, spec.width}, std::move(data)), std::move(labels),
                        spec.num_classes};
}

void SplitSpec::validate() const {
  auto in_unit = [](double f) { return f > 0.0 && f <= 1.0; };
  if (!in_unit(original_fraction) || !in_unit(shifted_fraction)) {
    throw ParameterError("original and shifted fractions must lie in (0, 1]");
  }
  if (overlap_fraction < 0.0 || overlap_fraction > 1.0) throw ParameterError("overlap fraction must lie in [0, 1]");
  if (overlap_fraction > std::min(original_fraction, shifted_fraction)) {
    throw ParameterError("overlap fraction exceeds the smaller split");
  }
  if (original_fraction + shifted_fraction - overlap_fraction > 1.0 + 1e-12) {
    throw ParameterError("original + shifted - overlap exceeds the dataset");
  }
}

std::size_t round_count(double fraction, std::size_t n) {
  const double q = fraction * static_cast<double>(n);
  return static_cast<std::size_t>(std::floor(q + 0.5 + 1e-9));
}

namespace {

// Integer matrix x[c][p] with row sums rows[c], column sums cols[p] and every
// entry within one of rows[c] * cols[p] / n. Floors of the proportional shares
// leave 0/1 residuals, which are placed greedily into the columns with the
// largest remaining demand (Ryser's construction).
std::vector<std::vector<std::size_t>> apportion(const std::vector<std::size_t>& rows,
                                                const std::vector<std::size_t>& cols) {
  const std::size_t n = std::accumulate(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> x(rows.size(), std::vector<std::size_t>(cols.size(), 0));
  std::vector<std::vector<double>> frac(rows.size(), std::vector<double>(cols.size(), 0.0));
  std::vector<std::size_t> row_rest(rows.size()), col_rest(cols);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    std::size_t used = 0;
    for (std::size_t p = 0; p < cols.size(); ++p) {
      // Exact integer floor of rows[c] * cols[p] / n.
      const auto num = static_cast<unsigned __int128>(rows[c]) * cols[p];
      x[c][p] = static_cast<std::size_t>(num / n);
      frac[c][p] = static_cast<double>(num % n) / static_cast<double>(n);
      used += x[c][p];
      col_rest[p] -= x[c][p];
    }
    row_rest[c] = rows[c] - used;
  }
  std::vector<std::size_t> order(cols.size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (col_rest[a] != col_rest[b]) return col_rest[a] > col_rest[b];
      return frac[c][a] > frac[c][b];
    });
    for (std::size_t j = 0; j < row_rest[c]; ++j) {
      const std::size_t p = order[j];
      if (col_rest[p] == 0) throw ParameterError("split apportionment failed");
      ++x[c][p];
      --col_rest[p];
    }
  }
  return x;
}

}  // namespace

SplitResult split_for_retraining(const LabeledDataset& ds, const SplitSpec& spec) {
  spec.validate();
  ds.validate();
  const std::size_t n = ds.size();
  const std::size_t total_original = round_count(spec.original_fraction, n);
  const std::size_t total_shifted = round_count(spec.shifted_fraction, n);
  // Independent rounding can overbook the dataset by one (n_s = 21: 15 + 11 - 4 = 22);
  // the overlap then grows to the excess.
  std::size_t total_overlap = round_count(spec.overlap_fraction, n);
  if (total_original + total_shifted > n) total_overlap = std::max(total_overlap, total_original + total_shifted - n);
  if (total_overlap > std::min(total_original, total_shifted)) {
    throw ParameterError("split fractions are inconsistent after rounding for n_s = " + std::to_string(n));
  }

  const std::vector<std::size_t> parts = {total_original - total_overlap, total_overlap,
                                          total_shifted - total_overlap,
                                          n - (total_original + total_shifted - total_overlap)};
  const auto counts = ds.class_counts();
  const auto alloc = apportion(counts, parts);

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);

  SplitResult result;
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const auto& a = alloc[c];
    if (a[0] + a[1] == 0 || a[1] + a[2] == 0) {
      throw ParameterError("class " + std::to_string(c) + " is too small to appear in both splits");
    }
    Rng rng(derive_seed(spec.seed, c));
    auto& idx = by_class[c];
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t original_end = a[0] + a[1];
    const std::size_t shifted_end = original_end + a[2];
    result.original_indices.insert(result.original_indices.end(), idx.begin(), idx.begin() + original_end);
    result.shifted_indices.insert(result.shifted_indices.end(), idx.begin() + a[0], idx.begin() + shifted_end);
  }
  std::sort(result.original_indices.begin(), result.original_indices.end());
  std::sort(result.shifted_indices.begin(), result.shifted_indices.end());
  result.original = ds.subset(result.original_indices);
  result.shifted_base = ds.subset(result.shifted_indices);
  return result;
}

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  ds.validate();
  write_tensor_file(path, ds.samples, std::span<const int>(ds.labels));
}

LabeledDataset read_dataset(const std::filesystem::path& path) {
  auto file = read_tensor_file(path);
  if (!file.labels) throw ParameterError(path.string() + " has no labels");
  LabeledDataset ds{std::move(file.tensor), std::move(*file.labels), 0};
  for (int label : ds.labels) ds.num_classes = std::max(ds.num_classes, static_cast<std::size_t>(label) + 1);
  ds.validate();
  return ds;
}

}  // namespace resque

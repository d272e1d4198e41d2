#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resque {

/// Dense row-major float32 array with shape metadata.
///
/// Invariants: product(shape) == data.size(), all values finite. Both are
/// checked on construction; mutable access through `data()` is unchecked.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  /// Number of values per entry along the leading dimension.
  std::size_t row_size() const noexcept;
  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i);

  /// Throws ParameterError if any value is NaN or infinite.
  void check_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

}  // namespace resque

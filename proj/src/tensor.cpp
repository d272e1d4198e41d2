#include "resque/tensor.hpp"

#include <cmath>
#include <string>

#include "resque/errors.hpp"

namespace resque {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ParameterError("tensor shape product " + std::to_string(shape_product(shape_)) +
                         " does not match data length " + std::to_string(data_.size()));
  }
  check_finite();
}

std::size_t Tensor::row_size() const noexcept {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return data_.size() / shape_[0];
}

std::span<const float> Tensor::row(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0]) throw ParameterError("tensor row index out of range");
  const std::size_t stride = row_size();
  return std::span<const float>(data_).subspan(i * stride, stride);
}

std::span<float> Tensor::row(std::size_t i) {
  if (shape_.empty() || i >= shape_[0]) throw ParameterError("tensor row index out of range");
  const std::size_t stride = row_size();
  return std::span<float>(data_).subspan(i * stride, stride);
}

void Tensor::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw ParameterError("tensor value at flat index " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace resque

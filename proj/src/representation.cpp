#include "resque/representation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resque/errors.hpp"

namespace resque {

ClassEmbeddingSet::ClassEmbeddingSet(std::size_t num_classes, std::size_t dim, std::vector<double> vectors)
    : k_(num_classes), dim_(dim), data_(std::move(vectors)) {
  if (data_.size() != k_ * dim_) throw ParameterError("class embedding storage does not match k x dim");
  for (std::size_t l = 0; l < k_; ++l) {
    double sq = 0.0;
    for (double v : vector(l)) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ParameterError("class embedding " + std::to_string(l) + " is not unit length");
    }
  }
}

std::span<const double> ClassEmbeddingSet::vector(std::size_t label) const {
  if (label >= k_) throw ParameterError("class index out of range");
  return std::span<const double>(data_).subspan(label * dim_, dim_);
}

Tensor ClassEmbeddingSet::to_tensor() const {
  std::vector<float> values(data_.begin(), data_.end());
  return Tensor({k_, dim_}, std::move(values));
}

ClassEmbeddingSet ClassEmbeddingSet::from_tensor(const Tensor& tensor) {
  if (tensor.rank() != 2) throw ParameterError("class embedding tensor must be k x dim");
  // Re-normalize: float storage perturbs unit length by ~1e-7.
  const std::size_t k = tensor.dim(0), dim = tensor.dim(1);
  std::vector<double> values(tensor.data().begin(), tensor.data().end());
  for (std::size_t l = 0; l < k; ++l) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += values[l * dim + j] * values[l * dim + j];
    if (sq == 0.0) throw DegenerateError("class embedding " + std::to_string(l) + " is zero");
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) values[l * dim + j] *= inv;
  }
  return ClassEmbeddingSet(k, dim, std::move(values));
}

ClassEmbeddingSet class_embeddings(const EmbeddingBatch& batch, std::size_t num_classes) {
  if (batch.representations.rank() != 2 || batch.representations.dim(0) != batch.labels.size()) {
    throw ParameterError("embedding rows must match label count");
  }
  const std::size_t dim = batch.dim();
  std::vector<double> sums(num_classes * dim, 0.0);
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int label = batch.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ParameterError("embedding label " + std::to_string(label) + " out of range");
    }
    const auto row = batch.representations.row(i);
    double* sum = sums.data() + static_cast<std::size_t>(label) * dim;
    for (std::size_t j = 0; j < dim; ++j) sum[j] += row[j];
    ++counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t l = 0; l < num_classes; ++l) {
    if (counts[l] == 0) throw MissingClassError(static_cast<int>(l));
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += sums[l * dim + j] * sums[l * dim + j];
    if (sq == 0.0) throw DegenerateError("summed embedding of class " + std::to_string(l) + " is the zero vector");
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < dim; ++j) sums[l * dim + j] /= norm;
  }
  return ClassEmbeddingSet(num_classes, dim, std::move(sums));
}

double resque_dist(const ClassEmbeddingSet& a, const ClassEmbeddingSet& b) {
  if (a.num_classes() != b.num_classes() || a.dim() != b.dim()) {
    throw ParameterError("class embedding sets differ in class count or dimension");
  }
  if (a.num_classes() == 0) throw ParameterError("class embedding sets are empty");
  double total = 0.0;
  for (std::size_t l = 0; l < a.num_classes(); ++l) {
    const auto u = a.vector(l);
    const auto v = b.vector(l);
    double dot = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) dot += u[j] * v[j];
    total += std::acos(std::clamp(dot, -1.0, 1.0));
  }
  return total / static_cast<double>(a.num_classes());
}

}  // namespace resque

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "resque/embedding.hpp"
#include "resque/tensor.hpp"

namespace resque {

/// One unit-length summed embedding per class, stored row-major (k x dim).
class ClassEmbeddingSet {
 public:
  ClassEmbeddingSet(std::size_t num_classes, std::size_t dim, std::vector<double> vectors);

  std::size_t num_classes() const noexcept { return k_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> vector(std::size_t label) const;

  /// k x dim float tensor; labels are the class indices 0..k-1.
  Tensor to_tensor() const;
  static ClassEmbeddingSet from_tensor(const Tensor& tensor);

 private:
  std::size_t k_;
  std::size_t dim_;
  std::vector<double> data_;
};

/// Per-class sum of embedding rows (accumulated in double), normalized to unit L2 length.
/// Throws MissingClassError for an empty class and DegenerateError for a zero sum.
ClassEmbeddingSet class_embeddings(const EmbeddingBatch& batch, std::size_t num_classes);

/// Mean over classes of arccos(<a_l, b_l>), with the dot product clamped to [-1, 1].
double resque_dist(const ClassEmbeddingSet& a, const ClassEmbeddingSet& b);

}  // namespace resque

#pragma once

#include <cstddef>
#include <vector>

#include "resque/tensor.hpp"

namespace resque {

/// Flattened representation-layer activations, one row per sample, with the sample labels.
struct EmbeddingBatch {
  Tensor representations;  // n x rep_dim
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return representations.rank() == 2 ? representations.dim(1) : 0; }
  void validate() const;
};

}  // namespace resque

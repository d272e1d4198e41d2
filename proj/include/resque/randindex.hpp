#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resque/clustering.hpp"
#include "resque/datasets.hpp"
#include "resque/model.hpp"
#include "resque/trainer.hpp"

namespace resque {

/// n_c x n_c counts of samples by (cluster label i, true label j) with marginals.
struct ContingencyTable {
  std::size_t n_c = 0;
  std::vector<std::uint64_t> counts;  // row-major, counts[i * n_c + j]
  std::vector<std::uint64_t> rc;      // row sums (cluster totals)
  std::vector<std::uint64_t> tl;      // column sums (true-label totals)
  std::uint64_t n = 0;

  std::uint64_t at(std::size_t i, std::size_t j) const { return counts.at(i * n_c + j); }
};

ContingencyTable contingency(std::span<const int> cluster_labels, std::span<const int> true_labels, std::size_t n_c);

/// Hubert-Arabie adjusted Rand index of the two partitions summarized by `table`.
/// Pair sums are exact 128-bit integers; the final ratio is rounded once.
/// Returns 1 when the denominator vanishes (both partitions trivial in the same way).
double adjusted_rand_index(const ContingencyTable& table);

/// 1 - ARI, unclipped (exceeds 1 when ARI is negative). Requires n >= 2.
double resque_task_index(const ContingencyTable& table);

struct TaskIndexResult {
  double index = 0.0;
  double ari = 0.0;
  InitScheme init_scheme = InitScheme::labels;
  std::uint64_t seed = 0;
  int lloyd_iterations = 0;
  std::vector<int> cluster_labels;
};

/// Retrains `original` on `new_task` for one epoch (fresh head), embeds the new
/// task, clusters the embeddings into new_task.num_classes clusters and scores
/// them against the true labels. Errors are rethrown as StageError tagged with
/// the failing stage (validate, retrain, embed, init, lloyd, score).
TaskIndexResult resque_task_pipeline(const ModelParams& original, const LabeledDataset& new_task,
                                     const TrainConfig& config, InitScheme scheme = InitScheme::labels,
                                     const LloydOptions& options = {});

}  // namespace resque

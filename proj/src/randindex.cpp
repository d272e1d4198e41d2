#include "resque/randindex.hpp"

#include <string>

#include "resque/errors.hpp"
#include "resque/rng.hpp"

namespace resque {

ContingencyTable contingency(std::span<const int> cluster_labels, std::span<const int> true_labels, std::size_t n_c) {
  if (cluster_labels.size() != true_labels.size()) throw ParameterError("label arrays differ in length");
  ContingencyTable t;
  t.n_c = n_c;
  t.counts.assign(n_c * n_c, 0);
  t.rc.assign(n_c, 0);
  t.tl.assign(n_c, 0);
  for (std::size_t s = 0; s < cluster_labels.size(); ++s) {
    const int i = cluster_labels[s], j = true_labels[s];
    if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n_c || static_cast<std::size_t>(j) >= n_c) {
      throw ParameterError("label at sample " + std::to_string(s) + " outside [0, " + std::to_string(n_c) + ")");
    }
    ++t.counts[static_cast<std::size_t>(i) * n_c + static_cast<std::size_t>(j)];
    ++t.rc[static_cast<std::size_t>(i)];
    ++t.tl[static_cast<std::size_t>(j)];
  }
  t.n = cluster_labels.size();
  return t;
}

namespace {
using i128 = __int128;
i128 choose2(std::uint64_t m) { return static_cast<i128>(m) * (static_cast<i128>(m) - 1) / 2; }
}  // namespace

double adjusted_rand_index(const ContingencyTable& table) {
  if (table.n < 2) throw ParameterError("adjusted Rand index needs n >= 2");
  i128 pairs_joint = 0, pairs_rows = 0, pairs_cols = 0;
  for (auto v : table.counts) pairs_joint += choose2(v);
  for (auto v : table.rc) pairs_rows += choose2(v);
  for (auto v : table.tl) pairs_cols += choose2(v);
  const i128 pairs_all = choose2(table.n);
  // ARI = (J - R*C/P) / ((R + C)/2 - R*C/P), scaled by 2P to stay integral.
  const i128 numerator = 2 * (pairs_joint * pairs_all - pairs_rows * pairs_cols);
  const i128 denominator = (pairs_rows + pairs_cols) * pairs_all - 2 * pairs_rows * pairs_cols;
  if (denominator == 0) return 1.0;
  return static_cast<double>(static_cast<long double>(numerator) / static_cast<long double>(denominator));
}

double resque_task_index(const ContingencyTable& table) { return 1.0 - adjusted_rand_index(table); }

TaskIndexResult resque_task_pipeline(const ModelParams& original, const LabeledDataset& new_task,
                                     const TrainConfig& config, InitScheme scheme, const LloydOptions& options) {
  auto stage = [](const char* name, auto&& fn) -> decltype(fn()) {
    try {
      return fn();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };

  stage("validate", [&] {
    new_task.validate();
    if (new_task.num_classes < 2) throw ParameterError("new task needs at least 2 classes");
    new_task.require_all_classes();
    const auto& shape = new_task.samples.shape();
    const ModelSpec& spec = original.spec;
    if (shape.size() != 4 || shape[1] != spec.channels || shape[2] != spec.height || shape[3] != spec.width) {
      throw ParameterError("new task samples do not match the model input shape");
    }
    return 0;
  });
  const std::size_t k = new_task.num_classes;
  const EpochOutcome retrained = stage("retrain", [&] { return retrain_one_epoch(original, new_task, config); });
  const Matrix points =
      stage("embed", [&] { return Matrix::from_embeddings(extract_embeddings(retrained.params, new_task)); });
  const std::uint64_t init_seed = derive_seed(config.seed, 13);
  CentroidMatrix init = stage("init", [&] {
    return initial_centroids(scheme, points, new_task.labels, k, init_seed, options);
  });
  const ClusterAssignment clusters = stage("lloyd", [&] { return lloyd(points, std::move(init), options); });
  return stage("score", [&] {
    const ContingencyTable table = contingency(clusters.labels, new_task.labels, k);
    TaskIndexResult r;
    r.ari = adjusted_rand_index(table);
    r.index = 1.0 - r.ari;
    r.init_scheme = scheme;
    r.seed = config.seed;
    r.lloyd_iterations = clusters.iterations;
    r.cluster_labels = clusters.labels;
    return r;
  });
}

}  // namespace resque

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "resque/datasets.hpp"
#include "resque/embedding.hpp"
#include "resque/errors.hpp"
#include "resque/model.hpp"

namespace resque {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  std::vector<int> lr_decay_epochs;  // lr *= lr_decay_factor after each listed epoch
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-4;        // coupled L2, applied to weights and biases
  double momentum = 0.9;             // sgd only
  std::size_t batch_size = 32;
  double cutoff_accuracy = 0.90;
  int max_epochs = 60;
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
  bool record_wall_clock = true;     // false writes 0 so measure records are reproducible bytes

  void validate() const;
};

/// Learning rate in effect during 1-based `epoch`.
double learning_rate_at(const TrainConfig& config, int epoch);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::vector<LayerParams> first;   // momentum / Adam m
  std::vector<LayerParams> second;  // Adam v
  long steps = 0;
};

OptimizerState make_optimizer_state(const ModelParams& params, OptimizerKind kind);

/// One optimizer update on the samples `batch` of `ds`. Returns the global L2
/// norm of the regularized-loss gradient, taken before the update. Throws
/// NumericalError (parameters untouched) on a non-finite loss or gradient.
double grad_step(ModelParams& params, OptimizerState& state, const LabeledDataset& ds,
                 std::span<const std::size_t> batch, const TrainConfig& config, double learning_rate);

/// N_{l,t} = ||W_t - W_{t-1}||_2 / sqrt(||W_t||_2) per layer, biases folded into
/// the layer's parameter vector. Throws DegenerateError for an all-zero layer.
std::vector<double> param_change_interval(const ModelParams& prev, const ModelParams& cur);

enum class HaltReason { none, cutoff, proximity_25, proximity_50, max_epochs, fixed_epochs, numerical };

std::string_view to_string(HaltReason reason) noexcept;
HaltReason parse_halt_reason(std::string_view name);

/// Stopping rule evaluated after each epoch:
///  accuracy >= cutoff                          -> cutoff
///  epoch >= 25 and accuracy >= cutoff - 0.005  -> proximity_25
///  epoch >= 50 and accuracy >= cutoff - 0.01   -> proximity_50
///  epoch >= max_epochs                         -> max_epochs
/// checked in that order.
HaltReason halt_decision(int epoch, double accuracy, double cutoff, int max_epochs);

struct RetrainMeasures {
  int epochs = 0;
  double total_grad_norm = 0.0;  // sum of per-step gradient norms
  double param_change = 0.0;     // sum over epochs and layers of N_{l,t}, divided by layer count
  double wall_clock_s = 0.0;
  double flops_estimate = 0.0;   // 2 * (forward + backward MACs) per trained sample
  bool reached_cutoff = false;   // true for cutoff and proximity halts
  bool valid = true;             // false when a numerical failure cut the run short
  HaltReason halt = HaltReason::none;
  std::size_t steps = 0;
  std::vector<double> accuracy_trace;  // eval accuracy after each epoch

  double peak_accuracy() const noexcept;
};

/// Thrown when training hits NaN/Inf; carries the measures gathered so far (valid = false).
class TrainingFailure : public NumericalError {
 public:
  TrainingFailure(const std::string& what, RetrainMeasures partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const RetrainMeasures& partial() const noexcept { return partial_; }

 private:
  RetrainMeasures partial_;
};

struct EvalSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Stratified hold-out: round(fraction * n_c) samples of each class go to eval.
EvalSplit make_eval_split(const LabeledDataset& ds, double fraction, std::uint64_t seed);

/// Fraction of `indices` (all samples when empty) whose argmax prediction matches the label.
double accuracy(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices = {});

struct TrainOutcome {
  ModelParams params;
  RetrainMeasures measures;
};

/// Trains on the non-eval part of `ds` until halt_decision() fires.
TrainOutcome train_to_cutoff(ModelParams params, const LabeledDataset& ds, const TrainConfig& config);

/// Trains for exactly `epochs` epochs, recording the accuracy trace (peak-accuracy mode).
TrainOutcome train_fixed_epochs(ModelParams params, const LabeledDataset& ds, const TrainConfig& config, int epochs);

struct EpochOutcome {
  ModelParams params;
  std::size_t steps = 0;
  double total_grad_norm = 0.0;
};

/// Re-initializes the classifier head to `new_task.num_classes`, then makes one
/// pass over all of `new_task` updating every layer.
EpochOutcome retrain_one_epoch(ModelParams params, const LabeledDataset& new_task, const TrainConfig& config);

/// Forward-only representation extraction.
EmbeddingBatch extract_embeddings(const ModelParams& params, const LabeledDataset& ds);

}  // namespace resque

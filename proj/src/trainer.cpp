#include "resque/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "resque/rng.hpp"

namespace resque {

void EmbeddingBatch::validate() const {
  if (representations.rank() != 2 || representations.dim(0) != labels.size()) {
    throw ParameterError("embedding rows must match label count");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ParameterError("embedding label " + std::to_string(label) + " out of range");
    }
  }
}

std::string_view to_string(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ParameterError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning rate must be >= 0");
  if (!(cutoff_accuracy >= 0.0 && cutoff_accuracy <= 1.0)) throw ParameterError("cutoff accuracy must lie in [0, 1]");
  if (max_epochs < 1) throw ParameterError("max_epochs must be >= 1");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) throw ParameterError("eval fraction must lie in [0, 1)");
  if (weight_decay < 0.0) throw ParameterError("weight decay must be >= 0");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  double lr = config.learning_rate;
  for (int boundary : config.lr_decay_epochs) {
    if (epoch > boundary) lr *= config.lr_decay_factor;
  }
  return lr;
}

namespace {

std::vector<LayerParams> zeros_like(const ModelParams& params) {
  std::vector<LayerParams> out(params.layers.size());
  for (std::size_t l = 0; l < out.size(); ++l) {
    out[l].weight.assign(params.layers[l].weight.size(), 0.0);
    out[l].bias.assign(params.layers[l].bias.size(), 0.0);
  }
  return out;
}

template <typename Fn>
void for_each_value(ModelParams& params, const std::vector<LayerParams>& grad, OptimizerState& state, Fn&& fn) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto apply = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                     std::vector<double>* v) {
      for (std::size_t i = 0; i < p.size(); ++i) fn(p[i], g[i], m[i], v ? &(*v)[i] : nullptr);
    };
    const bool adam = state.kind == OptimizerKind::adam;
    apply(params.layers[l].weight, grad[l].weight, state.first[l].weight, adam ? &state.second[l].weight : nullptr);
    apply(params.layers[l].bias, grad[l].bias, state.first[l].bias, adam ? &state.second[l].bias : nullptr);
  }
}

}  // namespace

OptimizerState make_optimizer_state(const ModelParams& params, OptimizerKind kind) {
  OptimizerState state;
  state.kind = kind;
  state.first = zeros_like(params);
  if (kind == OptimizerKind::adam) state.second = zeros_like(params);
  return state;
}

double grad_step(ModelParams& params, OptimizerState& state, const LabeledDataset& ds,
                 std::span<const std::size_t> batch, const TrainConfig& config, double learning_rate) {
  const LossGradient lg = loss_and_gradient(params, ds, batch, config.weight_decay);
  if (!std::isfinite(lg.loss)) throw NumericalError("non-finite training loss");
  double sq = 0.0;
  for (const auto& g : lg.gradient) {
    for (double v : g.weight) sq += v * v;
    for (double v : g.bias) sq += v * v;
  }
  if (!std::isfinite(sq)) throw NumericalError("non-finite gradient");
  if (state.first.size() != params.layers.size()) throw ParameterError("optimizer state does not match parameters");

  ++state.steps;
  if (state.kind == OptimizerKind::sgd) {
    const double mu = config.momentum;
    for_each_value(params, lg.gradient, state, [&](double& p, double g, double& m, double*) {
      m = mu * m + g;
      p -= learning_rate * m;
    });
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    for_each_value(params, lg.gradient, state, [&](double& p, double g, double& m, double* v) {
      m = b1 * m + (1.0 - b1) * g;
      *v = b2 * *v + (1.0 - b2) * g * g;
      p -= learning_rate * (m / c1) / (std::sqrt(*v / c2) + eps);
    });
  }
  return std::sqrt(sq);
}

std::vector<double> param_change_interval(const ModelParams& prev, const ModelParams& cur) {
  if (prev.layers.size() != cur.layers.size()) throw ParameterError("parameter snapshots have different layer counts");
  std::vector<double> out(cur.layers.size());
  for (std::size_t l = 0; l < cur.layers.size(); ++l) {
    const auto& a = prev.layers[l];
    const auto& b = cur.layers[l];
    if (a.weight.size() != b.weight.size() || a.bias.size() != b.bias.size()) {
      throw ParameterError("parameter snapshots differ in shape at layer " + std::to_string(l));
    }
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < b.weight.size(); ++i) {
      const double d = b.weight[i] - a.weight[i];
      diff += d * d;
      norm += b.weight[i] * b.weight[i];
    }
    for (std::size_t i = 0; i < b.bias.size(); ++i) {
      const double d = b.bias[i] - a.bias[i];
      diff += d * d;
      norm += b.bias[i] * b.bias[i];
    }
    if (norm == 0.0) throw DegenerateError("layer " + std::to_string(l) + " has all-zero parameters");
    out[l] = std::sqrt(diff) / std::sqrt(std::sqrt(norm));
  }
  return out;
}

std::string_view to_string(HaltReason reason) noexcept {
  switch (reason) {
    case HaltReason::none: return "none";
    case HaltReason::cutoff: return "cutoff";
    case HaltReason::proximity_25: return "proximity_25";
    case HaltReason::proximity_50: return "proximity_50";
    case HaltReason::max_epochs: return "max_epochs";
    case HaltReason::fixed_epochs: return "fixed_epochs";
    case HaltReason::numerical: return "numerical";
  }
  return "none";
}

HaltReason parse_halt_reason(std::string_view name) {
  for (auto r : {HaltReason::none, HaltReason::cutoff, HaltReason::proximity_25, HaltReason::proximity_50,
                 HaltReason::max_epochs, HaltReason::fixed_epochs, HaltReason::numerical}) {
    if (to_string(r) == name) return r;
  }
  throw ParameterError("unknown halt reason '" + std::string(name) + "'");
}

HaltReason halt_decision(int epoch, double accuracy, double cutoff, int max_epochs) {
  // Accuracies are ratios of counts; the slack absorbs rounding in cutoff - delta.
  constexpr double slack = 1e-12;
  if (accuracy + slack >= cutoff) return HaltReason::cutoff;
  if (epoch >= 25 && accuracy + slack >= cutoff - 0.005) return HaltReason::proximity_25;
  if (epoch >= 50 && accuracy + slack >= cutoff - 0.01) return HaltReason::proximity_50;
  if (epoch >= max_epochs) return HaltReason::max_epochs;
  return HaltReason::none;
}

double RetrainMeasures::peak_accuracy() const noexcept {
  return accuracy_trace.empty() ? 0.0 : *std::max_element(accuracy_trace.begin(), accuracy_trace.end());
}

EvalSplit make_eval_split(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  EvalSplit split;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    Rng rng(derive_seed(seed, c));
    rng.shuffle(std::span<std::size_t>(idx));
    std::size_t n_eval = round_count(fraction, idx.size());
    if (fraction > 0.0 && idx.size() > 1) n_eval = std::clamp<std::size_t>(n_eval, 1, idx.size() - 1);
    split.eval.insert(split.eval.end(), idx.begin(), idx.begin() + static_cast<long>(n_eval));
    split.train.insert(split.train.end(), idx.begin() + static_cast<long>(n_eval), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

double accuracy(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices) {
  const auto predictions = predict(params, ds, indices);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == ds.labels[indices.empty() ? i : indices[i]]) ++correct;
  }
  return predictions.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(predictions.size());
}

namespace {

struct EpochStats {
  std::size_t steps = 0;
  double grad_norm = 0.0;
  std::size_t samples = 0;
};

EpochStats run_epoch(ModelParams& params, OptimizerState& state, const LabeledDataset& ds,
                     std::vector<std::size_t> order, const TrainConfig& config, int epoch) {
  Rng rng(derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(std::span<std::size_t>(order));
  const double lr = learning_rate_at(config, epoch);
  EpochStats stats;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    const std::span<const std::size_t> batch(order.data() + start, end - start);
    stats.grad_norm += grad_step(params, state, ds, batch, config, lr);
    ++stats.steps;
    stats.samples += batch.size();
  }
  return stats;
}

// fixed_epochs == 0 selects cutoff mode.
TrainOutcome run_training(ModelParams params, const LabeledDataset& ds, const TrainConfig& config, int fixed_epochs) {
  config.validate();
  ds.validate();
  params.validate();
  if (params.spec.num_classes < ds.num_classes) throw ParameterError("model head narrower than dataset class count");
  const EvalSplit split = make_eval_split(ds, config.eval_fraction, derive_seed(config.seed, 7));
  if (split.train.empty()) throw ParameterError("no training samples after eval split");
  const auto& eval_idx = split.eval.empty() ? split.train : split.eval;

  const auto started = std::chrono::steady_clock::now();
  const double flops_per_sample = 2.0 * 3.0 * static_cast<double>(forward_macs(params.spec));
  const double layer_count = static_cast<double>(params.layers.size());
  OptimizerState state = make_optimizer_state(params, config.optimizer);
  RetrainMeasures m;
  auto stamp = [&] {
    if (config.record_wall_clock) {
      m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
  };

  const int limit = fixed_epochs > 0 ? fixed_epochs : config.max_epochs;
  for (int epoch = 1; epoch <= limit; ++epoch) {
    ModelParams before = params;
    try {
      const EpochStats stats = run_epoch(params, state, ds, split.train, config, epoch);
      m.steps += stats.steps;
      m.total_grad_norm += stats.grad_norm;
      m.flops_estimate += flops_per_sample * static_cast<double>(stats.samples);
      const auto change = param_change_interval(before, params);
      m.param_change += std::accumulate(change.begin(), change.end(), 0.0) / layer_count;
    } catch (const NumericalError& e) {
      m.valid = false;
      m.halt = HaltReason::numerical;
      m.epochs = epoch;
      stamp();
      throw TrainingFailure(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), m);
    }
    m.epochs = epoch;
    const double acc = accuracy(params, ds, eval_idx);
    m.accuracy_trace.push_back(acc);
    if (fixed_epochs > 0) {
      if (epoch == fixed_epochs) m.halt = HaltReason::fixed_epochs;
      m.reached_cutoff = m.reached_cutoff || acc + 1e-12 >= config.cutoff_accuracy;
      continue;
    }
    const HaltReason reason = halt_decision(epoch, acc, config.cutoff_accuracy, config.max_epochs);
    if (reason != HaltReason::none) {
      m.halt = reason;
      m.reached_cutoff = reason != HaltReason::max_epochs;
      break;
    }
  }
  stamp();
  return {std::move(params), std::move(m)};
}

}  // namespace

TrainOutcome train_to_cutoff(ModelParams params, const LabeledDataset& ds, const TrainConfig& config) {
  return run_training(std::move(params), ds, config, 0);
}

TrainOutcome train_fixed_epochs(ModelParams params, const LabeledDataset& ds, const TrainConfig& config, int epochs) {
  if (epochs < 1) throw ParameterError("fixed epoch count must be >= 1");
  return run_training(std::move(params), ds, config, epochs);
}

EpochOutcome retrain_one_epoch(ModelParams params, const LabeledDataset& new_task, const TrainConfig& config) {
  config.validate();
  new_task.validate();
  reset_head(params, new_task.num_classes, derive_seed(config.seed, 11));
  OptimizerState state = make_optimizer_state(params, config.optimizer);
  std::vector<std::size_t> order(new_task.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const EpochStats stats = run_epoch(params, state, new_task, std::move(order), config, 1);
  return {std::move(params), stats.steps, stats.grad_norm};
}

EmbeddingBatch extract_embeddings(const ModelParams& params, const LabeledDataset& ds) {
  auto result = forward(params, ds.samples);
  return EmbeddingBatch{std::move(result.representations), ds.labels, ds.num_classes};
}

}  // namespace resque

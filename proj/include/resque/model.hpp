#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "resque/datasets.hpp"
#include "resque/tensor.hpp"

namespace resque {

enum class Arch { mlp, convnet };

std::string_view to_string(Arch arch) noexcept;
Arch parse_arch(std::string_view name);

/// Network shape. For `mlp`, `hidden` lists dense widths; for `convnet`, it
/// lists channel counts of 3x3 stride-2 pad-1 convolutions. Every hidden layer
/// is followed by ReLU; the last hidden layer is the representation layer and
/// feeds a dense classifier head of width `num_classes`.
struct ModelSpec {
  Arch arch = Arch::convnet;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::vector<std::size_t> hidden = {8, 16};
  std::size_t num_classes = 5;

  std::size_t input_size() const noexcept { return channels * height * width; }
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// MLP(input -> 64 -> k).
ModelSpec reference_mlp(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes);
/// Convnet(conv 8 -> conv 16 -> dense k), both convolutions 3x3 stride 2.
ModelSpec reference_convnet(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes);

enum class LayerKind { dense, conv };

/// Geometry of one layer. Dense layers use in_c/out_c as feature counts with unit spatial size.
struct LayerShape {
  LayerKind kind = LayerKind::dense;
  std::size_t in_c = 0, in_h = 1, in_w = 1;
  std::size_t out_c = 0, out_h = 1, out_w = 1;
  bool relu = true;

  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kStride = 2;
  static constexpr std::size_t kPad = 1;

  std::size_t in_size() const noexcept { return in_c * in_h * in_w; }
  std::size_t out_size() const noexcept { return out_c * out_h * out_w; }
  std::size_t weight_count() const noexcept;
  std::size_t macs() const noexcept;
};

std::vector<LayerShape> layer_plan(const ModelSpec& spec);

/// Width of the flattened representation (output of the last hidden layer).
std::size_t representation_size(const ModelSpec& spec);

/// Multiply-accumulates of one forward pass for a single sample.
std::size_t forward_macs(const ModelSpec& spec);

struct LayerParams {
  std::vector<double> weight;  // dense: out x in; conv: out_c x in_c x 3 x 3
  std::vector<double> bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Trainable state of a network. Values are kept in double precision so that
/// finite-difference checks and long accumulations stay accurate.
struct ModelParams {
  ModelSpec spec;
  std::vector<LayerParams> layers;

  std::size_t parameter_count() const noexcept;
  /// Throws ParameterError on shape mismatch with `spec` or non-finite values.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// He-normal weights (std sqrt(2 / fan_in)); the head uses std sqrt(1 / fan_in). Biases zero.
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

/// Replaces the classifier head with a freshly initialized one of width `num_classes`.
void reset_head(ModelParams& params, std::size_t num_classes, std::uint64_t seed);

struct ForwardResult {
  Tensor logits;           // n x num_classes
  Tensor representations;  // n x representation_size
};

/// Batched forward pass. `batch` has leading dimension n and n * input_size values.
ForwardResult forward(const ModelParams& params, const Tensor& batch);

/// Index of the largest logit per sample (ties go to the lowest class), for
/// `indices` in order, or every sample when `indices` is empty.
std::vector<int> predict(const ModelParams& params, const LabeledDataset& ds,
                         std::span<const std::size_t> indices = {});

struct LossGradient {
  double loss = 0.0;                 // mean cross-entropy + 0.5 * weight_decay * ||theta||^2
  std::vector<LayerParams> gradient;  // same layout as ModelParams::layers
};

/// Mean softmax cross-entropy over `indices` plus L2 penalty, and its gradient.
LossGradient loss_and_gradient(const ModelParams& params, const LabeledDataset& ds,
                               std::span<const std::size_t> indices, double weight_decay);

double loss_value(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices,
                  double weight_decay);

/// Checkpoint as a tensor file: flattened f32 parameters, with the model spec
/// stored in the label array. Values round to float32.
void write_params(const std::filesystem::path& path, const ModelParams& params);
ModelParams read_params(const std::filesystem::path& path);

}  // namespace resque

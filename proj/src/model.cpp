#include "resque/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "resque/errors.hpp"
#include "resque/rng.hpp"
#include "resque/tensor_io.hpp"

namespace resque {

std::string_view to_string(Arch arch) noexcept { return arch == Arch::mlp ? "mlp" : "convnet"; }

Arch parse_arch(std::string_view name) {
  if (name == "mlp") return Arch::mlp;
  if (name == "convnet") return Arch::convnet;
  throw ParameterError("unknown architecture '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ParameterError("model input dimensions must be positive");
  if (hidden.empty()) throw ParameterError("model needs at least one hidden layer");
  for (std::size_t h : hidden) {
    if (h == 0) throw ParameterError("hidden layer widths must be positive");
  }
  if (num_classes < 1) throw ParameterError("num_classes must be positive");
}

ModelSpec reference_mlp(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes) {
  return ModelSpec{Arch::mlp, channels, height, width, {64}, num_classes};
}

ModelSpec reference_convnet(std::size_t channels, std::size_t height, std::size_t width, std::size_t num_classes) {
  return ModelSpec{Arch::convnet, channels, height, width, {8, 16}, num_classes};
}

std::size_t LayerShape::weight_count() const noexcept {
  return kind == LayerKind::conv ? out_c * in_c * kKernel * kKernel : out_c * in_c;
}

std::size_t LayerShape::macs() const noexcept {
  return kind == LayerKind::conv ? out_size() * in_c * kKernel * kKernel : out_c * in_c;
}

std::vector<LayerShape> layer_plan(const ModelSpec& spec) {
  spec.validate();
  std::vector<LayerShape> plan;
  if (spec.arch == Arch::mlp) {
    std::size_t in = spec.input_size();
    for (std::size_t h : spec.hidden) {
      plan.push_back({LayerKind::dense, in, 1, 1, h, 1, 1, true});
      in = h;
    }
    plan.push_back({LayerKind::dense, in, 1, 1, spec.num_classes, 1, 1, false});
    return plan;
  }
  std::size_t c = spec.channels, h = spec.height, w = spec.width;
  for (std::size_t out_c : spec.hidden) {
    const std::size_t oh = (h + 2 * LayerShape::kPad - LayerShape::kKernel) / LayerShape::kStride + 1;
    const std::size_t ow = (w + 2 * LayerShape::kPad - LayerShape::kKernel) / LayerShape::kStride + 1;
    plan.push_back({LayerKind::conv, c, h, w, out_c, oh, ow, true});
    c = out_c;
    h = oh;
    w = ow;
  }
  plan.push_back({LayerKind::dense, c * h * w, 1, 1, spec.num_classes, 1, 1, false});
  return plan;
}

std::size_t representation_size(const ModelSpec& spec) {
  const auto plan = layer_plan(spec);
  return plan[plan.size() - 2].out_size();
}

std::size_t forward_macs(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& layer : layer_plan(spec)) total += layer.macs();
  return total;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ModelParams::validate() const {
  const auto plan = layer_plan(spec);
  if (plan.size() != layers.size()) throw ParameterError("parameter layer count does not match model spec");
  for (std::size_t l = 0; l < plan.size(); ++l) {
    if (layers[l].weight.size() != plan[l].weight_count() || layers[l].bias.size() != plan[l].out_c) {
      throw ParameterError("parameter shapes of layer " + std::to_string(l) + " do not match model spec");
    }
    for (double v : layers[l].weight) {
      if (!std::isfinite(v)) throw ParameterError("non-finite weight in layer " + std::to_string(l));
    }
    for (double v : layers[l].bias) {
      if (!std::isfinite(v)) throw ParameterError("non-finite bias in layer " + std::to_string(l));
    }
  }
}

namespace {

LayerParams init_layer(const LayerShape& shape, Rng& rng, bool head) {
  const std::size_t fan_in = shape.kind == LayerKind::conv ? shape.in_c * LayerShape::kKernel * LayerShape::kKernel
                                                           : shape.in_c;
  const double std_dev = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(fan_in));
  LayerParams p;
  p.weight.resize(shape.weight_count());
  for (double& w : p.weight) w = std_dev * rng.normal();
  p.bias.assign(shape.out_c, 0.0);
  return p;
}

}  // namespace

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  const auto plan = layer_plan(spec);
  ModelParams params{spec, {}};
  Rng rng(seed);
  for (std::size_t l = 0; l < plan.size(); ++l) params.layers.push_back(init_layer(plan[l], rng, l + 1 == plan.size()));
  return params;
}

void reset_head(ModelParams& params, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ParameterError("head width must be positive");
  params.spec.num_classes = num_classes;
  const auto plan = layer_plan(params.spec);
  Rng rng(seed);
  params.layers.back() = init_layer(plan.back(), rng, true);
}

namespace {

/// Per-sample activations; act[0] is the input, act[l + 1] the output of layer l.
struct Workspace {
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> delta;

  explicit Workspace(const std::vector<LayerShape>& plan) {
    act.resize(plan.size() + 1);
    delta.resize(plan.size() + 1);
    act[0].resize(plan.front().in_size());
    delta[0].resize(plan.front().in_size());
    for (std::size_t l = 0; l < plan.size(); ++l) {
      act[l + 1].resize(plan[l].out_size());
      delta[l + 1].resize(plan[l].out_size());
    }
  }
};

void layer_forward(const LayerShape& s, const LayerParams& p, const std::vector<double>& in, std::vector<double>& out) {
  if (s.kind == LayerKind::dense) {
    for (std::size_t o = 0; o < s.out_c; ++o) {
      const double* w = p.weight.data() + o * s.in_c;
      double acc = p.bias[o];
      for (std::size_t i = 0; i < s.in_c; ++i) acc += w[i] * in[i];
      out[o] = acc;
    }
  } else {
    constexpr std::size_t K = LayerShape::kKernel;
    for (std::size_t co = 0; co < s.out_c; ++co) {
      for (std::size_t oy = 0; oy < s.out_h; ++oy) {
        for (std::size_t ox = 0; ox < s.out_w; ++ox) {
          double acc = p.bias[co];
          for (std::size_t ci = 0; ci < s.in_c; ++ci) {
            const double* w = p.weight.data() + (co * s.in_c + ci) * K * K;
            const double* plane = in.data() + ci * s.in_h * s.in_w;
            for (std::size_t ky = 0; ky < K; ++ky) {
              const long iy = static_cast<long>(oy * LayerShape::kStride + ky) - static_cast<long>(LayerShape::kPad);
              if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long ix = static_cast<long>(ox * LayerShape::kStride + kx) - static_cast<long>(LayerShape::kPad);
                if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
                acc += w[ky * K + kx] * plane[iy * static_cast<long>(s.in_w) + ix];
              }
            }
          }
          out[(co * s.out_h + oy) * s.out_w + ox] = acc;
        }
      }
    }
  }
  if (s.relu) {
    for (double& v : out) v = v > 0.0 ? v : 0.0;
  }
}

// Accumulates parameter gradients for one layer given dL/d(pre-activation) in
// `d_out`, and writes dL/d(input) into `d_in` when requested.
void layer_backward(const LayerShape& s, const LayerParams& p, const std::vector<double>& in,
                    const std::vector<double>& d_out, LayerParams& grad, std::vector<double>* d_in) {
  if (d_in) std::fill(d_in->begin(), d_in->end(), 0.0);
  if (s.kind == LayerKind::dense) {
    for (std::size_t o = 0; o < s.out_c; ++o) {
      const double d = d_out[o];
      if (d == 0.0) continue;
      grad.bias[o] += d;
      double* gw = grad.weight.data() + o * s.in_c;
      const double* w = p.weight.data() + o * s.in_c;
      for (std::size_t i = 0; i < s.in_c; ++i) gw[i] += d * in[i];
      if (d_in) {
        for (std::size_t i = 0; i < s.in_c; ++i) (*d_in)[i] += d * w[i];
      }
    }
    return;
  }
  constexpr std::size_t K = LayerShape::kKernel;
  for (std::size_t co = 0; co < s.out_c; ++co) {
    for (std::size_t oy = 0; oy < s.out_h; ++oy) {
      for (std::size_t ox = 0; ox < s.out_w; ++ox) {
        const double d = d_out[(co * s.out_h + oy) * s.out_w + ox];
        if (d == 0.0) continue;
        grad.bias[co] += d;
        for (std::size_t ci = 0; ci < s.in_c; ++ci) {
          const std::size_t wbase = (co * s.in_c + ci) * K * K;
          const std::size_t pbase = ci * s.in_h * s.in_w;
          for (std::size_t ky = 0; ky < K; ++ky) {
            const long iy = static_cast<long>(oy * LayerShape::kStride + ky) - static_cast<long>(LayerShape::kPad);
            if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long ix = static_cast<long>(ox * LayerShape::kStride + kx) - static_cast<long>(LayerShape::kPad);
              if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
              const std::size_t at = pbase + static_cast<std::size_t>(iy) * s.in_w + static_cast<std::size_t>(ix);
              grad.weight[wbase + ky * K + kx] += d * in[at];
              if (d_in) (*d_in)[at] += d * p.weight[wbase + ky * K + kx];
            }
          }
        }
      }
    }
  }
}

void forward_sample(const ModelParams& params, const std::vector<LayerShape>& plan, std::span<const float> x,
                    Workspace& ws) {
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  for (std::size_t l = 0; l < plan.size(); ++l) layer_forward(plan[l], params.layers[l], ws.act[l], ws.act[l + 1]);
}

void check_input(const ModelParams& params, std::size_t row_size) {
  if (row_size != params.spec.input_size()) {
    throw ParameterError("sample size " + std::to_string(row_size) + " does not match model input size " +
                         std::to_string(params.spec.input_size()));
  }
}

// Numerically stable log-softmax cross-entropy; writes softmax into `prob`.
double cross_entropy(const std::vector<double>& logits, int label, std::vector<double>& prob) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    prob[j] = std::exp(logits[j] - peak);
    total += prob[j];
  }
  for (double& v : prob) v /= total;
  return -(logits[static_cast<std::size_t>(label)] - peak - std::log(total));
}

double l2_penalty(const ModelParams& params) {
  double sq = 0.0;
  for (const auto& l : params.layers) {
    for (double v : l.weight) sq += v * v;
    for (double v : l.bias) sq += v * v;
  }
  return sq;
}

}  // namespace

ForwardResult forward(const ModelParams& params, const Tensor& batch) {
  const auto plan = layer_plan(params.spec);
  if (params.layers.size() != plan.size()) throw ParameterError("parameters do not match model spec");
  if (batch.rank() == 0) throw ParameterError("forward needs a batch with a leading dimension");
  const std::size_t n = batch.dim(0);
  if (n > 0) check_input(params, batch.row_size());
  const std::size_t rep = plan[plan.size() - 2].out_size();
  const std::size_t k = plan.back().out_c;
  std::vector<float> logits(n * k), reps(n * rep);
  Workspace ws(plan);
  for (std::size_t i = 0; i < n; ++i) {
    forward_sample(params, plan, batch.row(i), ws);
    const auto& r = ws.act[plan.size() - 1];
    const auto& z = ws.act[plan.size()];
    std::transform(r.begin(), r.end(), reps.begin() + static_cast<long>(i * rep), [](double v) { return static_cast<float>(v); });
    std::transform(z.begin(), z.end(), logits.begin() + static_cast<long>(i * k), [](double v) { return static_cast<float>(v); });
  }
  for (float v : logits) {
    if (!std::isfinite(v)) throw NumericalError("non-finite logits in forward pass");
  }
  return {Tensor({n, k}, std::move(logits)), Tensor({n, rep}, std::move(reps))};
}

std::vector<int> predict(const ModelParams& params, const LabeledDataset& ds,
                         std::span<const std::size_t> indices) {
  const auto plan = layer_plan(params.spec);
  check_input(params, ds.samples.row_size());
  Workspace ws(plan);
  const std::size_t n = indices.empty() ? ds.size() : indices.size();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    forward_sample(params, plan, ds.sample(indices.empty() ? i : indices[i]), ws);
    const auto& z = ws.act.back();
    out[i] = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
  return out;
}

LossGradient loss_and_gradient(const ModelParams& params, const LabeledDataset& ds,
                               std::span<const std::size_t> indices, double weight_decay) {
  const auto plan = layer_plan(params.spec);
  check_input(params, ds.samples.row_size());
  if (indices.empty()) throw ParameterError("empty batch");
  LossGradient out;
  out.gradient.resize(plan.size());
  for (std::size_t l = 0; l < plan.size(); ++l) {
    out.gradient[l].weight.assign(params.layers[l].weight.size(), 0.0);
    out.gradient[l].bias.assign(params.layers[l].bias.size(), 0.0);
  }
  Workspace ws(plan);
  std::vector<double> prob(plan.back().out_c);
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  const std::size_t last = plan.size() - 1;
  double ce = 0.0;
  for (std::size_t idx : indices) {
    const int label = ds.labels[idx];
    if (label < 0 || static_cast<std::size_t>(label) >= prob.size()) {
      throw ParameterError("label " + std::to_string(label) + " exceeds model head width");
    }
    forward_sample(params, plan, ds.sample(idx), ws);
    ce += cross_entropy(ws.act[last + 1], label, prob);
    auto& d_logits = ws.delta[last + 1];
    for (std::size_t j = 0; j < prob.size(); ++j) d_logits[j] = prob[j] * inv_n;
    d_logits[static_cast<std::size_t>(label)] -= inv_n;
    for (std::size_t l = last + 1; l-- > 0;) {
      std::vector<double>* d_in = l > 0 ? &ws.delta[l] : nullptr;
      layer_backward(plan[l], params.layers[l], ws.act[l], ws.delta[l + 1], out.gradient[l], d_in);
      if (d_in) {
        // ReLU mask of the previous layer's output.
        for (std::size_t i = 0; i < d_in->size(); ++i) {
          if (ws.act[l][i] <= 0.0) (*d_in)[i] = 0.0;
        }
      }
    }
  }
  out.loss = ce * inv_n + 0.5 * weight_decay * l2_penalty(params);
  if (weight_decay != 0.0) {
    for (std::size_t l = 0; l < plan.size(); ++l) {
      for (std::size_t i = 0; i < params.layers[l].weight.size(); ++i) {
        out.gradient[l].weight[i] += weight_decay * params.layers[l].weight[i];
      }
      for (std::size_t i = 0; i < params.layers[l].bias.size(); ++i) {
        out.gradient[l].bias[i] += weight_decay * params.layers[l].bias[i];
      }
    }
  }
  return out;
}

double loss_value(const ModelParams& params, const LabeledDataset& ds, std::span<const std::size_t> indices,
                  double weight_decay) {
  const auto plan = layer_plan(params.spec);
  check_input(params, ds.samples.row_size());
  Workspace ws(plan);
  std::vector<double> prob(plan.back().out_c);
  double ce = 0.0;
  for (std::size_t idx : indices) {
    forward_sample(params, plan, ds.sample(idx), ws);
    ce += cross_entropy(ws.act.back(), ds.labels[idx], prob);
  }
  return ce / static_cast<double>(indices.size()) + 0.5 * weight_decay * l2_penalty(params);
}

namespace {
constexpr int kCheckpointTag = 0x50434b52;  // "RKCP"
}

void write_params(const std::filesystem::path& path, const ModelParams& params) {
  params.validate();
  std::vector<int> header = {kCheckpointTag,
                             params.spec.arch == Arch::mlp ? 0 : 1,
                             static_cast<int>(params.spec.channels),
                             static_cast<int>(params.spec.height),
                             static_cast<int>(params.spec.width),
                             static_cast<int>(params.spec.num_classes),
                             static_cast<int>(params.spec.hidden.size())};
  for (std::size_t h : params.spec.hidden) header.push_back(static_cast<int>(h));
  std::vector<float> flat;
  flat.reserve(params.parameter_count());
  for (const auto& l : params.layers) {
    for (double v : l.weight) flat.push_back(static_cast<float>(v));
    for (double v : l.bias) flat.push_back(static_cast<float>(v));
  }
  const std::size_t count = flat.size();
  write_tensor_file(path, Tensor({count}, std::move(flat)), std::span<const int>(header));
}

ModelParams read_params(const std::filesystem::path& path) {
  const auto file = read_tensor_file(path);
  const auto& h = file.labels;
  if (!h || h->size() < 7 || (*h)[0] != kCheckpointTag || h->size() != 7 + static_cast<std::size_t>((*h)[6])) {
    throw ParameterError(path.string() + " is not a model checkpoint");
  }
  ModelSpec spec;
  spec.arch = (*h)[1] == 0 ? Arch::mlp : Arch::convnet;
  spec.channels = static_cast<std::size_t>((*h)[2]);
  spec.height = static_cast<std::size_t>((*h)[3]);
  spec.width = static_cast<std::size_t>((*h)[4]);
  spec.num_classes = static_cast<std::size_t>((*h)[5]);
  spec.hidden.clear();
  for (std::size_t i = 7; i < h->size(); ++i) spec.hidden.push_back(static_cast<std::size_t>((*h)[i]));
  const auto plan = layer_plan(spec);
  ModelParams params{spec, {}};
  const auto data = file.tensor.data();
  std::size_t at = 0;
  for (const auto& shape : plan) {
    LayerParams p;
    if (at + shape.weight_count() + shape.out_c > data.size()) throw ParameterError("checkpoint payload too short");
    p.weight.assign(data.begin() + static_cast<long>(at), data.begin() + static_cast<long>(at + shape.weight_count()));
    at += shape.weight_count();
    p.bias.assign(data.begin() + static_cast<long>(at), data.begin() + static_cast<long>(at + shape.out_c));
    at += shape.out_c;
    params.layers.push_back(std::move(p));
  }
  if (at != data.size()) throw ParameterError("checkpoint payload length does not match model spec");
  return params;
}

}  // namespace resque

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "resque/datasets.hpp"
#include "resque/errors.hpp"
#include "resque/model.hpp"
#include "resque/rng.hpp"

using namespace resque;

namespace {

LabeledDataset random_dataset(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> x(n * spec.input_size());
  for (auto& v : x) v = static_cast<float>(rng.uniform());
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_index(spec.num_classes));
  return LabeledDataset{Tensor({n, spec.channels, spec.height, spec.width}, std::move(x)), std::move(labels),
                        spec.num_classes};
}

// Naive dense forward for an MLP, written independently of the library kernels.
std::vector<double> mlp_logits(const ModelParams& p, std::span<const float> x) {
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const std::size_t out = layer.bias.size();
    const std::size_t in = a.size();
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) s += layer.weight[o * in + i] * a[i];
      z[o] = (l + 1 < p.layers.size()) ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  return a;
}

// Relative error ||a - b|| / max(||a||, ||b||) of analytic vs central-difference gradients of one tensor.
double fd_relative_error(ModelParams& p, const LabeledDataset& ds, std::span<const std::size_t> idx, double wd,
                         std::size_t layer, bool bias, const std::vector<double>& analytic) {
  constexpr double h = 1e-3;
  auto& values = bias ? p.layers[layer].bias : p.layers[layer].weight;
  double diff = 0, na = 0, nf = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss_value(p, ds, idx, wd);
    values[i] = saved - h;
    const double down = loss_value(p, ds, idx, wd);
    values[i] = saved;
    const double fd = (up - down) / (2 * h);
    diff += (fd - analytic[i]) * (fd - analytic[i]);
    na += analytic[i] * analytic[i];
    nf += fd * fd;
  }
  const double scale = std::sqrt(std::max(na, nf));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

void check_gradients(const ModelSpec& spec, std::uint64_t seed, double wd) {
  ModelParams p = init_params(spec, seed);
  // nonzero biases so that their gradients are exercised away from the init point
  Rng rng(seed + 1);
  for (auto& layer : p.layers) {
    for (auto& b : layer.bias) b = 0.1 * rng.normal();
  }
  const auto ds = random_dataset(spec, 4, seed + 2);
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const LossGradient lg = loss_and_gradient(p, ds, idx, wd);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CAPTURE(l);
    CHECK(fd_relative_error(p, ds, idx, wd, l, false, lg.gradient[l].weight) <= 1e-4);
    CHECK(fd_relative_error(p, ds, idx, wd, l, true, lg.gradient[l].bias) <= 1e-4);
  }
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("reference architectures") {
    const auto mlp = reference_mlp(1, 16, 16, 5);
    CHECK(mlp.hidden == std::vector<std::size_t>{64});
    CHECK(representation_size(mlp) == 64);
    CHECK(forward_macs(mlp) == 256 * 64 + 64 * 5);

    const auto conv = reference_convnet(1, 16, 16, 5);
    const auto plan = layer_plan(conv);
    REQUIRE(plan.size() == 3);
    CHECK(plan[0].out_h == 8);
    CHECK(plan[1].out_h == 4);
    CHECK(plan[1].out_c == 16);
    CHECK(plan[2].kind == LayerKind::dense);
    CHECK_FALSE(plan[2].relu);
    CHECK(representation_size(conv) == 16 * 4 * 4);
    CHECK(forward_macs(conv) == 8 * 64 * 9 + 16 * 16 * 8 * 9 + 256 * 5);
    CHECK(init_params(conv, 0).parameter_count() == (8 * 9 + 8) + (16 * 8 * 9 + 16) + (256 * 5 + 5));
  }

  TEST_CASE("odd spatial sizes round up under stride 2") {
    ModelSpec spec{Arch::convnet, 2, 7, 5, {3}, 2};
    const auto plan = layer_plan(spec);
    CHECK(plan[0].out_h == 4);
    CHECK(plan[0].out_w == 3);
  }

  TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(ModelSpec({Arch::mlp, 1, 4, 4, {}, 3}).validate(), ParameterError);
    CHECK_THROWS_AS(ModelSpec({Arch::mlp, 1, 4, 4, {8}, 0}).validate(), ParameterError);
    CHECK_THROWS_AS(parse_arch("resnet"), ParameterError);
  }

  TEST_CASE("all-zero weights give all-zero logits") {
    for (const auto& spec : {reference_mlp(1, 8, 8, 4), reference_convnet(2, 8, 8, 4)}) {
      ModelParams p = init_params(spec, 1);
      for (auto& layer : p.layers) std::fill(layer.weight.begin(), layer.weight.end(), 0.0);
      const auto ds = random_dataset(spec, 3, 2);
      const auto r = forward(p, ds.samples);
      for (float v : r.logits.data()) CHECK(v == 0.0f);
    }
  }

  TEST_CASE("forward shapes: n rows of representations and num_classes logits") {
    const auto spec = reference_convnet(1, 16, 16, 5);
    const auto p = init_params(spec, 3);
    const auto ds = random_dataset(spec, 7, 4);
    const auto r = forward(p, ds.samples);
    CHECK(r.logits.shape() == std::vector<std::size_t>{7, 5});
    CHECK(r.representations.shape() == std::vector<std::size_t>{7, 256});
    for (float v : r.representations.data()) CHECK(v >= 0.0f);
  }

  TEST_CASE("forward rejects a mismatched batch") {
    const auto p = init_params(reference_mlp(1, 4, 4, 3), 0);
    CHECK_THROWS_AS(forward(p, Tensor({2, 15})), ParameterError);
  }

  TEST_CASE("seeded MLP logits match the naive oracle and the frozen fixture") {
    const ModelParams p = init_params(reference_mlp(1, 4, 4, 3), 2024);
    std::vector<float> x(32);
    for (int i = 0; i < 32; ++i) x[i] = static_cast<float>((i * 37 % 101) / 100.0);
    const Tensor batch({2, 1, 4, 4}, x);
    const auto r = forward(p, batch);
    const float frozen[6] = {-0.382071823f, -0.597365558f, -0.497935653f,
                             -0.0972982645f, -0.693836272f, -0.916086257f};
    for (std::size_t s = 0; s < 2; ++s) {
      const auto naive = mlp_logits(p, batch.row(s));
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(r.logits.data()[s * 3 + c] == doctest::Approx(naive[c]).epsilon(1e-6));
        CHECK(std::abs(r.logits.data()[s * 3 + c] - frozen[s * 3 + c]) <= 1e-6);
      }
    }
  }

  TEST_CASE("gradient check: reference MLP on a 4-sample batch") { check_gradients(reference_mlp(1, 16, 16, 5), 10, 1e-4); }

  TEST_CASE("gradient check: two hidden MLP layers with weight decay") {
    check_gradients(ModelSpec{Arch::mlp, 2, 3, 3, {7, 5}, 4}, 20, 0.05);
  }

  TEST_CASE("gradient check: convnet") { check_gradients(ModelSpec{Arch::convnet, 2, 7, 6, {3, 4}, 3}, 30, 1e-3); }

  TEST_CASE("single linear layer, single sample") {
    // an MLP with one tiny hidden layer is the smallest spec; check the head alone on one sample
    const ModelSpec spec{Arch::mlp, 1, 1, 3, {2}, 2};
    ModelParams p = init_params(spec, 5);
    const auto ds = random_dataset(spec, 1, 6);
    const std::vector<std::size_t> idx = {0};
    const auto lg = loss_and_gradient(p, ds, idx, 0.0);
    CHECK(fd_relative_error(p, ds, idx, 0.0, 1, false, lg.gradient[1].weight) <= 1e-4);
  }

  TEST_CASE("duplicated batch gives the same mean-loss gradient") {
    const auto spec = reference_mlp(1, 4, 4, 3);
    const auto p = init_params(spec, 8);
    const auto ds = random_dataset(spec, 5, 9);
    const std::vector<std::size_t> once = {0, 1, 2, 3, 4};
    const std::vector<std::size_t> twice = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
    const auto a = loss_and_gradient(p, ds, once, 1e-3);
    const auto b = loss_and_gradient(p, ds, twice, 1e-3);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t l = 0; l < a.gradient.size(); ++l) {
      for (std::size_t i = 0; i < a.gradient[l].weight.size(); ++i) {
        REQUIRE(a.gradient[l].weight[i] == doctest::Approx(b.gradient[l].weight[i]).epsilon(1e-10));
      }
    }
  }

  TEST_CASE("predict breaks ties toward the lowest class") {
    ModelParams p = init_params(reference_mlp(1, 2, 2, 3), 1);
    for (auto& layer : p.layers) {
      std::fill(layer.weight.begin(), layer.weight.end(), 0.0);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    p.layers.back().bias = {0.0, 1.0, 1.0};
    const LabeledDataset ds{Tensor({2, 1, 2, 2}), {0, 0}, 3};
    CHECK(predict(p, ds) == std::vector<int>{1, 1});
  }

  TEST_CASE("reset_head changes the output width and keeps the body") {
    ModelParams p = init_params(reference_convnet(1, 8, 8, 5), 2);
    const auto body = p.layers[0];
    reset_head(p, 3, 4);
    CHECK(p.spec.num_classes == 3);
    CHECK(p.layers[0] == body);
    CHECK(p.layers.back().bias.size() == 3);
    CHECK_NOTHROW(p.validate());
  }

  TEST_CASE("checkpoint round trip rounds to float32") {
    const auto path = std::filesystem::temp_directory_path() / "resque_ckpt_test.rsq";
    const ModelParams p = init_params(ModelSpec{Arch::convnet, 2, 6, 6, {3, 5}, 4}, 12);
    write_params(path, p);
    const ModelParams q = read_params(path);
    CHECK(q.spec == p.spec);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (std::size_t i = 0; i < p.layers[l].weight.size(); ++i) {
        REQUIRE(q.layers[l].weight[i] == static_cast<double>(static_cast<float>(p.layers[l].weight[i])));
      }
    }
    write_params(path, q);
    CHECK(read_params(path) == q);
    std::filesystem::remove(path);
  }

  TEST_CASE("a dataset file is not a checkpoint") {
    const auto path = std::filesystem::temp_directory_path() / "resque_not_ckpt.rsq";
    write_dataset(path, generate_synthetic({Pattern::gratings, 2, 8, 4, 4, 1, 0}));
    CHECK_THROWS(read_params(path));
    std::filesystem::remove(path);
  }
}

#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "resque/errors.hpp"
#include "resque/randindex.hpp"
#include "resque/rng.hpp"

using namespace resque;

namespace {

double ari(const std::vector<int>& a, const std::vector<int>& b, std::size_t k) {
  return adjusted_rand_index(contingency(a, b, k));
}

TrainConfig pipeline_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.learning_rate = 3e-3;
  c.eval_fraction = 0.0;
  c.cutoff_accuracy = 0.95;
  c.max_epochs = 30;
  c.record_wall_clock = false;
  return c;
}

}  // namespace

TEST_SUITE("randindex") {
  TEST_CASE("contingency table counts and marginals") {
    const auto t = contingency(std::vector<int>{0, 0, 1, 1, 1}, std::vector<int>{0, 1, 1, 1, 0}, 2);
    CHECK(t.at(0, 0) == 1);
    CHECK(t.at(0, 1) == 1);
    CHECK(t.at(1, 0) == 1);
    CHECK(t.at(1, 1) == 2);
    CHECK(t.rc == std::vector<std::uint64_t>{2, 3});
    CHECK(t.tl == std::vector<std::uint64_t>{2, 3});
    CHECK(t.n == 5);
  }

  TEST_CASE("contingency rejects bad input") {
    CHECK_THROWS_AS(contingency(std::vector<int>{0, 1}, std::vector<int>{0}, 2), ParameterError);
    CHECK_THROWS_AS(contingency(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), ParameterError);
    CHECK_THROWS_AS(contingency(std::vector<int>{0, -1}, std::vector<int>{0, 1}, 2), ParameterError);
  }

  TEST_CASE("worked examples") {
    CHECK(ari({0, 0, 1, 1}, {0, 0, 1, 1}, 2) == 1.0);
    CHECK(ari({0, 0, 1, 1}, {1, 1, 0, 0}, 2) == 1.0);
    CHECK(ari({0, 1, 0, 1}, {0, 0, 1, 1}, 2) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(resque_task_index(contingency(std::vector<int>{0, 1, 0, 1}, std::vector<int>{0, 0, 1, 1}, 2)) ==
          doctest::Approx(1.5).epsilon(1e-15));
    CHECK(resque_task_index(contingency(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 1, 1}, 2)) == 0.0);
  }

  TEST_CASE("n < 2 is rejected") {
    CHECK_THROWS_AS(resque_task_index(contingency(std::vector<int>{0}, std::vector<int>{0}, 2)), ParameterError);
  }

  TEST_CASE("matches the pair-counting oracle on small random partitions") {
    Rng rng(31);
    for (int trial = 0; trial < 3000; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(9);
      const std::size_t k = 1 + rng.uniform_index(4);
      std::vector<int> a(n), b(n);
      for (auto& v : a) v = static_cast<int>(rng.uniform_index(k));
      for (auto& v : b) v = static_cast<int>(rng.uniform_index(k));
      REQUIRE(std::abs(ari(a, b, k) - oracle::pair_counting_ari(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("invariant to relabeling and symmetric") {
    Rng rng(32);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(60);
      const std::size_t k = 2 + rng.uniform_index(5);
      std::vector<int> a(n), b(n);
      for (auto& v : a) v = static_cast<int>(rng.uniform_index(k));
      for (auto& v : b) v = static_cast<int>(rng.uniform_index(k));
      std::vector<int> perm(k);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(std::span<int>(perm));
      std::vector<int> a2(n);
      for (std::size_t i = 0; i < n; ++i) a2[i] = perm[static_cast<std::size_t>(a[i])];
      const double base = ari(a, b, k);
      REQUIRE(ari(a2, b, k) == doctest::Approx(base).epsilon(1e-12));
      REQUIRE(ari(b, a, k) == doctest::Approx(base).epsilon(1e-12));
      REQUIRE(ari(a, a, k) == 1.0);
    }
  }

  TEST_CASE("random partitions average near zero ARI") {
    double total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng(seed);
      std::vector<int> a(1000), b(1000);
      for (auto& v : a) v = static_cast<int>(rng.uniform_index(5));
      for (auto& v : b) v = static_cast<int>(rng.uniform_index(5));
      total += resque_task_index(contingency(a, b, 5));
    }
    CHECK(std::abs(total / 50 - 1.0) <= 0.05);
  }

  TEST_CASE("large counts stay exact") {
    // 4e6 samples: pair sums near 8e12 per cell overflow nothing and match the closed form
    ContingencyTable t;
    t.n_c = 2;
    t.counts = {2'000'000, 0, 0, 2'000'000};
    t.rc = {2'000'000, 2'000'000};
    t.tl = {2'000'000, 2'000'000};
    t.n = 4'000'000;
    CHECK(adjusted_rand_index(t) == 1.0);
  }

  TEST_CASE("pipeline is deterministic and scores the same task below a scrambled one") {
    const SyntheticSpec spec{Pattern::gratings, 4, 60, 16, 16, 1, 3};
    const auto task = generate_synthetic(spec);
    const TrainConfig cfg = pipeline_config();
    const auto original = train_to_cutoff(init_params(reference_mlp(1, 16, 16, 4), 1), task, cfg).params;

    const auto a = resque_task_pipeline(original, task, cfg);
    const auto b = resque_task_pipeline(original, task, cfg);
    CHECK(a.index == b.index);
    CHECK(a.cluster_labels == b.cluster_labels);
    CHECK(a.index == doctest::Approx(1.0 - a.ari));

    auto scrambled = task;
    Rng rng(99);
    rng.shuffle(std::span<int>(scrambled.labels));
    const auto s = resque_task_pipeline(original, scrambled, cfg);
    CHECK(a.index < s.index);
    CHECK(s.index > 0.8);
  }

  TEST_CASE("pipeline errors name their stage") {
    const auto task = generate_synthetic({Pattern::gratings, 3, 10, 16, 16, 1, 3});
    const auto params = init_params(reference_mlp(1, 16, 16, 3), 1);
    auto one_class = task;
    one_class.num_classes = 1;
    std::fill(one_class.labels.begin(), one_class.labels.end(), 0);
    try {
      resque_task_pipeline(params, one_class, pipeline_config());
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "validate");
    }
    auto wrong_shape = generate_synthetic({Pattern::gratings, 3, 10, 8, 8, 1, 3});
    try {
      resque_task_pipeline(params, wrong_shape, pipeline_config());
      FAIL("expected StageError");
    } catch (const StageError& e) {
      CHECK(e.stage() == "validate");
    }
  }
}

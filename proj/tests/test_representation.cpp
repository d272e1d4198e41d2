#include <cmath>
#include <numbers>

#include "doctest.h"
#include "resque/errors.hpp"
#include "resque/representation.hpp"
#include "resque/rng.hpp"

using namespace resque;

namespace {

EmbeddingBatch batch(std::vector<std::vector<float>> rows, std::vector<int> labels, std::size_t k) {
  const std::size_t dim = rows.front().size();
  std::vector<float> data;
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return EmbeddingBatch{Tensor({rows.size(), dim}, std::move(data)), std::move(labels), k};
}

ClassEmbeddingSet unit_set(std::vector<std::vector<double>> vectors) {
  std::vector<double> flat;
  for (const auto& v : vectors) flat.insert(flat.end(), v.begin(), v.end());
  return ClassEmbeddingSet(vectors.size(), vectors.front().size(), std::move(flat));
}

ClassEmbeddingSet random_set(Rng& rng, std::size_t k, std::size_t dim) {
  std::vector<float> data(k * 3 * dim);
  std::vector<int> labels(k * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % k);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  return class_embeddings(EmbeddingBatch{Tensor({k * 3, dim}, std::move(data)), std::move(labels), k}, k);
}

}  // namespace

TEST_SUITE("representation") {
  TEST_CASE("single row (3, 4) normalizes to (0.6, 0.8)") {
    const auto set = class_embeddings(batch({{3, 4}}, {0}, 1), 1);
    CHECK(set.vector(0)[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(set.vector(0)[1] == doctest::Approx(0.8).epsilon(1e-15));
  }

  TEST_CASE("rows (1, 0) and (0, 1) sum and normalize to the diagonal") {
    const auto set = class_embeddings(batch({{1, 0}, {0, 1}}, {0, 0}, 1), 1);
    CHECK(set.vector(0)[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    CHECK(set.vector(0)[1] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  }

  TEST_CASE("scaling one class's rows leaves the set unchanged") {
    const auto a = class_embeddings(batch({{1, 2, 3}, {0, 1, 1}, {4, 0, 1}}, {0, 0, 1}, 2), 2);
    const auto b = class_embeddings(batch({{10, 20, 30}, {0, 10, 10}, {4, 0, 1}}, {0, 0, 1}, 2), 2);
    for (std::size_t d = 0; d < 3; ++d) CHECK(a.vector(0)[d] == doctest::Approx(b.vector(0)[d]).epsilon(1e-12));
    CHECK(resque_dist(a, b) <= 1e-7);
  }

  TEST_CASE("empty class and zero sum are reported") {
    try {
      class_embeddings(batch({{1, 0}, {0, 1}}, {0, 0}, 3), 3);
      FAIL("expected MissingClassError");
    } catch (const MissingClassError& e) {
      CHECK(e.label() == 1);
    }
    CHECK_THROWS_AS(class_embeddings(batch({{1, -1}, {-1, 1}, {1, 1}}, {0, 0, 1}, 2), 2), DegenerateError);
  }

  TEST_CASE("sums are accumulated in double precision") {
    // 1e8 in float swallows 1.0; the double sum keeps the second coordinate
    std::vector<std::vector<float>> rows(1001, {0.0f, 1.0f});
    rows[0] = {1e8f, 0.0f};
    const auto set = class_embeddings(batch(rows, std::vector<int>(1001, 0), 1), 1);
    CHECK(set.vector(0)[1] == doctest::Approx(1000.0 / std::hypot(1e8, 1000.0)).epsilon(1e-9));
  }

  TEST_CASE("index examples") {
    const auto a = unit_set({{1, 0}, {0, 1}});
    CHECK(resque_dist(a, a) == 0.0);
    const auto orth = unit_set({{0, 1}, {1, 0}});
    CHECK(resque_dist(a, orth) == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
    // dot products 0.5 and 1.0
    const auto half = unit_set({{0.5, std::sqrt(0.75)}, {0, 1}});
    CHECK(resque_dist(a, half) == doctest::Approx((std::numbers::pi / 3 + 0.0) / 2).epsilon(1e-12));
    CHECK(resque_dist(a, half) == doctest::Approx(0.5236).epsilon(1e-4));
  }

  TEST_CASE("mismatched sets are rejected") {
    const auto a = unit_set({{1, 0}, {0, 1}});
    const auto b = unit_set({{1, 0, 0}, {0, 1, 0}});
    const auto c = unit_set({{1, 0}, {0, 1}, {1, 0}});
    CHECK_THROWS_AS(resque_dist(a, b), ParameterError);
    CHECK_THROWS_AS(resque_dist(a, c), ParameterError);
    CHECK_THROWS_AS(unit_set({{2, 0}}), ParameterError);
  }

  TEST_CASE("symmetric, bounded, identity on random sets") {
    Rng rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t k = 1 + rng.uniform_index(6);
      const std::size_t dim = 1 + rng.uniform_index(8);
      const auto a = random_set(rng, k, dim);
      const auto b = random_set(rng, k, dim);
      const double ab = resque_dist(a, b);
      REQUIRE(ab == resque_dist(b, a));
      REQUIRE(ab >= 0.0);
      REQUIRE(ab <= std::numbers::pi);
      REQUIRE(resque_dist(a, a) <= 1e-7);
    }
  }

  TEST_CASE("antipodal sets give pi despite rounding") {
    const double s = 1 / std::sqrt(3.0);
    const auto a = unit_set({{s, s, s}});
    const auto b = unit_set({{-s, -s, -s}});
    CHECK(resque_dist(a, b) == doctest::Approx(std::numbers::pi));
  }

  TEST_CASE("tensor round trip renormalizes") {
    const auto a = unit_set({{0.6, 0.8}, {1, 0}});
    const Tensor t = a.to_tensor();
    CHECK(t.shape() == std::vector<std::size_t>{2, 2});
    const auto b = ClassEmbeddingSet::from_tensor(t);
    CHECK(resque_dist(a, b) <= 1e-7);
  }
}

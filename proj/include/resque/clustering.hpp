#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "resque/embedding.hpp"

namespace resque {

/// Row-major double matrix; rows are points or centroids.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> data() const noexcept { return data_; }

  static Matrix from_embeddings(const EmbeddingBatch& batch);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// k x dim centroids.
using CentroidMatrix = Matrix;

struct LloydOptions {
  double tol = 1e-4;  // max centroid movement, relative to the RMS distance of points from their mean
  int max_iter = 300;
};

struct ClusterAssignment {
  std::vector<int> labels;
  CentroidMatrix centroids;
  double inertia = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> inertia_history;  // after each assignment step, then the final assignment
};

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept;

/// Per-label mean of the points: row i is the mean of points whose label is i.
/// Throws MissingClassError for an absent label.
CentroidMatrix centroids_from_labels(const Matrix& points, std::span<const int> labels, std::size_t k);
CentroidMatrix centroids_from_labels(const EmbeddingBatch& batch, std::size_t k);

/// k-means++ seeding: first centroid uniform, then D^2-weighted draws.
CentroidMatrix kmeanspp_init(const Matrix& points, std::size_t k, std::uint64_t seed);

/// Sum over clusters of (|c| / n) * entropy (nats) of the true labels inside c.
double label_entropy(std::span<const int> clusters, std::span<const int> truths);

struct LeastEntropySelection {
  CentroidMatrix initial;  // starting centroids of the selected run
  std::uint64_t seed = 0;
  double entropy = 0.0;
  ClusterAssignment result;
};

inline constexpr int kLeastEntropyRuns = 20;

/// Tries seeds base_seed .. base_seed + 19: uniform random assignment, per-cluster
/// means, full Lloyd. Keeps the run with the lowest label_entropy (first seed wins ties).
LeastEntropySelection random_init_least_entropy(const Matrix& points, std::span<const int> truths, std::size_t k,
                                                std::uint64_t base_seed, const LloydOptions& options = {});

/// Lloyd's algorithm. Ties go to the lowest centroid index; an empty cluster is
/// reseeded with the point farthest from its current centroid. Labels returned
/// are always the nearest final centroid.
ClusterAssignment lloyd(const Matrix& points, CentroidMatrix init, const LloydOptions& options = {});

enum class InitScheme { labels, kmeanspp, least_entropy };

std::string_view to_string(InitScheme scheme) noexcept;
InitScheme parse_init_scheme(std::string_view name);

/// Initial centroids for `scheme`. `truths` feeds the label-mean and entropy schemes.
CentroidMatrix initial_centroids(InitScheme scheme, const Matrix& points, std::span<const int> truths, std::size_t k,
                                 std::uint64_t seed, const LloydOptions& options = {});

}  // namespace resque

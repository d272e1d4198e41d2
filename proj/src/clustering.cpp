#include "resque/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "resque/errors.hpp"
#include "resque/rng.hpp"

namespace resque {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw ParameterError("matrix storage does not match rows x cols");
}

Matrix Matrix::from_embeddings(const EmbeddingBatch& batch) {
  const auto values = batch.representations.data();
  return Matrix(batch.size(), batch.dim(), std::vector<double>(values.begin(), values.end()));
}

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    d += t * t;
  }
  return d;
}

CentroidMatrix centroids_from_labels(const Matrix& points, std::span<const int> labels, std::size_t k) {
  if (labels.size() != points.rows()) throw ParameterError("label count does not match point count");
  CentroidMatrix cent(k, points.cols());
  std::vector<std::size_t> count(k, 0);
  for (std::size_t j = 0; j < points.rows(); ++j) {
    const int y = labels[j];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ParameterError("label " + std::to_string(y) + " out of range");
    auto c = cent.row(static_cast<std::size_t>(y));
    const auto r = points.row(j);
    for (std::size_t d = 0; d < r.size(); ++d) c[d] += r[d];
    ++count[static_cast<std::size_t>(y)];
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (count[i] == 0) throw MissingClassError(static_cast<int>(i));
    for (double& v : cent.row(i)) v /= static_cast<double>(count[i]);
  }
  return cent;
}

CentroidMatrix centroids_from_labels(const EmbeddingBatch& batch, std::size_t k) {
  return centroids_from_labels(Matrix::from_embeddings(batch), batch.labels, k);
}

namespace {

std::size_t count_distinct_rows(const Matrix& points, std::size_t stop_at) {
  std::vector<std::size_t> order(points.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = points.row(a), rb = points.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t i = 1; i < order.size() && distinct < stop_at; ++i) {
    const auto a = points.row(order[i - 1]), b = points.row(order[i]);
    if (!std::equal(a.begin(), a.end(), b.begin())) ++distinct;
  }
  return distinct;
}

void check_k(const Matrix& points, std::size_t k) {
  if (k < 2) throw ParameterError("k must be >= 2");
  if (points.rows() < k) throw ParameterError("fewer points than clusters");
}

}  // namespace

CentroidMatrix kmeanspp_init(const Matrix& points, std::size_t k, std::uint64_t seed) {
  check_k(points, k);
  if (count_distinct_rows(points, k) < k) throw ParameterError("fewer than k distinct points");
  Rng rng(seed);
  const std::size_t n = points.rows();
  CentroidMatrix cent(k, points.cols());
  std::size_t first = static_cast<std::size_t>(rng.uniform_index(n));
  std::copy_n(points.row(first).begin(), points.cols(), cent.row(0).begin());
  std::vector<double> nearest(n);
  for (std::size_t j = 0; j < n; ++j) nearest[j] = squared_distance(points.row(j), cent.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    const double target = rng.uniform() * total;
    double running = 0.0;
    std::size_t pick = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (nearest[j] <= 0.0) continue;
      running += nearest[j];
      pick = j;
      if (running > target) break;
    }
    if (pick == n) throw ParameterError("fewer than k distinct points");
    std::copy_n(points.row(pick).begin(), points.cols(), cent.row(c).begin());
    for (std::size_t j = 0; j < n; ++j) nearest[j] = std::min(nearest[j], squared_distance(points.row(j), cent.row(c)));
  }
  return cent;
}

double label_entropy(std::span<const int> clusters, std::span<const int> truths) {
  if (clusters.size() != truths.size()) throw ParameterError("label arrays differ in length");
  if (clusters.empty()) return 0.0;
  const int kc = *std::max_element(clusters.begin(), clusters.end()) + 1;
  const int kt = *std::max_element(truths.begin(), truths.end()) + 1;
  std::vector<std::size_t> table(static_cast<std::size_t>(kc) * kt, 0), size(kc, 0);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    ++table[static_cast<std::size_t>(clusters[i]) * kt + truths[i]];
    ++size[clusters[i]];
  }
  const double n = static_cast<double>(clusters.size());
  double total = 0.0;
  for (int c = 0; c < kc; ++c) {
    if (size[c] == 0) continue;
    const double m = static_cast<double>(size[c]);
    double h = 0.0;
    for (int t = 0; t < kt; ++t) {
      const auto cnt = table[static_cast<std::size_t>(c) * kt + t];
      if (cnt == 0) continue;
      const double p = static_cast<double>(cnt) / m;
      h -= p * std::log(p);
    }
    total += (m / n) * h;
  }
  return total;
}

ClusterAssignment lloyd(const Matrix& points, CentroidMatrix init, const LloydOptions& options) {
  const std::size_t n = points.rows(), k = init.rows(), dim = points.cols();
  if (k == 0 || k > n) throw ParameterError("need 1 <= k <= number of points");
  if (init.cols() != dim) throw ParameterError("centroid dimension does not match points");
  if (options.max_iter < 1 || !(options.tol >= 0.0)) throw ParameterError("invalid Lloyd options");

  std::vector<double> mean(dim, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += points.row(j)[d];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  double spread = 0.0;
  for (std::size_t j = 0; j < n; ++j) spread += squared_distance(points.row(j), mean);
  const double threshold = options.tol * std::sqrt(spread / static_cast<double>(n));

  ClusterAssignment out;
  out.labels.assign(n, 0);
  out.centroids = std::move(init);
  std::vector<double> dist(n);

  auto assign = [&] {
    double inertia = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points.row(j), out.centroids.row(c));
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      out.labels[j] = best_c;
      dist[j] = best;
      inertia += best;
    }
    return inertia;
  };

  for (int it = 1; it <= options.max_iter; ++it) {
    out.inertia_history.push_back(assign());
    CentroidMatrix next(k, dim);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      auto c = next.row(static_cast<std::size_t>(out.labels[j]));
      const auto r = points.row(j);
      for (std::size_t d = 0; d < dim; ++d) c[d] += r[d];
      ++count[static_cast<std::size_t>(out.labels[j])];
    }
    std::vector<bool> used(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        for (double& v : next.row(c)) v /= static_cast<double>(count[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!used[j] && dist[j] > far_d) {
          far_d = dist[j];
          far = j;
        }
      }
      used[far] = true;
      std::copy_n(points.row(far).begin(), dim, next.row(c).begin());
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(squared_distance(next.row(c), out.centroids.row(c))));
    }
    out.centroids = std::move(next);
    out.iterations = it;
    if (movement <= threshold) {
      out.converged = true;
      break;
    }
  }
  out.inertia = assign();
  out.inertia_history.push_back(out.inertia);
  return out;
}

LeastEntropySelection random_init_least_entropy(const Matrix& points, std::span<const int> truths, std::size_t k,
                                                std::uint64_t base_seed, const LloydOptions& options) {
  check_k(points, k);
  if (truths.size() != points.rows()) throw ParameterError("true label count does not match point count");
  const std::size_t n = points.rows();
  LeastEntropySelection best;
  bool have = false;
  for (int r = 0; r < kLeastEntropyRuns; ++r) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
    Rng rng(seed);
    std::vector<int> assignment(n);
    std::vector<std::size_t> size(k, 0);
    for (auto& a : assignment) {
      a = static_cast<int>(rng.uniform_index(k));
      ++size[static_cast<std::size_t>(a)];
    }
    for (std::size_t c = 0; c < k; ++c) {
      while (size[c] == 0) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(n));
        if (size[static_cast<std::size_t>(assignment[j])] <= 1) continue;
        --size[static_cast<std::size_t>(assignment[j])];
        assignment[j] = static_cast<int>(c);
        ++size[c];
      }
    }
    CentroidMatrix init = centroids_from_labels(points, assignment, k);
    ClusterAssignment result = lloyd(points, init, options);
    const double h = label_entropy(result.labels, truths);
    if (!have || h < best.entropy) {
      best = {std::move(init), seed, h, std::move(result)};
      have = true;
    }
  }
  return best;
}

std::string_view to_string(InitScheme scheme) noexcept {
  switch (scheme) {
    case InitScheme::labels: return "labels";
    case InitScheme::kmeanspp: return "kmeanspp";
    case InitScheme::least_entropy: return "least_entropy";
  }
  return "labels";
}

InitScheme parse_init_scheme(std::string_view name) {
  if (name == "labels" || name == "label_means") return InitScheme::labels;
  if (name == "kmeanspp" || name == "kmeans++") return InitScheme::kmeanspp;
  if (name == "least_entropy" || name == "random") return InitScheme::least_entropy;
  throw ParameterError("unknown init scheme '" + std::string(name) + "'");
}

CentroidMatrix initial_centroids(InitScheme scheme, const Matrix& points, std::span<const int> truths, std::size_t k,
                                 std::uint64_t seed, const LloydOptions& options) {
  switch (scheme) {
    case InitScheme::labels:
      return centroids_from_labels(points, truths, k);
    case InitScheme::kmeanspp:
      return kmeanspp_init(points, k, seed);
    case InitScheme::least_entropy:
      return random_init_least_entropy(points, truths, k, seed, options).initial;
  }
  throw ParameterError("unknown init scheme");
}

}  // namespace resque

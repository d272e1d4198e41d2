#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace resque {

struct CorrelationResult {
  double coefficient = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;
};

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz), ~1e-12 accuracy.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t statistic with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// Ranks starting at 1; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// Sample Pearson r; p from t = r * sqrt((n - 2) / (1 - r^2)) with n - 2 df.
/// Requires equal lengths and n >= 3 (ParameterError) and non-constant series (DegenerateError).
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Pearson on average ranks, same p-value approximation.
CorrelationResult spearman(std::span<const double> x, std::span<const double> y);

enum class CorrelationMethod { pearson, spearman };

/// Permutation test: fraction of `resamples` shuffles of y whose |coefficient|
/// reaches the observed one, as (hits + 1) / (resamples + 1). Shuffle i draws
/// from its own stream derived from (seed, i).
double permutation_p_value(std::span<const double> x, std::span<const double> y, CorrelationMethod method,
                           std::size_t resamples, std::uint64_t seed);

}  // namespace resque

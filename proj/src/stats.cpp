#include "resque/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "resque/errors.hpp"
#include "resque/rng.hpp"

namespace resque {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 1000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ParameterError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ParameterError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ParameterError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) throw NumericalError("t statistic is NaN");
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = mean_rank;
    i = j;
  }
  return ranks;
}

namespace {

double pearson_coefficient(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("correlation is undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void check_series(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("correlation series differ in length");
  if (x.size() < 3) throw ParameterError("correlation needs at least 3 points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ParameterError("correlation series contain non-finite values");
  }
}

CorrelationResult with_p_value(double r, std::size_t n) {
  const double df = static_cast<double>(n) - 2.0;
  const double one_minus = 1.0 - r * r;
  const double p = one_minus <= 0.0 ? 0.0 : student_t_two_sided_p(r * std::sqrt(df / one_minus), df);
  return {r, p, n};
}

}  // namespace

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  check_series(x, y);
  return with_p_value(pearson_coefficient(x, y), x.size());
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
  check_series(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return with_p_value(pearson_coefficient(rx, ry), x.size());
}

double permutation_p_value(std::span<const double> x, std::span<const double> y, CorrelationMethod method,
                           std::size_t resamples, std::uint64_t seed) {
  check_series(x, y);
  if (resamples == 0) throw ParameterError("permutation test needs at least one resample");
  std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
  if (method == CorrelationMethod::spearman) {
    a = average_ranks(x);
    b = average_ranks(y);
  }
  const double observed = std::abs(pearson_coefficient(a, b));
  // Ties with the observed statistic count as hits; the margin absorbs summation-order noise.
  const double bar = observed - 1e-12;
  std::size_t hits = 0;
  std::vector<double> shuffled(b.size());
  for (std::size_t i = 0; i < resamples; ++i) {
    std::copy(b.begin(), b.end(), shuffled.begin());
    Rng rng(derive_seed(seed, i));
    rng.shuffle(std::span<double>(shuffled));
    if (std::abs(pearson_coefficient(a, shuffled)) >= bar) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(resamples + 1);
}

}  // namespace resque

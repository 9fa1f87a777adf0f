#include "shimkit/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace shimkit::bench {

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences) {
  if (differences.size() < 6) {
    throw DomainError("wilcoxon: need at least 6 pairs");
  }
  std::vector<double> d;
  for (double x : differences) {
    if (x != 0.0) d.push_back(x);
  }
  WilcoxonResult result;
  if (d.empty()) {
    result.no_effect = true;
    result.p_value = 1.0;
    return result;
  }
  const int n = static_cast<int>(d.size());
  result.n = n;

  // average ranks of |d|, scaled by 2 so ties stay integral
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<long> rank2(n, 0);
  std::vector<long> tie_sizes;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) ++j;
    const long sum2 = static_cast<long>(i + 1 + j) * (j - i); // 2 * sum of ranks i+1..j
    for (int k = i; k < j; ++k) rank2[order[k]] = sum2 / (j - i);
    tie_sizes.push_back(j - i);
    i = j;
  }

  long w2 = 0; // 2 * W+
  for (int i = 0; i < n; ++i) {
    if (d[i] > 0.0) w2 += rank2[i];
  }
  result.statistic = static_cast<double>(w2) / 2.0;

  const long total2 = static_cast<long>(n) * (n + 1); // 2 * n(n+1)/2
  if (n <= 25) {
    result.exact = true;
    // counts of 2*W+ over all 2^n sign assignments
    std::vector<double> counts(total2 + 1, 0.0);
    counts[0] = 1.0;
    for (int i = 0; i < n; ++i) {
      const long r = rank2[i];
      for (long s = total2; s >= r; --s) counts[s] += counts[s - r];
    }
    const double denom = std::ldexp(1.0, n);
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w2) lower += counts[s];
      if (s >= w2) upper += counts[s];
    }
    result.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / denom);
  } else {
    const double mean = static_cast<double>(n) * (n + 1) / 4.0;
    double tie_adj = 0.0;
    for (long t : tie_sizes) tie_adj += static_cast<double>(t) * t * t - t;
    const double var = static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_adj / 48.0;
    const double w = result.statistic;
    const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
    result.p_value = std::min(1.0, 2.0 * normal_sf(z));
  }
  return result;
}

WilcoxonResult paired_significance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("paired_significance: length mismatch");
  std::vector<double> d(x.size());
  for (size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return wilcoxon_signed_rank(d);
}

} // namespace shimkit::bench

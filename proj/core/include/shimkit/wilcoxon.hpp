#pragma once

#include <span>

#include "shimkit/common.hpp"

namespace shimkit::bench {

struct WilcoxonResult {
  double statistic = 0.0; // W+: rank sum of positive differences
  double p_value = 1.0;   // two-sided
  bool no_effect = false; // every difference was exactly zero
  int n = 0;              // nonzero differences used
  bool exact = false;     // exact distribution vs normal approximation
};

/// Two-sided Wilcoxon signed-rank test on paired differences. Zero
/// differences are dropped; ties get average ranks. Exact distribution
/// for n <= 25, normal approximation with continuity (and tie) correction
/// above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences);

/// Convenience wrapper over per-slice RMSE pairs: tests x - y.
WilcoxonResult paired_significance(std::span<const double> x, std::span<const double> y);

} // namespace shimkit::bench

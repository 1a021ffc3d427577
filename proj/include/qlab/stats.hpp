#pragma once

#include <vector>

namespace qlab::stats {

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanStderr mean_stderr(const std::vector<double>& xs);

// One-sided Wilcoxon signed-rank test for the alternative "median of diffs > 0".
// Exact p-value by dynamic programming over the null distribution of the
// positive-rank sum W+ (zeros dropped, average ranks for ties). Returns the
// p-value P(W+ >= observed | H0).
double wilcoxon_signed_rank_one_sided(const std::vector<double>& diffs);

}  // namespace qlab::stats

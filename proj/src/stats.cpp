#include "qlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

namespace qlab::stats {

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  const std::size_t n = xs.size();
  if (n == 0) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std_error = std::sqrt(ss / (n - 1) / n);
  }
  return r;
}

double wilcoxon_signed_rank_one_sided(const std::vector<double>& diffs) {
  // Nonzero differences, ranked by |d| with average ranks on ties. Ranks are
  // doubled so tied (half-integer) averages stay integral for the DP.
  std::vector<double> d;
  d.reserve(diffs.size());
  for (double x : diffs)
    if (x != 0.0) d.push_back(x);
  const std::size_t n = d.size();
  if (n == 0) return 1.0;

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(d[a]) < std::abs(d[b]);
  });

  std::vector<long> rank2(n, 0);  // doubled average rank
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]]))
      ++j;
    // positions i..j (0-based) share rank; average of (i+1)..(j+1), doubled
    const long r2 = static_cast<long>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[idx[k]] = r2;
    i = j + 1;
  }

  long w_obs = 0;
  long total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    total += rank2[k];
    if (d[k] > 0.0) w_obs += rank2[k];
  }

  // Null distribution of the doubled positive-rank sum: each rank enters with
  // probability 1/2 independently.
  std::vector<double> dist(static_cast<std::size_t>(total) + 1, 0.0);
  dist[0] = 1.0;
  long reach = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const long r2 = rank2[k];
    reach += r2;
    for (long s = reach; s >= 0; --s) {
      const double with = s >= r2 ? dist[static_cast<std::size_t>(s - r2)] : 0.0;
      dist[static_cast<std::size_t>(s)] =
          0.5 * (dist[static_cast<std::size_t>(s)] + with);
    }
  }

  double p = 0.0;
  for (long s = w_obs; s <= total; ++s) p += dist[static_cast<std::size_t>(s)];
  return std::min(1.0, p);
}

}  // namespace qlab::stats

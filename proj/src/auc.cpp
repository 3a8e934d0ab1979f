#include "eta/auc.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eta/error.hpp"

namespace eta {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney U statistic, kept integral so the result is exact:
  // a tie group occupying ranks [lo+1, hi] has mid-rank (lo + 1 + hi) / 2.
  std::uint64_t positives = 0;
  std::uint64_t rank_sum_x2 = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && scores[order[hi]] == scores[order[lo]]) ++hi;
    for (std::size_t i = lo; i < hi; ++i) {
      if (labels[order[i]] != 0) {
        ++positives;
        rank_sum_x2 += lo + 1 + hi;
      }
    }
    lo = hi;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw InvalidArgument("auc: need at least one positive and one negative label");
  }
  const std::uint64_t u_x2 = rank_sum_x2 - positives * (positives + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace eta

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eta/error.hpp"
#include "eta/fingerprint.hpp"

namespace eta {

/// Validity flags for a padded behavior sequence; non-zero marks a real event.
using Mask = std::vector<std::uint8_t>;

/// Positions selected from a behavior sequence, best first.
///
/// Scores depend on the rule: Hamming distance (lower is better), dot product
/// or cosine (higher is better), or for category search `match * L + position`
/// (higher is better). Equal scores are broken in favor of the more recent
/// (larger) position.
struct TopKResult {
  std::vector<std::size_t> indices;
  std::vector<double> scores;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  /// Selected positions in ascending sequence order.
  std::vector<std::size_t> sorted_indices() const {
    auto out = indices;
    std::sort(out.begin(), out.end());
    return out;
  }
};

enum class Similarity { kDot, kAngular };

TopKResult top_k_by_hamming(std::span<const std::uint64_t> query, const FingerprintTable& keys,
                            std::span<const std::uint8_t> valid_mask, std::size_t k);

TopKResult top_k_by_hamming(const Fingerprint& query, const FingerprintTable& keys,
                            std::span<const std::uint8_t> valid_mask, std::size_t k);

/// Keys are the rows of `keys`.
TopKResult top_k_by_dot(const Eigen::Ref<const Eigen::VectorXd>& query,
                        const Eigen::Ref<const Eigen::MatrixXd>& keys,
                        std::span<const std::uint8_t> valid_mask, std::size_t k,
                        Similarity metric = Similarity::kDot);

/// SIM-hard style retrieval: most recent behaviors of the target category,
/// backfilled with the most recent other behaviors when fewer than k match.
TopKResult category_hard_search(std::int64_t target_category,
                                std::span<const std::int64_t> behavior_categories,
                                std::span<const std::uint8_t> valid_mask, std::size_t k);

double recall_at_k(const TopKResult& approx, const TopKResult& exact);

}  // namespace eta

#pragma once

#include <span>

namespace eta {

/// Probability that a random positive is scored above a random negative,
/// ties counting one half. Sort-and-rank with mid-ranks; exact for ties.
/// Throws InvalidArgument unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace eta

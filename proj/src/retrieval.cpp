#include "eta/retrieval.hpp"

#include <bit>
#include <limits>
#include <unordered_set>

namespace eta {

namespace {

template <class Score>
struct Candidate {
  Score score;
  std::size_t index;
};

// Bounded selection: keeps the k best candidates in a heap whose top is the
// worst kept one. `better(a, b)` must be a strict total order on candidates.
template <class Score, class Better>
class TopKSelector {
 public:
  TopKSelector(std::size_t k, Better better) : k_(k), better_(better) { heap_.reserve(k); }

  void offer(Score score, std::size_t index) {
    const Candidate<Score> c{score, index};
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), better_);
    } else if (better_(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), better_);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), better_);
    }
  }

  TopKResult finish() {
    std::sort(heap_.begin(), heap_.end(), better_);
    TopKResult out;
    out.indices.reserve(heap_.size());
    out.scores.reserve(heap_.size());
    for (const auto& c : heap_) {
      out.indices.push_back(c.index);
      out.scores.push_back(static_cast<double>(c.score));
    }
    return out;
  }

 private:
  std::size_t k_;
  Better better_;
  std::vector<Candidate<Score>> heap_;
};

template <class Score>
auto higher_is_better() {
  return [](const Candidate<Score>& a, const Candidate<Score>& b) {
    return a.score > b.score || (a.score == b.score && a.index > b.index);
  };
}

void check_k(std::size_t k) {
  if (k == 0) throw InvalidArgument("top-k: k must be >= 1");
}

}  // namespace

TopKResult top_k_by_hamming(std::span<const std::uint64_t> query, const FingerprintTable& keys,
                            std::span<const std::uint8_t> valid_mask, std::size_t k) {
  check_k(k);
  if (query.size() != keys.words_per_item()) {
    throw InvalidArgument("top_k_by_hamming: query and key fingerprint shapes differ");
  }
  if (valid_mask.size() != keys.size()) {
    throw InvalidArgument("top_k_by_hamming: mask length differs from key count");
  }
  // Distances are bounded by the bit count, so a histogram finds the cutoff
  // distance in one pass; the heap would churn on the many ties near it.
  const std::size_t n = keys.size();
  const std::size_t stride = keys.words_per_item();
  const std::uint64_t* base = keys.raw().data();
  const auto masked = static_cast<std::uint32_t>(keys.rounds() * keys.bits_per_round() + 1);
  // Per-thread scratch; scoring calls this once per candidate.
  thread_local std::vector<std::uint32_t> dist, hist;
  dist.resize(n);
  hist.assign(masked + 1, 0);
  auto record = [&](std::size_t i, std::uint32_t d) {
    d = valid_mask[i] ? d : masked;
    dist[i] = d;
    ++hist[d];
  };
  if (stride == 1) {
    for (std::size_t i = 0; i < n; ++i) record(i, static_cast<std::uint32_t>(std::popcount(query[0] ^ base[i])));
  } else if (stride == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      record(i, static_cast<std::uint32_t>(std::popcount(query[0] ^ base[2 * i]) +
                                           std::popcount(query[1] ^ base[2 * i + 1])));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      record(i, static_cast<std::uint32_t>(hamming(query, std::span<const std::uint64_t>(base + i * stride, stride))));
    }
  }
  const std::size_t take = std::min<std::size_t>(k, n - hist[masked]);
  std::uint32_t cutoff = 0;
  std::size_t below = 0;
  while (take > 0 && below + hist[cutoff] < take) below += hist[cutoff++];

  // Output slot of the next pick at each distance; distances past the cutoff
  // start full. The scan runs from the most recent row down, which is
  // already the tie order, and is branch-free: a rejected row is written to
  // the spare slot at `take`.
  thread_local std::vector<std::size_t> slot;
  slot.assign(masked + 1, take);
  std::size_t next = 0;
  for (std::uint32_t b = 0; b < cutoff; ++b) {
    slot[b] = next;
    next += hist[b];
  }
  if (take > 0) slot[cutoff] = next;
  TopKResult out;
  out.indices.resize(take + 1);
  out.scores.resize(take + 1);
  for (std::size_t i = n, left = take; i-- > 0 && left > 0;) {
    const std::uint32_t d = dist[i];
    const std::size_t at = slot[d];
    const bool keep = at < take;
    const std::size_t to = keep ? at : take;
    out.indices[to] = i;
    out.scores[to] = static_cast<double>(d);
    slot[d] = at + keep;
    left -= keep;
  }
  out.indices.pop_back();
  out.scores.pop_back();
  return out;
}

TopKResult top_k_by_hamming(const Fingerprint& query, const FingerprintTable& keys,
                            std::span<const std::uint8_t> valid_mask, std::size_t k) {
  if (query.rounds != keys.rounds() || query.bits_per_round != keys.bits_per_round()) {
    throw InvalidArgument("top_k_by_hamming: query and key fingerprint shapes differ");
  }
  return top_k_by_hamming(std::span<const std::uint64_t>(query.words), keys, valid_mask, k);
}

TopKResult top_k_by_dot(const Eigen::Ref<const Eigen::VectorXd>& query,
                        const Eigen::Ref<const Eigen::MatrixXd>& keys,
                        std::span<const std::uint8_t> valid_mask, std::size_t k,
                        Similarity metric) {
  check_k(k);
  if (keys.cols() != query.size()) {
    throw InvalidArgument("top_k_by_dot: key and query dimensions differ");
  }
  if (valid_mask.size() != static_cast<std::size_t>(keys.rows())) {
    throw InvalidArgument("top_k_by_dot: mask length differs from key count");
  }
  double qnorm = 1.0;
  if (metric == Similarity::kAngular) {
    qnorm = query.norm();
    if (qnorm == 0.0) throw InvalidArgument("top_k_by_dot: angular metric with zero-length query");
  }
  auto better = higher_is_better<double>();
  TopKSelector<double, decltype(better)> sel(k, better);
  for (Eigen::Index i = 0; i < keys.rows(); ++i) {
    if (!valid_mask[static_cast<std::size_t>(i)]) continue;
    double s = keys.row(i).dot(query);
    if (metric == Similarity::kAngular) {
      const double knorm = keys.row(i).norm();
      // A zero key has no direction; it is scored as orthogonal.
      s = knorm == 0.0 ? 0.0 : s / (qnorm * knorm);
    }
    sel.offer(s, static_cast<std::size_t>(i));
  }
  return sel.finish();
}

TopKResult category_hard_search(std::int64_t target_category,
                                std::span<const std::int64_t> behavior_categories,
                                std::span<const std::uint8_t> valid_mask, std::size_t k) {
  check_k(k);
  if (valid_mask.size() != behavior_categories.size()) {
    throw InvalidArgument("category_hard_search: mask length differs from sequence length");
  }
  const auto n = static_cast<double>(behavior_categories.size());
  auto better = higher_is_better<double>();
  TopKSelector<double, decltype(better)> sel(k, better);
  for (std::size_t i = 0; i < behavior_categories.size(); ++i) {
    if (!valid_mask[i]) continue;
    const double match = behavior_categories[i] == target_category ? 1.0 : 0.0;
    sel.offer(match * n + static_cast<double>(i), i);
  }
  return sel.finish();
}

double recall_at_k(const TopKResult& approx, const TopKResult& exact) {
  if (exact.empty()) throw InvalidArgument("recall_at_k: exact result is empty");
  const std::unordered_set<std::size_t> truth(exact.indices.begin(), exact.indices.end());
  std::size_t hit = 0;
  for (const auto i : approx.indices) hit += truth.count(i);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace eta

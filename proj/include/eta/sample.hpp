#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace eta {

/// One past interaction inside a behavior sequence. Id 0 is padding.
struct Behavior {
  std::int64_t item = 0;
  std::int64_t category = 0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Behavior&, const Behavior&) = default;
};

/// One impression: who, when, which target, the user's recent and long
/// histories (ascending by time, all strictly before `timestamp`) and the
/// click label.
struct Sample {
  std::int64_t user = 0;
  std::int64_t context = 0;
  std::int64_t target_item = 0;
  std::int64_t target_category = 0;
  std::int64_t timestamp = 0;
  std::vector<Behavior> short_seq;
  std::vector<Behavior> long_seq;
  int label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Dense id ranges: valid ids are 1..n for each field, 0 is reserved.
struct Vocab {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t categories = 0;
  std::size_t contexts = 0;

  friend bool operator==(const Vocab&, const Vocab&) = default;
};

}  // namespace eta

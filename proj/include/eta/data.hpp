#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "eta/model.hpp"
#include "eta/sample.hpp"

namespace eta {

enum class BehaviorType { kClick, kFavorite, kCart, kPurchase };

/// "pv", "fav", "cart", "buy".
std::string_view behavior_type_name(BehaviorType t);

struct BehaviorEvent {
  std::int64_t user = 0;
  std::int64_t item = 0;
  std::int64_t category = 0;
  BehaviorType type = BehaviorType::kClick;
  std::int64_t timestamp = 0;

  friend bool operator==(const BehaviorEvent&, const BehaviorEvent&) = default;
};

/// Events grouped by user, each group ascending by timestamp (stable for
/// equal timestamps).
struct BehaviorLog {
  std::map<std::int64_t, std::vector<BehaviorEvent>> users;
  std::size_t rows = 0;       ///< non-empty lines read
  std::size_t malformed = 0;  ///< rows skipped as unparsable
  std::size_t first_malformed_line = 0;

  std::size_t event_count() const;
};

/// Groups and sorts a flat event list.
BehaviorLog group_events(std::vector<BehaviorEvent> events);

/// Reads user,item,category,type,timestamp lines. A leading header line is
/// tolerated. Throws IoError if unreadable and FormatError naming the first
/// bad line when more than 1% of rows are malformed.
BehaviorLog load_behavior_log(const std::filesystem::path& path);
BehaviorLog parse_behavior_log(std::istream& in);

void write_behavior_log(const BehaviorLog& log, const std::filesystem::path& path);

/// Dense id i maps back to raw id raw[i - 1].
struct IdMap {
  std::vector<std::int64_t> users, items, categories;
};

struct DenseLog {
  BehaviorLog log;  ///< same events with dense ids
  IdMap ids;
  Vocab vocab;      ///< contexts fixed at 24 (hour of day)
  std::vector<std::int64_t> item_category;  ///< dense item -> dense category, entry 0 unused
};

/// Remaps ids to 1..n in ascending raw-id order. An item seen under several
/// categories keeps the category of its latest event.
DenseLog remap_ids(const BehaviorLog& log);

/// Dense category -> dense items, ascending. Entry 0 is empty.
using CategoryIndex = std::vector<std::vector<std::int64_t>>;
CategoryIndex build_category_index(const std::vector<std::int64_t>& item_category, std::size_t categories);

inline constexpr std::size_t kContexts = 24;
/// Hour of day (UTC) plus one.
std::int64_t context_of(std::int64_t timestamp);

struct SampleStats {
  std::size_t users_skipped = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t fallback_negatives = 0;  ///< drawn from the global pool
  std::size_t missing_negatives = 0;   ///< no eligible item anywhere
};

struct SampleSets {
  std::vector<Sample> train, valid, test;
  SampleStats stats;
};

/// One impression per user: the last event is the positive target, the
/// events strictly before it form the histories. Negatives share the
/// positive's timestamp and histories and come from its category, excluding
/// every item in the user's log. Splits 80/10/10 by target timestamp.
SampleSets build_samples(const BehaviorLog& dense_log, std::size_t short_len, std::size_t long_len,
                         std::size_t negatives_per_positive, const CategoryIndex& category_index,
                         std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n_users = 2000;
  std::size_t n_items = 10000;
  std::size_t n_categories = 100;
  std::size_t events_per_user = 400;
  std::size_t interest_categories_per_user = 3;
  std::size_t long_term_gap_days = 30;
  double noise_rate = 0.1;
  std::uint64_t seed = 1;
  std::size_t history_days = 365;
  /// Items per interest category that the user keeps coming back to.
  std::size_t favorites_per_category = 4;
  /// Share of early in-interest events that hit a favorite.
  double favorite_rate = 0.5;

  void validate() const;
};

struct SyntheticData {
  BehaviorLog log;
  /// user -> planted interest categories, ascending.
  std::map<std::int64_t, std::vector<std::int64_t>> interests;
};

/// Items belong to categories round-robin. Events older than the gap favor
/// the user's interest categories; recent events are mostly random. The last
/// event is a return to one of the user's long-term favorites.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Drops the oldest behaviors so both sequences fit the given capacities.
Sample trim_sample(const Sample& s, std::size_t short_len, std::size_t long_len);

void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& path);
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(const std::vector<Sample>& samples, std::ostream& out);
std::vector<Sample> read_samples(std::istream& in);

/// A dataset directory: train/valid/test.samples, items.tsv, idmap.tsv and
/// meta.cfg.
void write_dataset(const DatasetSplits& data, const IdMap& ids, const SampleStats& stats,
                   const std::filesystem::path& dir);
DatasetSplits read_dataset(const std::filesystem::path& dir);

/// Log -> dense ids -> samples, packaged as splits.
struct BuiltDataset {
  DatasetSplits splits;
  IdMap ids;
  SampleStats stats;
};
BuiltDataset build_dataset(const BehaviorLog& raw, std::size_t short_len, std::size_t long_len,
                           std::size_t negatives_per_positive, std::uint64_t seed);

}  // namespace eta

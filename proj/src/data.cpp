#include "eta/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "eta/error.hpp"
#include "eta/rng.hpp"

namespace eta {

namespace {

constexpr std::string_view kSamplesHeader = "ETA-SAMPLES v1";
constexpr std::int64_t kSyntheticEpoch = 1'500'000'000;
constexpr std::int64_t kDay = 86400;

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, std::int64_t& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::int64_t parse_field(std::string_view s, const std::string& where) {
  std::int64_t v = 0;
  if (!parse_int(s, v)) throw FormatError(where + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

bool parse_type(std::string_view s, BehaviorType& out) {
  s = trim(s);
  if (s == "pv") out = BehaviorType::kClick;
  else if (s == "fav") out = BehaviorType::kFavorite;
  else if (s == "cart") out = BehaviorType::kCart;
  else if (s == "buy") out = BehaviorType::kPurchase;
  else return false;
  return true;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::int64_t> dense_order(const std::set<std::int64_t>& raw) {
  return {raw.begin(), raw.end()};
}

std::unordered_map<std::int64_t, std::int64_t> inverse(const std::vector<std::int64_t>& raw) {
  std::unordered_map<std::int64_t, std::int64_t> m;
  m.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) m.emplace(raw[i], static_cast<std::int64_t>(i + 1));
  return m;
}

void write_sequence(std::ostream& out, const std::vector<Behavior>& seq) {
  if (seq.empty()) {
    out << '-';
    return;
  }
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out << ' ';
    out << seq[i].item << ':' << seq[i].category << ':' << seq[i].timestamp;
  }
}

std::vector<Behavior> parse_sequence(std::string_view field, const std::string& where) {
  std::vector<Behavior> seq;
  field = trim(field);
  if (field == "-" || field.empty()) return seq;
  for (auto tok : split(field, ' ')) {
    if (tok.empty()) continue;
    const auto parts = split(tok, ':');
    if (parts.size() != 3) throw FormatError(where + ": bad behavior '" + std::string(tok) + "'");
    seq.push_back({parse_field(parts[0], where), parse_field(parts[1], where), parse_field(parts[2], where)});
  }
  return seq;
}

std::vector<Behavior> window(const std::vector<BehaviorEvent>& events, std::size_t end, std::size_t len) {
  const std::size_t begin = end > len ? end - len : 0;
  std::vector<Behavior> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back({events[i].item, events[i].category, events[i].timestamp});
  return out;
}

}  // namespace

std::string_view behavior_type_name(BehaviorType t) {
  switch (t) {
    case BehaviorType::kClick: return "pv";
    case BehaviorType::kFavorite: return "fav";
    case BehaviorType::kCart: return "cart";
    case BehaviorType::kPurchase: return "buy";
  }
  return "pv";
}

std::size_t BehaviorLog::event_count() const {
  std::size_t n = 0;
  for (const auto& [_, ev] : users) n += ev.size();
  return n;
}

BehaviorLog group_events(std::vector<BehaviorEvent> events) {
  BehaviorLog log;
  log.rows = events.size();
  for (auto& e : events) log.users[e.user].push_back(e);
  for (auto& [_, ev] : log.users) {
    std::stable_sort(ev.begin(), ev.end(),
                     [](const BehaviorEvent& a, const BehaviorEvent& b) { return a.timestamp < b.timestamp; });
  }
  return log;
}

BehaviorLog parse_behavior_log(std::istream& in) {
  std::vector<BehaviorEvent> events;
  std::size_t rows = 0, malformed = 0, first_bad = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view sv = trim(line);
    if (sv.empty()) continue;
    if (line_no == 1 && sv.starts_with("user")) continue;
    ++rows;
    const auto f = split(sv, ',');
    BehaviorEvent e;
    const bool ok = f.size() == 5 && parse_int(f[0], e.user) && parse_int(f[1], e.item) &&
                    parse_int(f[2], e.category) && parse_type(f[3], e.type) &&
                    parse_int(f[4], e.timestamp) && e.user >= 1 && e.item >= 1 && e.category >= 1 &&
                    e.timestamp > 0;
    if (!ok) {
      if (malformed++ == 0) first_bad = line_no;
      continue;
    }
    events.push_back(e);
  }
  if (in.bad()) throw IoError("read error in behavior log");
  if (malformed * 100 > rows) {
    throw FormatError("behavior log: " + std::to_string(malformed) + " of " + std::to_string(rows) +
                      " rows malformed; first at line " + std::to_string(first_bad));
  }
  BehaviorLog log = group_events(std::move(events));
  log.rows = rows;
  log.malformed = malformed;
  log.first_malformed_line = first_bad;
  return log;
}

BehaviorLog load_behavior_log(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_behavior_log(in);
}

void write_behavior_log(const BehaviorLog& log, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& [_, ev] : log.users) {
    for (const auto& e : ev) {
      out << e.user << ',' << e.item << ',' << e.category << ',' << behavior_type_name(e.type) << ','
          << e.timestamp << '\n';
    }
  }
  finish_write(out, path);
}

DenseLog remap_ids(const BehaviorLog& log) {
  std::set<std::int64_t> users, items, cats;
  for (const auto& [u, ev] : log.users) {
    users.insert(u);
    for (const auto& e : ev) {
      items.insert(e.item);
      cats.insert(e.category);
    }
  }
  DenseLog out;
  out.ids = {dense_order(users), dense_order(items), dense_order(cats)};
  const auto um = inverse(out.ids.users), im = inverse(out.ids.items), cm = inverse(out.ids.categories);
  out.vocab = {users.size(), items.size(), cats.size(), kContexts};
  out.item_category.assign(items.size() + 1, 0);
  std::vector<std::int64_t> latest(items.size() + 1, std::numeric_limits<std::int64_t>::min());
  out.log.rows = log.rows;
  out.log.malformed = log.malformed;
  out.log.first_malformed_line = log.first_malformed_line;
  for (const auto& [u, ev] : log.users) {
    auto& dst = out.log.users[um.at(u)];
    dst.reserve(ev.size());
    for (const auto& e : ev) {
      BehaviorEvent d = e;
      d.user = um.at(e.user);
      d.item = im.at(e.item);
      d.category = cm.at(e.category);
      const auto idx = static_cast<std::size_t>(d.item);
      if (e.timestamp >= latest[idx]) {
        latest[idx] = e.timestamp;
        out.item_category[idx] = d.category;
      }
      dst.push_back(d);
    }
  }
  // Histories carry the item's canonical category so that on-the-fly and
  // per-item fingerprints agree.
  for (auto& [_, ev] : out.log.users)
    for (auto& e : ev) e.category = out.item_category[static_cast<std::size_t>(e.item)];
  return out;
}

CategoryIndex build_category_index(const std::vector<std::int64_t>& item_category, std::size_t categories) {
  CategoryIndex index(categories + 1);
  for (std::size_t i = 1; i < item_category.size(); ++i) {
    const auto c = item_category[i];
    if (c < 1 || static_cast<std::size_t>(c) > categories) {
      throw InvalidArgument("category index: item " + std::to_string(i) + " has category out of range");
    }
    index[static_cast<std::size_t>(c)].push_back(static_cast<std::int64_t>(i));
  }
  return index;
}

std::int64_t context_of(std::int64_t timestamp) {
  const std::int64_t sec = ((timestamp % kDay) + kDay) % kDay;
  return sec / 3600 + 1;
}

SampleSets build_samples(const BehaviorLog& log, std::size_t short_len, std::size_t long_len,
                         std::size_t negatives_per_positive, const CategoryIndex& category_index,
                         std::uint64_t seed) {
  if (short_len == 0 || long_len == 0) throw InvalidArgument("build_samples: capacities must be >= 1");
  struct Impression {
    std::int64_t timestamp;
    std::int64_t user;
    std::vector<Sample> samples;
  };
  std::size_t all_items = 0;
  for (const auto& items : category_index) all_items += items.size();

  SampleSets out;
  std::vector<Impression> impressions;
  Rng rng(seed);
  for (const auto& [user, ev] : log.users) {
    if (ev.size() < 2) {
      ++out.stats.users_skipped;
      continue;
    }
    const BehaviorEvent& target = ev.back();
    std::size_t end = ev.size() - 1;
    while (end > 0 && ev[end - 1].timestamp >= target.timestamp) --end;
    if (end == 0) {
      ++out.stats.users_skipped;
      continue;
    }
    Sample pos;
    pos.user = user;
    pos.context = context_of(target.timestamp);
    pos.target_item = target.item;
    pos.target_category = target.category;
    pos.timestamp = target.timestamp;
    pos.short_seq = window(ev, end, short_len);
    pos.long_seq = window(ev, end, long_len);
    pos.label = 1;

    Impression imp{target.timestamp, user, {pos}};
    ++out.stats.positives;
    if (negatives_per_positive > 0) {
      std::unordered_set<std::int64_t> seen;
      for (const auto& e : ev) seen.insert(e.item);
      const auto cat = static_cast<std::size_t>(target.category);
      std::vector<std::int64_t> pool;
      if (cat < category_index.size()) {
        for (auto it : category_index[cat])
          if (!seen.contains(it)) pool.push_back(it);
      }
      bool fallback = false;
      if (pool.empty()) {
        fallback = true;
        pool.reserve(all_items);
        for (const auto& items : category_index)
          for (auto it : items)
            if (!seen.contains(it)) pool.push_back(it);
      }
      for (std::size_t n = 0; n < negatives_per_positive; ++n) {
        if (pool.empty()) {
          ++out.stats.missing_negatives;
          continue;
        }
        Sample neg = pos;
        neg.target_item = pool[rng.below(pool.size())];
        if (fallback) {
          for (std::size_t c = 1; c < category_index.size(); ++c) {
            const auto& items = category_index[c];
            if (std::binary_search(items.begin(), items.end(), neg.target_item)) {
              neg.target_category = static_cast<std::int64_t>(c);
              break;
            }
          }
          ++out.stats.fallback_negatives;
        }
        neg.label = 0;
        imp.samples.push_back(std::move(neg));
        ++out.stats.negatives;
      }
    }
    impressions.push_back(std::move(imp));
  }

  std::stable_sort(impressions.begin(), impressions.end(), [](const Impression& a, const Impression& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.user < b.user;
  });
  const std::size_t n = impressions.size();
  const std::size_t train_end = n * 8 / 10;
  const std::size_t valid_end = n * 9 / 10;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < train_end ? out.train : (i < valid_end ? out.valid : out.test);
    for (auto& s : impressions[i].samples) dst.push_back(std::move(s));
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_users == 0 || n_items == 0 || n_categories == 0 || events_per_user == 0 ||
      interest_categories_per_user == 0 || history_days == 0) {
    throw InvalidArgument("synthetic spec: counts must be >= 1");
  }
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0) || !(favorite_rate >= 0.0 && favorite_rate <= 1.0)) {
    throw InvalidArgument("synthetic spec: rates must lie in [0, 1]");
  }
  if (interest_categories_per_user > n_categories) {
    throw InvalidArgument("synthetic spec: more interest categories than categories");
  }
  if (n_items < n_categories) throw InvalidArgument("synthetic spec: need at least one item per category");
  if (long_term_gap_days >= history_days) throw InvalidArgument("synthetic spec: gap must be shorter than the history");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto n_cat = spec.n_categories;
  CategoryIndex by_cat(n_cat + 1);
  for (std::size_t i = 1; i <= spec.n_items; ++i) by_cat[(i - 1) % n_cat + 1].push_back(static_cast<std::int64_t>(i));
  auto category_of = [&](std::int64_t item) { return static_cast<std::int64_t>((item - 1) % static_cast<std::int64_t>(n_cat) + 1); };

  SyntheticData out;
  std::vector<BehaviorEvent> events;
  events.reserve(spec.n_users * spec.events_per_user);
  const std::int64_t history = static_cast<std::int64_t>(spec.history_days) * kDay;
  const std::int64_t gap = static_cast<std::int64_t>(spec.long_term_gap_days) * kDay;

  for (std::size_t u = 1; u <= spec.n_users; ++u) {
    Rng rng(spec.seed, u);
    const auto user = static_cast<std::int64_t>(u);

    std::vector<std::int64_t> cats(n_cat);
    for (std::size_t c = 0; c < n_cat; ++c) cats[c] = static_cast<std::int64_t>(c + 1);
    for (std::size_t i = 0; i < spec.interest_categories_per_user; ++i) {
      std::swap(cats[i], cats[i + rng.below(n_cat - i)]);
    }
    std::vector<std::int64_t> interests(cats.begin(), cats.begin() + static_cast<std::ptrdiff_t>(spec.interest_categories_per_user));
    std::sort(interests.begin(), interests.end());

    std::vector<std::vector<std::int64_t>> favorites;
    for (auto c : interests) {
      auto items = by_cat[static_cast<std::size_t>(c)];
      const std::size_t nf = std::min(spec.favorites_per_category, items.size());
      for (std::size_t i = 0; i < nf; ++i) std::swap(items[i], items[i + rng.below(items.size() - i)]);
      items.resize(nf);
      favorites.push_back(std::move(items));
    }

    // Impression times spread over the last week so the chronological split
    // has distinct timestamps to cut on.
    const std::int64_t end = kSyntheticEpoch + history - static_cast<std::int64_t>(rng.below(7 * kDay));
    const std::int64_t start = end - history;
    const std::int64_t recent_from = end - gap;

    auto random_item = [&](std::int64_t cat) {
      const auto& items = by_cat[static_cast<std::size_t>(cat)];
      return items[rng.below(items.size())];
    };
    auto random_type = [&] {
      const double r = rng.uniform();
      return r < 0.9 ? BehaviorType::kClick : r < 0.95 ? BehaviorType::kCart : r < 0.98 ? BehaviorType::kFavorite : BehaviorType::kPurchase;
    };

    std::vector<std::int64_t> times(spec.events_per_user - 1);
    for (auto& t : times) t = start + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(end - start)));
    std::sort(times.begin(), times.end());
    for (auto t : times) {
      std::int64_t item;
      const bool early = t < recent_from;
      const bool in_interest = early ? !rng.bernoulli(spec.noise_rate) : rng.bernoulli(spec.noise_rate);
      if (in_interest) {
        const std::size_t which = rng.below(interests.size());
        const auto& fav = favorites[which];
        if (early && !fav.empty() && rng.bernoulli(spec.favorite_rate)) {
          item = fav[rng.below(fav.size())];
        } else {
          item = random_item(interests[which]);
        }
      } else {
        item = random_item(static_cast<std::int64_t>(rng.below(n_cat) + 1));
      }
      events.push_back({user, item, category_of(item), random_type(), t});
    }
    const std::size_t which = rng.below(interests.size());
    const auto& fav = favorites[which];
    const std::int64_t target = fav.empty() ? random_item(interests[which]) : fav[rng.below(fav.size())];
    events.push_back({user, target, category_of(target), BehaviorType::kClick, end});
    out.interests.emplace(user, std::move(interests));
  }
  out.log = group_events(std::move(events));
  return out;
}

Sample trim_sample(const Sample& s, std::size_t short_len, std::size_t long_len) {
  Sample t = s;
  if (t.short_seq.size() > short_len) t.short_seq.erase(t.short_seq.begin(), t.short_seq.end() - static_cast<std::ptrdiff_t>(short_len));
  if (t.long_seq.size() > long_len) t.long_seq.erase(t.long_seq.begin(), t.long_seq.end() - static_cast<std::ptrdiff_t>(long_len));
  return t;
}

void write_samples(const std::vector<Sample>& samples, std::ostream& out) {
  out << kSamplesHeader << '\n';
  for (const auto& s : samples) {
    out << s.user << '\t' << s.context << '\t' << s.target_item << '\t' << s.target_category << '\t'
        << s.timestamp << '\t' << s.label << '\t';
    write_sequence(out, s.short_seq);
    out << '\t';
    write_sequence(out, s.long_seq);
    out << '\n';
  }
}

std::vector<Sample> read_samples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kSamplesHeader) {
    throw FormatError("sample file: line 1: expected header '" + std::string(kSamplesHeader) + "'");
  }
  std::vector<Sample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = "sample file: line " + std::to_string(line_no);
    const auto f = split(trim(line), '\t');
    if (f.size() != 8) throw FormatError(where + ": expected 8 tab-separated fields");
    Sample s;
    s.user = parse_field(f[0], where);
    s.context = parse_field(f[1], where);
    s.target_item = parse_field(f[2], where);
    s.target_category = parse_field(f[3], where);
    s.timestamp = parse_field(f[4], where);
    const auto label = parse_field(f[5], where);
    if (label != 0 && label != 1) throw FormatError(where + ": label must be 0 or 1");
    s.label = static_cast<int>(label);
    s.short_seq = parse_sequence(f[6], where);
    s.long_seq = parse_sequence(f[7], where);
    out.push_back(std::move(s));
  }
  if (in.bad()) throw IoError("read error in sample file");
  return out;
}

void write_samples(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_samples(samples, out);
  finish_write(out, path);
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_samples(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_dataset(const DatasetSplits& data, const IdMap& ids, const SampleStats& stats,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_samples(data.train, dir / "train.samples");
  write_samples(data.valid, dir / "valid.samples");
  write_samples(data.test, dir / "test.samples");
  {
    const auto path = dir / "items.tsv";
    auto out = open_out(path);
    out << "item\tcategory\n";
    for (std::size_t i = 1; i < data.item_category.size(); ++i) out << i << '\t' << data.item_category[i] << '\n';
    finish_write(out, path);
  }
  {
    const auto path = dir / "idmap.tsv";
    auto out = open_out(path);
    out << "kind\tdense\traw\n";
    auto dump = [&](const char* kind, const std::vector<std::int64_t>& raw) {
      for (std::size_t i = 0; i < raw.size(); ++i) out << kind << '\t' << i + 1 << '\t' << raw[i] << '\n';
    };
    dump("user", ids.users);
    dump("item", ids.items);
    dump("category", ids.categories);
    finish_write(out, path);
  }
  {
    const auto path = dir / "meta.cfg";
    auto out = open_out(path);
    out << "[vocab]\n"
        << "users = " << data.vocab.users << '\n'
        << "items = " << data.vocab.items << '\n'
        << "categories = " << data.vocab.categories << '\n'
        << "contexts = " << data.vocab.contexts << '\n'
        << "\n[stats]\n"
        << "train = " << data.train.size() << '\n'
        << "valid = " << data.valid.size() << '\n'
        << "test = " << data.test.size() << '\n'
        << "users_skipped = " << stats.users_skipped << '\n'
        << "positives = " << stats.positives << '\n'
        << "negatives = " << stats.negatives << '\n'
        << "fallback_negatives = " << stats.fallback_negatives << '\n'
        << "missing_negatives = " << stats.missing_negatives << '\n';
    finish_write(out, path);
  }
}

DatasetSplits read_dataset(const std::filesystem::path& dir) {
  DatasetSplits data;
  {
    const auto path = dir / "meta.cfg";
    auto in = open_in(path);
    std::string line;
    std::size_t line_no = 0;
    bool in_vocab = false;
    while (std::getline(in, line)) {
      ++line_no;
      const auto sv = trim(line);
      if (sv.empty() || sv.front() == '#') continue;
      if (sv.front() == '[') {
        in_vocab = sv == "[vocab]";
        continue;
      }
      if (!in_vocab) continue;
      const auto eq = sv.find('=');
      if (eq == std::string_view::npos) throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected key = value");
      const auto key = trim(sv.substr(0, eq));
      const auto v = static_cast<std::size_t>(parse_field(sv.substr(eq + 1), path.string() + ": line " + std::to_string(line_no)));
      if (key == "users") data.vocab.users = v;
      else if (key == "items") data.vocab.items = v;
      else if (key == "categories") data.vocab.categories = v;
      else if (key == "contexts") data.vocab.contexts = v;
    }
  }
  {
    const auto path = dir / "items.tsv";
    auto in = open_in(path);
    data.item_category.assign(data.vocab.items + 1, 0);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line_no == 1 || trim(line).empty()) continue;
      const std::string where = path.string() + ": line " + std::to_string(line_no);
      const auto f = split(trim(line), '\t');
      if (f.size() != 2) throw FormatError(where + ": expected item and category");
      const auto item = parse_field(f[0], where);
      if (item < 1 || static_cast<std::size_t>(item) > data.vocab.items) throw FormatError(where + ": item id out of range");
      data.item_category[static_cast<std::size_t>(item)] = parse_field(f[1], where);
    }
  }
  data.train = read_samples(dir / "train.samples");
  data.valid = read_samples(dir / "valid.samples");
  data.test = read_samples(dir / "test.samples");
  return data;
}

BuiltDataset build_dataset(const BehaviorLog& raw, std::size_t short_len, std::size_t long_len,
                           std::size_t negatives_per_positive, std::uint64_t seed) {
  DenseLog dense = remap_ids(raw);
  const auto index = build_category_index(dense.item_category, dense.vocab.categories);
  SampleSets sets = build_samples(dense.log, short_len, long_len, negatives_per_positive, index, seed);
  BuiltDataset out;
  out.splits.vocab = dense.vocab;
  out.splits.item_category = std::move(dense.item_category);
  out.splits.train = std::move(sets.train);
  out.splits.valid = std::move(sets.valid);
  out.splits.test = std::move(sets.test);
  out.ids = std::move(dense.ids);
  out.stats = sets.stats;
  return out;
}

}  // namespace eta

#include "eta/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "eta/error.hpp"

namespace eta {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InvalidArgument("config: bad value for " + key + ": '" + text + "'");
  }
  return v;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::vector<std::string> kModelKeys = {
    "d", "short_len", "long_len", "k", "heads", "bits", "rounds", "variant", "use_time_buckets",
    "hash_input", "mlp_widths", "seed", "learning_rate", "l2", "batch_size", "epochs",
    "item_init_scale", "category_init_scale", "sparse_embedding_updates"};

void reject_unknown(const ConfigFile& f, const std::string& section, const std::vector<std::string>& known) {
  const auto bad = f.unknown_keys(section, known);
  if (!bad.empty()) throw InvalidArgument("config: unknown key " + bad.front());
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile f;
  f.source_ = source;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = source + ": line " + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw FormatError(where + ": bad section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw FormatError(where + ": empty key");
    f.values_[section.empty() ? key : section + "." + key] = trim(std::string_view(t).substr(eq + 1));
  }
  return f;
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in, path.string());
}

const std::string& ConfigFile::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("config: missing key " + key);
  return it->second;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

std::size_t ConfigFile::get_count(const std::string& key, std::size_t fallback) const {
  return has(key) ? parse_number<std::size_t>(key, raw(key)) : fallback;
}

std::uint64_t ConfigFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_number<std::uint64_t>(key, raw(key)) : fallback;
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidArgument("config: bad value for " + key + ": '" + s + "'");
  return v;
}

bool ConfigFile::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& s = raw(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidArgument("config: bad boolean for " + key + ": '" + s + "'");
}

std::vector<std::size_t> ConfigFile::get_counts(const std::string& key, std::vector<std::size_t> fallback) const {
  if (!has(key)) return fallback;
  std::vector<std::size_t> out;
  for (const auto& item : split_list(raw(key))) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::vector<std::string> ConfigFile::get_strings(const std::string& key, std::vector<std::string> fallback) const {
  return has(key) ? split_list(raw(key)) : fallback;
}

std::vector<std::string> ConfigFile::unknown_keys(const std::string& section,
                                                  const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  const std::string prefix = section + ".";
  for (const auto& [key, _] : values_) {
    if (!key.starts_with(prefix)) continue;
    const std::string name = key.substr(prefix.size());
    if (std::find(known.begin(), known.end(), name) == known.end()) out.push_back(key);
  }
  return out;
}

ModelConfig model_config_from(const ConfigFile& f, ModelConfig c) {
  reject_unknown(f, "model", kModelKeys);
  const std::string s = "model.";
  c.d = f.get_count(s + "d", c.d);
  c.short_len = f.get_count(s + "short_len", c.short_len);
  c.long_len = f.get_count(s + "long_len", c.long_len);
  c.k = f.get_count(s + "k", c.k);
  c.heads = f.get_count(s + "heads", c.heads);
  c.bits = f.get_count(s + "bits", c.bits);
  c.rounds = f.get_count(s + "rounds", c.rounds);
  if (f.has(s + "variant")) c.variant = parse_variant(f.raw(s + "variant"));
  c.use_time_buckets = f.get_bool(s + "use_time_buckets", c.use_time_buckets);
  if (f.has(s + "hash_input")) {
    const auto& h = f.raw(s + "hash_input");
    if (h == "raw") c.hash_input = HashInput::kRaw;
    else if (h == "projected") c.hash_input = HashInput::kProjected;
    else throw InvalidArgument("config: hash_input must be raw or projected");
  }
  c.mlp_widths = f.get_counts(s + "mlp_widths", c.mlp_widths);
  c.seed = f.get_u64(s + "seed", c.seed);
  c.learning_rate = f.get_double(s + "learning_rate", c.learning_rate);
  c.l2 = f.get_double(s + "l2", c.l2);
  c.batch_size = f.get_count(s + "batch_size", c.batch_size);
  c.epochs = f.get_count(s + "epochs", c.epochs);
  c.item_init_scale = f.get_double(s + "item_init_scale", c.item_init_scale);
  c.category_init_scale = f.get_double(s + "category_init_scale", c.category_init_scale);
  c.sparse_embedding_updates = f.get_bool(s + "sparse_embedding_updates", c.sparse_embedding_updates);
  return c;
}

std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  std::string widths;
  for (std::size_t i = 0; i < c.mlp_widths.size(); ++i) {
    if (i) widths += ", ";
    widths += std::to_string(c.mlp_widths[i]);
  }
  os << "[model]\n"
     << "d = " << c.d << '\n'
     << "short_len = " << c.short_len << '\n'
     << "long_len = " << c.long_len << '\n'
     << "k = " << c.k << '\n'
     << "heads = " << c.heads << '\n'
     << "bits = " << c.bits << '\n'
     << "rounds = " << c.rounds << '\n'
     << "variant = " << variant_name(c.variant) << '\n'
     << "use_time_buckets = " << (c.use_time_buckets ? "true" : "false") << '\n'
     << "hash_input = " << (c.hash_input == HashInput::kRaw ? "raw" : "projected") << '\n'
     << "mlp_widths = " << widths << '\n'
     << "seed = " << c.seed << '\n'
     << "learning_rate = " << format_double(c.learning_rate) << '\n'
     << "l2 = " << format_double(c.l2) << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "epochs = " << c.epochs << '\n'
     << "item_init_scale = " << format_double(c.item_init_scale) << '\n'
     << "category_init_scale = " << format_double(c.category_init_scale) << '\n'
     << "sparse_embedding_updates = " << (c.sparse_embedding_updates ? "true" : "false") << '\n';
  return os.str();
}

SyntheticSpec synthetic_spec_from(const ConfigFile& f, SyntheticSpec p) {
  reject_unknown(f, "synthetic",
                 {"n_users", "n_items", "n_categories", "events_per_user", "interest_categories_per_user",
                  "long_term_gap_days", "noise_rate", "seed", "history_days", "favorites_per_category",
                  "favorite_rate"});
  const std::string s = "synthetic.";
  p.n_users = f.get_count(s + "n_users", p.n_users);
  p.n_items = f.get_count(s + "n_items", p.n_items);
  p.n_categories = f.get_count(s + "n_categories", p.n_categories);
  p.events_per_user = f.get_count(s + "events_per_user", p.events_per_user);
  p.interest_categories_per_user = f.get_count(s + "interest_categories_per_user", p.interest_categories_per_user);
  p.long_term_gap_days = f.get_count(s + "long_term_gap_days", p.long_term_gap_days);
  p.noise_rate = f.get_double(s + "noise_rate", p.noise_rate);
  p.seed = f.get_u64(s + "seed", p.seed);
  p.history_days = f.get_count(s + "history_days", p.history_days);
  p.favorites_per_category = f.get_count(s + "favorites_per_category", p.favorites_per_category);
  p.favorite_rate = f.get_double(s + "favorite_rate", p.favorite_rate);
  return p;
}

DataConfig data_config_from(const ConfigFile& f, DataConfig d) {
  reject_unknown(f, "data", {"short_len", "long_len", "negatives_per_positive", "seed"});
  d.short_len = f.get_count("data.short_len", d.short_len);
  d.long_len = f.get_count("data.long_len", d.long_len);
  d.negatives_per_positive = f.get_count("data.negatives_per_positive", d.negatives_per_positive);
  d.seed = f.get_u64("data.seed", d.seed);
  return d;
}

}  // namespace eta

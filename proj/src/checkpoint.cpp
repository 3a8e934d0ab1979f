#include "eta/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "eta/config.hpp"
#include "eta/error.hpp"

namespace eta {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n) {
      throw FormatError("checkpoint: truncated while reading " + std::string(what) + " at byte offset " +
                        std::to_string(pos));
    }
  }
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config, const ModelParams& params) {
  validate_params(params, config);
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kVersion);
  const std::string text = model_config_text(config);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  for (auto n : {params.vocab.users, params.vocab.items, params.vocab.categories, params.vocab.contexts}) {
    w.put(static_cast<std::uint64_t>(n));
  }
  std::uint32_t blocks = 0;
  params.weights.for_each([&](const std::string&, const Eigen::MatrixXd&, bool, bool) { ++blocks; });
  w.put(blocks);
  params.weights.for_each([&](const std::string& name, const Eigen::MatrixXd& m, bool, bool) {
    w.put(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(static_cast<std::uint32_t>(m.rows()));
    w.put(static_cast<std::uint32_t>(m.cols()));
    const Eigen::MatrixXf f = m.cast<float>();
    w.put_bytes(f.data(), sizeof(float) * static_cast<std::size_t>(f.size()));
  });
  w.put(static_cast<std::uint64_t>(params.item_category.size()));
  for (auto c : params.item_category) w.put(static_cast<std::int64_t>(c));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("checkpoint: bad magic at byte offset 0");
  r.pos = 4;
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const auto text_len = r.get<std::uint32_t>("config length");
  const std::string text = r.get_string(text_len, "config text");
  Checkpoint ck;
  try {
    ck.config = model_config_from(ConfigFile::parse(text, "checkpoint config"));
    ck.config.validate();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad config echo: ") + e.what());
  }
  Vocab vocab;
  vocab.users = r.get<std::uint64_t>("vocab");
  vocab.items = r.get<std::uint64_t>("vocab");
  vocab.categories = r.get<std::uint64_t>("vocab");
  vocab.contexts = r.get<std::uint64_t>("vocab");
  if (vocab.items > (std::size_t{1} << 40)) throw FormatError("checkpoint: implausible item count");

  // Allocate the layout the config implies, then fill and check each block.
  ck.params = init_params(ck.config, vocab, std::vector<std::int64_t>(vocab.items + 1, 0));
  std::uint32_t expected = 0;
  ck.params.weights.for_each([&](const std::string&, const Eigen::MatrixXd&, bool, bool) { ++expected; });
  const std::size_t blocks_at = r.pos;
  const auto blocks = r.get<std::uint32_t>("block count");
  if (blocks != expected) {
    throw InvalidArgument("checkpoint: " + std::to_string(blocks) + " blocks at byte offset " +
                          std::to_string(blocks_at) + ", config implies " + std::to_string(expected));
  }
  ck.params.weights.for_each([&](const std::string& name, Eigen::MatrixXd& m, bool, bool) {
    const std::size_t at = r.pos;
    const auto name_len = r.get<std::uint32_t>("block name length");
    const std::string got = r.get_string(name_len, "block name");
    const auto rows = r.get<std::uint32_t>("block rows");
    const auto cols = r.get<std::uint32_t>("block cols");
    if (got != name || rows != m.rows() || cols != m.cols()) {
      throw InvalidArgument("checkpoint: block at byte offset " + std::to_string(at) + " is " + got + " " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", expected " + name + " " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    r.need(n * sizeof(float), "block data");
    Eigen::MatrixXf f(rows, cols);
    std::memcpy(f.data(), bytes.data() + r.pos, n * sizeof(float));
    r.pos += n * sizeof(float);
    m = f.cast<double>();
  });
  const auto n = r.get<std::uint64_t>("item_category count");
  if (n != vocab.items + 1) throw FormatError("checkpoint: item_category count does not match vocabulary");
  for (std::size_t i = 0; i < n; ++i) ck.params.item_category[i] = r.get<std::int64_t>("item_category");
  if (r.pos != bytes.size()) {
    throw FormatError("checkpoint: trailing bytes at byte offset " + std::to_string(r.pos));
  }
  validate_params(ck.params, ck.config);
  return ck;
}

void save_checkpoint(const ModelConfig& config, const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(config, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ModelParams round_trip_f32(const ModelConfig& config, const ModelParams& params) {
  return decode_checkpoint(encode_checkpoint(config, params)).params;
}

void verify_fingerprint_table(const FingerprintTable& table, const ModelParams& params,
                              const ModelConfig& config, std::size_t probes) {
  const auto& fam = params.family;
  if (table.rounds() != fam.rounds() || table.bits_per_round() != fam.bits_per_round()) {
    throw InvalidArgument("fingerprint table shape " + std::to_string(table.rounds()) + "x" +
                          std::to_string(table.bits_per_round()) + " does not match the model's " +
                          std::to_string(fam.rounds()) + "x" + std::to_string(fam.bits_per_round()));
  }
  if (table.size() != params.vocab.items + 1) {
    throw InvalidArgument("fingerprint table has " + std::to_string(table.size()) + " rows, model has " +
                          std::to_string(params.vocab.items + 1) + " (items + padding)");
  }
  if (config.hash_input != HashInput::kRaw) {
    throw InvalidArgument("precomputed fingerprints require raw-embedding hashing");
  }
  const std::size_t items = params.vocab.items;
  const std::size_t n = std::min(probes, items);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t item = 1 + p * items / n;
    const auto id = static_cast<std::int64_t>(item);
    const Fingerprint fp = simhash(item_vector(params, id, params.item_category[item]), fam);
    const auto row = table.row(item);
    if (!std::equal(row.begin(), row.end(), fp.words.begin())) {
      throw InvalidArgument("fingerprint table is stale: item " + std::to_string(item) +
                            " does not match the checkpoint's embeddings and hash family");
    }
  }
}

}  // namespace eta

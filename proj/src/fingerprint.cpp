#include "eta/fingerprint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "eta/rng.hpp"

namespace eta {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'T', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 4 + 8;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= std::uint64_t{bytes[offset + i]} << (8 * i);
  return v;
}

[[noreturn]] void format_error(std::size_t offset, const std::string& what) {
  throw FormatError("fingerprint table: " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

HashFamily::HashFamily(std::uint64_t seed, std::size_t dim, std::size_t bits_per_round,
                       std::size_t rounds)
    : seed_(seed), dim_(dim), bits_(bits_per_round), rounds_(rounds) {
  if (dim == 0 || bits_per_round == 0 || rounds == 0) {
    throw InvalidArgument("hash family: dim, bits_per_round and rounds must all be >= 1");
  }
  proj_t_.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    Rng rng(seed, r);
    // Draw H_r (d x m) in row-major order of H, store transposed.
    Eigen::MatrixXd ht(static_cast<Eigen::Index>(bits_per_round), static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < ht.cols(); ++j) {
      for (Eigen::Index k = 0; k < ht.rows(); ++k) ht(k, j) = rng.normal();
    }
    proj_t_.push_back(std::move(ht));
  }
}

void HashFamily::set_projection(std::size_t round, const Eigen::MatrixXd& h) {
  if (h.rows() != static_cast<Eigen::Index>(dim_) ||
      h.cols() != static_cast<Eigen::Index>(bits_)) {
    throw InvalidArgument("hash family: projection shape mismatch");
  }
  proj_t_.at(round) = h.transpose();
}

HashFamily new_hash_family(std::uint64_t seed, std::size_t dim, std::size_t bits_per_round,
                           std::size_t rounds) {
  return HashFamily(seed, dim, bits_per_round, rounds);
}

FingerprintTable::FingerprintTable(std::size_t rounds, std::size_t bits_per_round,
                                   std::size_t count)
    : rounds_(rounds), bits_(bits_per_round), stride_(rounds * ((bits_per_round + 63) / 64)) {
  if (rounds == 0 || bits_per_round == 0) {
    throw InvalidArgument("fingerprint table: rounds and bits_per_round must be >= 1");
  }
  words_.assign(count * stride_, 0);
}

void FingerprintTable::check_shape(const Fingerprint& fp) const {
  if (fp.rounds != rounds_ || fp.bits_per_round != bits_ || fp.words.size() != stride_) {
    throw InvalidArgument("fingerprint table: fingerprint shape mismatch");
  }
}

Fingerprint FingerprintTable::at(std::size_t i) const {
  const auto r = row(i);
  return Fingerprint{rounds_, bits_, std::vector<std::uint64_t>(r.begin(), r.end())};
}

void FingerprintTable::set(std::size_t i, const Fingerprint& fp) {
  check_shape(fp);
  std::copy(fp.words.begin(), fp.words.end(), row(i).begin());
}

void FingerprintTable::push_back(const Fingerprint& fp) {
  check_shape(fp);
  words_.insert(words_.end(), fp.words.begin(), fp.words.end());
}

namespace {

// a[r][c] = sum over j of x[r][j] * H(j, k0 + c) for a block of rows and
// projections, summed in increasing j from zero like the scalar rule.
template <std::size_t R, std::size_t C>
void project_block(const double* x, std::size_t d, const double* ht, std::size_t m, std::size_t k0,
                   std::size_t rows, std::size_t cols, double (&a)[R][C]) {
  for (auto& row : a)
    for (auto& v : row) v = 0.0;
  if (rows == R && cols == C) {
    for (std::size_t j = 0; j < d; ++j) {
      const double* h = ht + j * m + k0;
      for (std::size_t r = 0; r < R; ++r) {
        const double xv = x[r * d + j];
        for (std::size_t c = 0; c < C; ++c) a[r][c] += xv * h[c];
      }
    }
    return;
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double* h = ht + j * m + k0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double xv = x[r * d + j];
      for (std::size_t c = 0; c < cols; ++c) a[r][c] += xv * h[c];
    }
  }
}

}  // namespace

void hash_dense(const double* x, std::size_t n, const HashFamily& family, std::uint64_t* out) {
  constexpr std::size_t kRows = 4, kCols = 4;
  const std::size_t m = family.bits_per_round();
  const std::size_t d = family.dim();
  const std::size_t wpr = family.words_per_round();
  const std::size_t stride = family.words();
  std::fill(out, out + n * stride, std::uint64_t{0});
  double a[kRows][kCols];
  for (std::size_t round = 0; round < family.rounds(); ++round) {
    // Column j of the transposed projection holds the m weights of input j.
    const double* ht = family.projection_transposed(round).data();
    for (std::size_t i0 = 0; i0 < n; i0 += kRows) {
      const std::size_t rows = std::min(kRows, n - i0);
      for (std::size_t k0 = 0; k0 < m; k0 += kCols) {
        const std::size_t cols = std::min(kCols, m - k0);
        project_block(x + i0 * d, d, ht, m, k0, rows, cols, a);
        for (std::size_t r = 0; r < rows; ++r) {
          std::uint64_t* w = out + (i0 + r) * stride + round * wpr;
          // Indicator is zero only for a strictly negative projection.
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t k = k0 + c;
            w[k / 64] |= static_cast<std::uint64_t>(!(a[r][c] < 0.0)) << (k % 64);
          }
        }
      }
    }
  }
}

std::size_t hamming(const Fingerprint& a, const Fingerprint& b) {
  if (a.rounds != b.rounds || a.bits_per_round != b.bits_per_round ||
      a.words.size() != b.words.size()) {
    throw InvalidArgument("hamming: fingerprint shapes differ");
  }
  return hamming(std::span<const std::uint64_t>(a.words), std::span<const std::uint64_t>(b.words));
}

std::vector<std::uint8_t> encode_fingerprints(const FingerprintTable& table) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + table.raw().size() * 8);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(table.rounds()));
  put_u32(out, static_cast<std::uint32_t>(table.bits_per_round()));
  put_u64(out, table.size());
  for (const auto w : table.raw()) put_u64(out, w);
  return out;
}

FingerprintTable decode_fingerprints(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) format_error(bytes.size(), "truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) format_error(0, "bad magic");
  const auto version = get_le(bytes, 4, 4);
  if (version != kVersion) format_error(4, "unsupported version " + std::to_string(version));
  const auto rounds = get_le(bytes, 8, 4);
  const auto bits = get_le(bytes, 12, 4);
  if (rounds == 0) format_error(8, "zero rounds");
  if (bits == 0) format_error(12, "zero bits_per_round");
  const auto count = get_le(bytes, 16, 8);
  FingerprintTable table(rounds, bits, 0);
  const std::size_t stride = table.words_per_item();
  const std::size_t body = bytes.size() - kHeaderBytes;
  if (count > body / 8 / stride || body != count * stride * 8) {
    const std::size_t expected = kHeaderBytes + count * stride * 8;
    format_error(std::min(bytes.size(), expected),
                 "body size mismatch (expected " + std::to_string(expected) + " bytes, got " +
                     std::to_string(bytes.size()) + ")");
  }
  table.resize(count);
  auto& words = table.raw();
  const std::uint64_t pad_mask =
      bits % 64 == 0 ? 0 : ~((std::uint64_t{1} << (bits % 64)) - 1);
  const std::size_t wpr = (bits + 63) / 64;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::size_t offset = kHeaderBytes + i * 8;
    words[i] = get_le(bytes, offset, 8);
    if ((i % wpr) == wpr - 1 && (words[i] & pad_mask) != 0) {
      format_error(offset, "non-zero padding bits");
    }
  }
  return table;
}

void serialize_fingerprints(const FingerprintTable& table, const std::filesystem::path& path) {
  const auto bytes = encode_fingerprints(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

FingerprintTable deserialize_fingerprints(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_fingerprints(bytes);
}

}  // namespace eta

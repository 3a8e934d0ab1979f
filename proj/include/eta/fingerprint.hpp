#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eta/error.hpp"

namespace eta {

/// n_r rounds of m-bit SimHash over d-dimensional vectors.
///
/// Round r is a d x m projection matrix with i.i.d. standard normal entries
/// drawn from Rng(seed, r). It is stored transposed (m x d, column-major) so
/// that hashing accumulates one input coordinate at a time into all m
/// projections; every hashing call therefore sums in the same order and the
/// resulting bits are reproducible between on-the-fly and precomputed paths.
class HashFamily {
 public:
  HashFamily() = default;
  HashFamily(std::uint64_t seed, std::size_t dim, std::size_t bits_per_round, std::size_t rounds);

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t bits_per_round() const noexcept { return bits_; }
  std::size_t rounds() const noexcept { return rounds_; }
  std::size_t total_bits() const noexcept { return bits_ * rounds_; }
  std::size_t words_per_round() const noexcept { return (bits_ + 63) / 64; }
  std::size_t words() const noexcept { return words_per_round() * rounds_; }

  /// Projection matrix of round r as d x m (the H_r of the hashing rule).
  Eigen::MatrixXd projection(std::size_t round) const { return proj_t_.at(round).transpose(); }
  const Eigen::MatrixXd& projection_transposed(std::size_t round) const { return proj_t_.at(round); }

  /// Replace the projections (testing hook; shapes must match).
  void set_projection(std::size_t round, const Eigen::MatrixXd& h);

  friend bool operator==(const HashFamily& a, const HashFamily& b) {
    return a.seed_ == b.seed_ && a.dim_ == b.dim_ && a.bits_ == b.bits_ &&
           a.rounds_ == b.rounds_ && a.proj_t_ == b.proj_t_;
  }

 private:
  std::uint64_t seed_ = 0;
  std::size_t dim_ = 0;
  std::size_t bits_ = 0;
  std::size_t rounds_ = 0;
  std::vector<Eigen::MatrixXd> proj_t_;
};

HashFamily new_hash_family(std::uint64_t seed, std::size_t dim, std::size_t bits_per_round,
                           std::size_t rounds);

/// Packed multi-round bit signature. Padding bits past m in the last word of
/// each round are always zero.
struct Fingerprint {
  std::size_t rounds = 0;
  std::size_t bits_per_round = 0;
  std::vector<std::uint64_t> words;

  std::size_t words_per_round() const noexcept { return (bits_per_round + 63) / 64; }
  std::size_t total_bits() const noexcept { return rounds * bits_per_round; }
  bool bit(std::size_t round, std::size_t j) const {
    const auto w = words[round * words_per_round() + j / 64];
    return (w >> (j % 64)) & 1U;
  }

  friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

/// Contiguous table of same-shape fingerprints, one per row.
class FingerprintTable {
 public:
  FingerprintTable() = default;
  FingerprintTable(std::size_t rounds, std::size_t bits_per_round, std::size_t count = 0);

  std::size_t rounds() const noexcept { return rounds_; }
  std::size_t bits_per_round() const noexcept { return bits_; }
  std::size_t words_per_item() const noexcept { return stride_; }
  std::size_t size() const noexcept { return stride_ == 0 ? 0 : words_.size() / stride_; }
  bool empty() const noexcept { return size() == 0; }

  std::span<const std::uint64_t> row(std::size_t i) const {
    return {words_.data() + i * stride_, stride_};
  }
  std::span<std::uint64_t> row(std::size_t i) { return {words_.data() + i * stride_, stride_}; }

  Fingerprint at(std::size_t i) const;
  void set(std::size_t i, const Fingerprint& fp);
  void push_back(const Fingerprint& fp);
  void resize(std::size_t count) { words_.assign(count * stride_, 0); }

  const std::vector<std::uint64_t>& raw() const noexcept { return words_; }
  std::vector<std::uint64_t>& raw() noexcept { return words_; }

  friend bool operator==(const FingerprintTable&, const FingerprintTable&) = default;

 private:
  void check_shape(const Fingerprint& fp) const;

  std::size_t rounds_ = 0;
  std::size_t bits_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Hash n contiguous d-vectors (row-major) into n * family.words() words.
/// Every hashing path ends here and each projection is summed over the
/// input coordinates in order, so on-the-fly and precomputed fingerprints
/// agree bit for bit regardless of batch size.
void hash_dense(const double* x, std::size_t n, const HashFamily& family, std::uint64_t* out);

/// Hash one vector into a caller-provided word buffer of family.words() words.
/// The input must have family.dim() finite entries.
template <class Derived>
void simhash_into(const Eigen::MatrixBase<Derived>& e, const HashFamily& family,
                  std::span<std::uint64_t> out) {
  if (static_cast<std::size_t>(e.size()) != family.dim()) {
    throw InvalidArgument("simhash: vector length does not match hash family dimension");
  }
  if (out.size() != family.words()) {
    throw InvalidArgument("simhash: output buffer has wrong word count");
  }
  const Eigen::VectorXd x = e.template cast<double>();
  if (!x.allFinite()) throw InvalidArgument("simhash: non-finite input entry");
  hash_dense(x.data(), 1, family, out.data());
}

template <class Derived>
Fingerprint simhash(const Eigen::MatrixBase<Derived>& e, const HashFamily& family) {
  Fingerprint fp{family.rounds(), family.bits_per_round(),
                 std::vector<std::uint64_t>(family.words(), 0)};
  simhash_into(e, family, fp.words);
  return fp;
}

/// Hash every row of a matrix into a table.
template <class Derived>
FingerprintTable simhash_rows(const Eigen::MatrixBase<Derived>& rows, const HashFamily& family) {
  if (static_cast<std::size_t>(rows.cols()) != family.dim()) {
    throw InvalidArgument("simhash: vector length does not match hash family dimension");
  }
  // Row-major copy so each row is contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x =
      rows.template cast<double>();
  if (!x.allFinite()) throw InvalidArgument("simhash: non-finite input entry");
  FingerprintTable table(family.rounds(), family.bits_per_round(), static_cast<std::size_t>(x.rows()));
  if (x.rows() > 0) hash_dense(x.data(), static_cast<std::size_t>(x.rows()), family, table.raw().data());
  return table;
}

inline std::size_t hamming(std::span<const std::uint64_t> a,
                           std::span<const std::uint64_t> b) noexcept {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += static_cast<std::size_t>(std::popcount(a[i] ^ b[i]));
  return d;
}

/// Total differing bits over all rounds.
std::size_t hamming(const Fingerprint& a, const Fingerprint& b);

void serialize_fingerprints(const FingerprintTable& table, const std::filesystem::path& path);
FingerprintTable deserialize_fingerprints(const std::filesystem::path& path);

/// Same as above but over an in-memory byte image (used by tests).
std::vector<std::uint8_t> encode_fingerprints(const FingerprintTable& table);
FingerprintTable decode_fingerprints(std::span<const std::uint8_t> bytes);

}  // namespace eta

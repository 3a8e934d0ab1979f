#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "eta/retrieval.hpp"
#include "eta/rng.hpp"
#include "support/oracles.hpp"

namespace {

eta::Fingerprint random_fp(eta::Rng& rng, std::size_t rounds, std::size_t bits) {
  eta::Fingerprint f{rounds, bits, std::vector<std::uint64_t>(rounds * ((bits + 63) / 64))};
  for (auto& w : f.words) w = rng.next();
  if (bits % 64) {
    const std::size_t per = (bits + 63) / 64;
    for (std::size_t r = 0; r < rounds; ++r) f.words[r * per + per - 1] &= (std::uint64_t{1} << (bits % 64)) - 1;
  }
  return f;
}

eta::FingerprintTable table_of(const std::vector<eta::Fingerprint>& fps) {
  eta::FingerprintTable t(fps.front().rounds, fps.front().bits_per_round);
  for (const auto& f : fps) t.push_back(f);
  return t;
}

eta::Fingerprint complement(const eta::Fingerprint& f) {
  eta::Fingerprint c = f;
  for (auto& w : c.words) w = ~w;
  if (f.bits_per_round % 64) {
    const std::size_t per = f.words_per_round();
    for (std::size_t r = 0; r < f.rounds; ++r) c.words[r * per + per - 1] &= (std::uint64_t{1} << (f.bits_per_round % 64)) - 1;
  }
  return c;
}

eta::Mask random_mask(eta::Rng& rng, std::size_t n) {
  eta::Mask m(n);
  for (auto& v : m) v = rng.bernoulli(0.8);
  return m;
}

}  // namespace

TEST(HammingTopK, CopyBeatsComplement) {
  eta::Rng rng(1);
  const auto q = random_fp(rng, 1, 64);
  const auto t = table_of({q, complement(q)});
  const auto r = eta::top_k_by_hamming(q, t, eta::Mask{1, 1}, 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r.indices[0], 0u);
  EXPECT_EQ(r.scores[0], 0.0);
}

TEST(HammingTopK, SaturatesToAllValid) {
  eta::Rng rng(2);
  std::vector<eta::Fingerprint> keys;
  for (int i = 0; i < 10; ++i) keys.push_back(random_fp(rng, 2, 40));
  eta::Mask m(10, 1);
  m[3] = m[7] = 0;
  const auto r = eta::top_k_by_hamming(random_fp(rng, 2, 40), table_of(keys), m, 50);
  auto got = r.sorted_indices();
  EXPECT_EQ(got, (std::vector<std::size_t>{0, 1, 2, 4, 5, 6, 8, 9}));
}

TEST(HammingTopK, MatchesSortOracle) {
  eta::Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 1 + rng.below(256);
    const std::size_t bits = t % 2 ? 128 : 1 + rng.below(20);
    const std::size_t rounds = 1 + rng.below(3);
    std::vector<eta::Fingerprint> keys;
    for (std::size_t i = 0; i < L; ++i) keys.push_back(random_fp(rng, rounds, bits));
    const auto q = random_fp(rng, rounds, bits);
    const auto m = random_mask(rng, L);
    const std::size_t k = 1 + rng.below(16);
    const auto r = eta::top_k_by_hamming(q, table_of(keys), m, k);
    ASSERT_EQ(r.indices, oracle::hamming_topk(q, keys, m, k)) << "instance " << t;
    for (std::size_t i = 0; i < r.size(); ++i)
      EXPECT_EQ(r.scores[i], static_cast<double>(oracle::naive_hamming(q, keys[r.indices[i]])));
  }
}

TEST(HammingTopK, TiesGoToRecentPositions) {
  const eta::Fingerprint q{1, 8, {0}};
  const auto t = table_of({{1, 8, {1}}, {1, 8, {2}}, {1, 8, {4}}, {1, 8, {0xff}}});
  const auto r = eta::top_k_by_hamming(q, t, eta::Mask(4, 1), 2);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{2, 1}));
}

TEST(HammingTopK, PaddingNeverSelected) {
  eta::Rng rng(4);
  std::vector<eta::Fingerprint> keys;
  for (int i = 0; i < 64; ++i) keys.push_back(random_fp(rng, 1, 16));
  const auto q = keys[5];
  eta::Mask m(64, 1);
  m[5] = 0;
  for (std::size_t k : {1, 8, 64}) {
    const auto r = eta::top_k_by_hamming(q, table_of(keys), m, k);
    EXPECT_EQ(std::count(r.indices.begin(), r.indices.end(), 5u), 0);
    EXPECT_EQ(r.size(), std::min<std::size_t>(k, 63));
  }
  const auto none = eta::top_k_by_hamming(q, table_of(keys), eta::Mask(64, 0), 4);
  EXPECT_TRUE(none.empty());
}

TEST(HammingTopK, PermutationMovesIndices) {
  eta::Rng rng(5);
  std::vector<eta::Fingerprint> keys;
  // Distinct distances so the permutation cannot reorder ties.
  const auto q = eta::Fingerprint{1, 32, {0}};
  for (std::uint64_t i = 0; i < 32; ++i) keys.push_back({1, 32, {(std::uint64_t{1} << i) - 1}});
  std::vector<std::size_t> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<eta::Fingerprint> shuffled(32);
  for (std::size_t i = 0; i < 32; ++i) shuffled[perm[i]] = keys[i];
  const auto a = eta::top_k_by_hamming(q, table_of(keys), eta::Mask(32, 1), 8);
  const auto b = eta::top_k_by_hamming(q, table_of(shuffled), eta::Mask(32, 1), 8);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(b.indices[i], perm[a.indices[i]]);
    EXPECT_EQ(b.scores[i], a.scores[i]);
  }
}

TEST(HammingTopK, BadArgumentsRejected) {
  const auto t = table_of({{1, 8, {1}}});
  EXPECT_THROW(eta::top_k_by_hamming(eta::Fingerprint{1, 8, {0}}, t, eta::Mask(1, 1), 0), eta::InvalidArgument);
  EXPECT_THROW(eta::top_k_by_hamming(eta::Fingerprint{1, 16, {0}}, t, eta::Mask(1, 1), 1), eta::InvalidArgument);
  EXPECT_THROW(eta::top_k_by_hamming(eta::Fingerprint{1, 8, {0}}, t, eta::Mask(2, 1), 1), eta::InvalidArgument);
}

TEST(DotTopK, PositiveBeatsNegative) {
  const Eigen::Vector3d q(1, 2, 3);
  Eigen::MatrixXd keys(2, 3);
  keys.row(0) = -q.transpose();
  keys.row(1) = q.transpose();
  const auto r = eta::top_k_by_dot(q, keys, eta::Mask(2, 1), 1);
  EXPECT_EQ(r.indices, std::vector<std::size_t>{1});
  EXPECT_DOUBLE_EQ(r.scores[0], 14.0);
}

TEST(DotTopK, AngularIgnoresKeyScale) {
  eta::Rng rng(6);
  Eigen::MatrixXd keys(40, 8);
  for (Eigen::Index i = 0; i < keys.size(); ++i) keys(i) = rng.normal();
  Eigen::VectorXd q(8);
  for (Eigen::Index i = 0; i < 8; ++i) q(i) = rng.normal();
  const auto a = eta::top_k_by_dot(q, keys, eta::Mask(40, 1), 10, eta::Similarity::kAngular);
  for (Eigen::Index i = 0; i < keys.rows(); ++i) keys.row(i) *= 0.5 + 3.0 * rng.uniform();
  const auto b = eta::top_k_by_dot(q, keys, eta::Mask(40, 1), 10, eta::Similarity::kAngular);
  EXPECT_EQ(a.indices, b.indices);
}

TEST(DotTopK, MatchesSortOracle) {
  eta::Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 1 + rng.below(64);
    Eigen::MatrixXd keys(static_cast<Eigen::Index>(L), 8);
    // Small integer coordinates make exact ties common.
    for (Eigen::Index i = 0; i < keys.size(); ++i) keys(i) = static_cast<double>(rng.below(5)) - 2.0;
    Eigen::VectorXd q(8);
    for (Eigen::Index i = 0; i < 8; ++i) q(i) = static_cast<double>(rng.below(5)) - 2.0;
    if (q.isZero()) q(0) = 1.0;
    const auto m = random_mask(rng, L);
    const std::size_t k = 1 + rng.below(8);
    EXPECT_EQ(eta::top_k_by_dot(q, keys, m, k).indices, oracle::dot_topk(q, keys, m, k, false));
  }
}

TEST(DotTopK, AngularMatchesOracleOnContinuousKeys) {
  eta::Rng rng(8);
  for (int t = 0; t < 100; ++t) {
    Eigen::MatrixXd keys(64, 8);
    for (Eigen::Index i = 0; i < keys.size(); ++i) keys(i) = rng.normal();
    Eigen::VectorXd q(8);
    for (Eigen::Index i = 0; i < 8; ++i) q(i) = rng.normal();
    const auto m = random_mask(rng, 64);
    EXPECT_EQ(eta::top_k_by_dot(q, keys, m, 8, eta::Similarity::kAngular).indices, oracle::dot_topk(q, keys, m, 8, true));
  }
}

TEST(DotTopK, ZeroQueryAngularRejected) {
  const Eigen::MatrixXd keys = Eigen::MatrixXd::Ones(2, 3);
  EXPECT_THROW(eta::top_k_by_dot(Eigen::Vector3d::Zero(), keys, eta::Mask(2, 1), 1, eta::Similarity::kAngular),
               eta::InvalidArgument);
  EXPECT_NO_THROW(eta::top_k_by_dot(Eigen::Vector3d::Zero(), keys, eta::Mask(2, 1), 1));
  EXPECT_THROW(eta::top_k_by_dot(Eigen::Vector2d::Ones(), keys, eta::Mask(2, 1), 1), eta::InvalidArgument);
}

TEST(CategorySearch, AllMatchTakesMostRecent) {
  const std::vector<std::int64_t> cats{3, 3, 3, 3};
  const auto r = eta::category_hard_search(3, cats, eta::Mask(4, 1), 2);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{3, 2}));
}

TEST(CategorySearch, NoMatchBackfillsRecent) {
  const std::vector<std::int64_t> cats{1, 2, 1, 2};
  const auto r = eta::category_hard_search(9, cats, eta::Mask(4, 1), 2);
  EXPECT_EQ(r.indices, (std::vector<std::size_t>{3, 2}));
}

TEST(CategorySearch, MatchesFilterThenSortOracle) {
  eta::Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    const std::size_t L = 1 + rng.below(100);
    std::vector<std::int64_t> cats(L);
    for (auto& c : cats) c = static_cast<std::int64_t>(1 + rng.below(4));
    const auto m = random_mask(rng, L);
    const auto target = static_cast<std::int64_t>(1 + rng.below(4));
    const std::size_t k = 1 + rng.below(10);
    EXPECT_EQ(eta::category_hard_search(target, cats, m, k).indices, oracle::category_oracle(target, cats, m, k));
  }
}

TEST(Recall, Examples) {
  eta::TopKResult a, b;
  a.indices = {1, 2, 3, 4};
  b.indices = {3, 4, 5, 6};
  EXPECT_DOUBLE_EQ(eta::recall_at_k(a, a), 1.0);
  EXPECT_DOUBLE_EQ(eta::recall_at_k(a, b), 0.5);
  eta::TopKResult c;
  c.indices = {7, 8};
  EXPECT_DOUBLE_EQ(eta::recall_at_k(c, b), 0.0);
  EXPECT_THROW(eta::recall_at_k(a, eta::TopKResult{}), eta::InvalidArgument);
}

TEST(Recall, HammingTracksAngularAsBitsGrow) {
  eta::Rng rng(10);
  std::vector<double> mean_recall;
  for (std::size_t bits : {64, 256, 2048}) {
    const auto family = eta::new_hash_family(bits, 32, bits, 1);
    double sum = 0.0;
    for (int t = 0; t < 200; ++t) {
      Eigen::MatrixXd keys(128, 32);
      for (Eigen::Index i = 0; i < keys.size(); ++i) keys(i) = rng.normal();
      Eigen::VectorXd q(32);
      for (Eigen::Index i = 0; i < 32; ++i) q(i) = rng.normal();
      const eta::Mask m(128, 1);
      const auto approx = eta::top_k_by_hamming(eta::simhash(q, family), eta::simhash_rows(keys, family), m, 16);
      sum += eta::recall_at_k(approx, eta::top_k_by_dot(q, keys, m, 16, eta::Similarity::kAngular));
    }
    mean_recall.push_back(sum / 200);
  }
  EXPECT_LT(mean_recall[0], mean_recall[1]);
  EXPECT_LT(mean_recall[1], mean_recall[2]);
}

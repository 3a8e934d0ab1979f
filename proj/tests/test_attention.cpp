#include <gtest/gtest.h>

#include "eta/attention.hpp"
#include "eta/rng.hpp"
#include "support/oracles.hpp"

namespace {

Eigen::MatrixXd normal_matrix(eta::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

eta::AttentionInput<double> random_input(eta::Rng& rng, Eigen::Index L, Eigen::Index d) {
  eta::AttentionInput<double> in;
  in.target = normal_matrix(rng, d, 1);
  in.sequence = normal_matrix(rng, L, d);
  in.valid.assign(static_cast<std::size_t>(L), 1);
  return in;
}

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(SingleHead, SingletonReturnsValueRow) {
  const Eigen::Vector2d q(0.3, -1.0);
  const Eigen::MatrixXd K = Eigen::RowVector2d(2.0, 5.0);
  const Eigen::MatrixXd V = Eigen::RowVector3d(1.5, -2.0, 7.0);
  const Eigen::VectorXd out = eta::single_head_attention<double>(q, K, V, 0.7, eta::Mask{1});
  EXPECT_EQ(out, V.row(0).transpose());
}

TEST(SingleHead, IdenticalKeysAverageValidValues) {
  eta::Rng rng(1);
  const Eigen::MatrixXd K = Eigen::MatrixXd::Ones(4, 2);
  const Eigen::MatrixXd V = normal_matrix(rng, 4, 3);
  const eta::Mask m{1, 0, 1, 1};
  const Eigen::VectorXd out = eta::single_head_attention<double>(Eigen::Vector2d(1, 2), K, V, 1.0, m);
  const Eigen::VectorXd mean = (V.row(0) + V.row(2) + V.row(3)).transpose() / 3.0;
  EXPECT_LT(max_abs_diff(out, mean), 1e-12);
}

TEST(SingleHead, MatchesScalarOracle) {
  eta::Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd q = normal_matrix(rng, 2, 1);
    const Eigen::MatrixXd K = normal_matrix(rng, 3, 2), V = normal_matrix(rng, 3, 4);
    eta::Mask m{1, static_cast<std::uint8_t>(rng.below(2)), 1};
    const Eigen::VectorXd out = eta::single_head_attention<double>(q, K, V, 0.5, m);
    EXPECT_LT(max_abs_diff(out, oracle::scalar_attention(q, K, V, 0.5, m)), 1e-12);
  }
}

TEST(SingleHead, WeightsSumToOne) {
  eta::Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd K = 10.0 * normal_matrix(rng, 20, 4);
    eta::Mask m(20);
    for (auto& v : m) v = rng.bernoulli(0.5);
    m[0] = 1;
    const Eigen::VectorXd w = eta::attention_weights<double>(normal_matrix(rng, 4, 1), K, 1.0, m);
    EXPECT_NEAR(w.sum(), 1.0, 1e-6);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!m[i]) EXPECT_EQ(w(static_cast<Eigen::Index>(i)), 0.0);
  }
}

TEST(SingleHead, NoValidPositionRejected) {
  const Eigen::MatrixXd K = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(eta::single_head_attention<double>(Eigen::Vector2d(1, 1), K, K, 1.0, eta::Mask{0, 0}),
               eta::InvalidArgument);
}

TEST(Mhta, OneHeadIdentityOutputIsSingleHead) {
  eta::Rng rng(4);
  auto p = eta::MHTAParams<double>::random(4, 1, rng);
  p.wo = Eigen::MatrixXd::Identity(4, 4);
  const auto in = random_input(rng, 6, 4);
  const Eigen::VectorXd expect = eta::single_head_attention<double>(
      p.wq[0].transpose() * in.target, in.sequence * p.wk[0], in.sequence * p.wv[0], p.alpha, in.valid);
  EXPECT_LT(max_abs_diff(eta::mhta(in, p), expect), 1e-12);
}

TEST(Mhta, MaskingEqualsDeleting) {
  eta::Rng rng(5);
  const auto p = eta::MHTAParams<double>::random(6, 2, rng);
  auto in = random_input(rng, 5, 6);
  in.valid = {1, 0, 1, 0, 1};
  const auto kept = eta::gather(in, {0, 2, 4});
  EXPECT_LT(max_abs_diff(eta::mhta(in, p), eta::mhta(kept, p)), 1e-12);
}

TEST(Mhta, TwoHeadsMatchCompositionOracle) {
  eta::Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto p = eta::MHTAParams<double>::random(4, 2, rng);
    const auto in = random_input(rng, 5, 4);
    Eigen::VectorXd concat(4);
    for (std::size_t h = 0; h < 2; ++h) {
      concat.segment(static_cast<Eigen::Index>(2 * h), 2) =
          oracle::scalar_attention(p.wq[h].transpose() * in.target, in.sequence * p.wk[h], in.sequence * p.wv[h],
                                   p.alpha, in.valid);
    }
    EXPECT_LT(max_abs_diff(eta::mhta(in, p), p.wo.transpose() * concat), 1e-12);
  }
}

TEST(Mhta, DefaultShapes) {
  eta::Rng rng(7);
  const auto p = eta::MHTAParams<double>::random(8, 2, rng);
  EXPECT_EQ(p.key_dim(), 4);
  EXPECT_EQ(p.value_dim(), 4);
  EXPECT_DOUBLE_EQ(p.alpha, 0.5);
  EXPECT_LE(p.wq[0].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(8.0));
  EXPECT_THROW(eta::MHTAParams<double>::random(7, 2, rng), eta::InvalidArgument);
}

TEST(Mhta, DimensionMismatchRejected) {
  eta::Rng rng(8);
  const auto p = eta::MHTAParams<double>::random(4, 2, rng);
  EXPECT_THROW(eta::mhta(random_input(rng, 3, 6), p), eta::InvalidArgument);
  auto in = random_input(rng, 3, 4);
  in.valid.pop_back();
  EXPECT_THROW(eta::mhta(in, p), eta::InvalidArgument);
}

TEST(EtaAttention, SaturatedSelectionIsFullAttention) {
  eta::Rng rng(9);
  const auto p = eta::MHTAParams<double>::random(8, 2, rng);
  const auto fam = eta::new_hash_family(3, 8, 16, 2);
  auto in = random_input(rng, 12, 8);
  in.valid[4] = 0;
  const auto res = eta::eta_attention(in, p, fam, 12);
  EXPECT_EQ(res.selection.size(), 11u);
  EXPECT_LE(max_abs_diff(res.output, eta::mhta(in, p)), 1e-6);
}

TEST(EtaAttention, EqualsMhtaOnGatheredRows) {
  eta::Rng rng(10);
  const auto p = eta::MHTAParams<double>::random(8, 2, rng);
  const auto fam = eta::new_hash_family(4, 8, 32, 2);
  const auto in = random_input(rng, 40, 8);
  const auto res = eta::eta_attention(in, p, fam, 5);
  EXPECT_EQ(res.output, eta::mhta(eta::gather(in, res.selection.sorted_indices()), p));
}

TEST(EtaAttention, PrecomputedFingerprintsChangeNothing) {
  eta::Rng rng(11);
  const auto p = eta::MHTAParams<double>::random(16, 2, rng);
  const auto fam = eta::new_hash_family(12, 16, 32, 2);
  const auto in = random_input(rng, 256, 16);
  const auto table = eta::simhash_rows(in.sequence, fam);
  const auto live = eta::eta_attention(in, p, fam, 16);
  const auto pre = eta::eta_attention(in, p, fam, 16, &table);
  EXPECT_EQ(live.selection.indices, pre.selection.indices);
  EXPECT_EQ(live.output, pre.output);
  const eta::FingerprintTable wrong(2, 32, 10);
  EXPECT_THROW(eta::eta_attention(in, p, fam, 16, &wrong), eta::InvalidArgument);
  EXPECT_THROW(eta::eta_attention(in, p, fam, 0), eta::InvalidArgument);
}

TEST(EtaAttention, AbsorbedRowsMatchProjectedPath) {
  eta::Rng rng(12);
  const auto p = eta::MHTAParams<double>::random(8, 2, rng);
  const auto in = random_input(rng, 30, 8);
  const std::vector<std::size_t> rows{2, 5, 11, 29};
  const Eigen::MatrixXd seq_t = in.sequence.transpose();
  EXPECT_LT(max_abs_diff(eta::mhta_absorbed_rows<double>(in.target, seq_t, rows, p), eta::mhta(eta::gather(in, rows), p)),
            1e-12);
  EXPECT_THROW(eta::mhta_absorbed_rows<double>(in.target, seq_t, {}, p), eta::InvalidArgument);
}

TEST(AttentionGradients, ZeroUpstreamGivesZero) {
  eta::Rng rng(13);
  const auto p = eta::MHTAParams<double>::random(4, 2, rng);
  const auto in = random_input(rng, 4, 4);
  const auto g = eta::attention_gradients<double>(in, p, Eigen::VectorXd::Zero(4));
  EXPECT_TRUE(g.target.isZero(0.0));
  EXPECT_TRUE(g.sequence.isZero(0.0));
  g.params.for_each_matrix([](const Eigen::MatrixXd& m) { EXPECT_TRUE(m.isZero(0.0)); });
}

TEST(AttentionGradients, MaskedRowsGetNoGradient) {
  eta::Rng rng(14);
  const auto p = eta::MHTAParams<double>::random(4, 2, rng);
  auto in = random_input(rng, 5, 4);
  in.valid = {1, 0, 1, 1, 0};
  const auto g = eta::attention_gradients<double>(in, p, normal_matrix(rng, 4, 1));
  EXPECT_TRUE(g.sequence.row(1).isZero(0.0));
  EXPECT_TRUE(g.sequence.row(4).isZero(0.0));
  EXPECT_FALSE(g.sequence.row(0).isZero(0.0));
}

TEST(AttentionGradients, MatchCentralDifferences) {
  eta::Rng rng(15);
  for (int t = 0; t < 10; ++t) {
    auto p = eta::MHTAParams<double>::random(4, 2, rng);
    auto in = random_input(rng, 4, 4);
    in.valid[static_cast<std::size_t>(rng.below(4))] = static_cast<std::uint8_t>(t % 2);
    const Eigen::VectorXd up = normal_matrix(rng, 4, 1);
    const auto g = eta::attention_gradients<double>(in, p, up);
    const auto f = [&] { return up.dot(eta::mhta(in, p)); };
    double worst = 0.0;
    auto check = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& analytic) {
      const Eigen::MatrixXd numeric = oracle::central_difference(m, f, 1e-4);
      for (Eigen::Index i = 0; i < m.size(); ++i) worst = std::max(worst, oracle::relative_error(analytic(i), numeric(i)));
    };
    for (std::size_t h = 0; h < 2; ++h) {
      check(p.wq[h], g.params.wq[h]);
      check(p.wk[h], g.params.wk[h]);
      check(p.wv[h], g.params.wv[h]);
    }
    check(p.wo, g.params.wo);
    Eigen::MatrixXd target = in.target;
    {
      const Eigen::MatrixXd numeric = oracle::central_difference(
          target, [&] { in.target = target; return f(); }, 1e-4);
      in.target = target;
      for (Eigen::Index i = 0; i < target.size(); ++i) worst = std::max(worst, oracle::relative_error(g.target(i), numeric(i)));
    }
    check(in.sequence, g.sequence);
    EXPECT_LE(worst, 1e-4) << "instance " << t;
  }
}

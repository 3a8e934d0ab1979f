#pragma once

// Random tiny vocabularies and samples, plus the finite-difference gradient
// check shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "eta/model.hpp"
#include "eta/rng.hpp"
#include "support/oracles.hpp"

namespace testdata {

inline eta::Vocab tiny_vocab() { return {5, 12, 4, 24}; }

inline std::vector<std::int64_t> modulo_categories(const eta::Vocab& v) {
  std::vector<std::int64_t> cats(v.items + 1, 0);
  for (std::size_t i = 1; i <= v.items; ++i) cats[i] = static_cast<std::int64_t>((i - 1) % v.categories) + 1;
  return cats;
}

inline std::vector<eta::Behavior> random_behaviors(eta::Rng& rng, const std::vector<std::int64_t>& cats,
                                                   std::size_t n, std::int64_t before_ts) {
  std::vector<eta::Behavior> out;
  std::int64_t ts = before_ts - static_cast<std::int64_t>(n + 1) * 86400 * 3;
  for (std::size_t i = 0; i < n; ++i) {
    ts += 1 + static_cast<std::int64_t>(rng.below(86400 * 3));
    const auto item = static_cast<std::int64_t>(1 + rng.below(cats.size() - 1));
    out.push_back({item, cats[static_cast<std::size_t>(item)], ts});
  }
  return out;
}

/// Sequences of random length up to the config's capacities (possibly empty).
inline std::vector<eta::Sample> random_samples(const eta::ModelConfig& c, const eta::Vocab& v,
                                               const std::vector<std::int64_t>& cats, std::size_t n,
                                               std::uint64_t seed) {
  eta::Rng rng(seed);
  std::vector<eta::Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    eta::Sample s;
    s.user = static_cast<std::int64_t>(1 + rng.below(v.users));
    s.context = static_cast<std::int64_t>(1 + rng.below(v.contexts));
    s.target_item = static_cast<std::int64_t>(1 + rng.below(v.items));
    s.target_category = cats[static_cast<std::size_t>(s.target_item)];
    s.timestamp = 1'600'000'000 + static_cast<std::int64_t>(rng.below(1'000'000));
    s.long_seq = random_behaviors(rng, cats, rng.below(c.long_len + 1), s.timestamp);
    s.short_seq = random_behaviors(rng, cats, rng.below(c.short_len + 1), s.timestamp);
    s.label = static_cast<int>(rng.below(2));
    out.push_back(std::move(s));
  }
  return out;
}

/// Initial weights plus noise so that biases and embeddings are not at
/// special values. Column 0 of embedding tables stays zero.
inline eta::ModelParams jittered_params(const eta::ModelConfig& c, const eta::Vocab& v,
                                        const std::vector<std::int64_t>& cats, std::uint64_t seed) {
  auto p = eta::init_params(c, v, cats);
  eta::Rng rng(seed, 77);
  p.weights.for_each([&](const std::string&, Eigen::MatrixXd& m, bool, bool embedding) {
    for (Eigen::Index j = embedding ? 1 : 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) += rng.uniform(-0.3, 0.3);
  });
  return p;
}

/// Max relative error between analytic gradients and central differences
/// (step 1e-4) of the batch loss, retrieval held at the unperturbed selection.
inline double gradient_check(const eta::ModelConfig& c, std::size_t batch, std::uint64_t seed) {
  const auto vocab = tiny_vocab();
  const auto cats = modulo_categories(vocab);
  const auto samples = random_samples(c, vocab, cats, batch, seed);
  auto params = jittered_params(c, vocab, cats, seed);
  std::vector<eta::TopKResult> fixed;
  for (const auto& s : samples) fixed.push_back(eta::forward_trace(s, params, c).selection);
  const auto analytic = eta::loss_and_gradients(samples, params, c).gradients;

  std::vector<const Eigen::MatrixXd*> grads;
  analytic.for_each([&](const std::string&, const Eigen::MatrixXd& m, bool, bool) { grads.push_back(&m); });
  std::vector<std::pair<Eigen::MatrixXd*, bool>> blocks;
  params.weights.for_each([&](const std::string&, Eigen::MatrixXd& m, bool, bool emb) { blocks.push_back({&m, emb}); });

  const auto loss = [&] { return eta::batch_loss(samples, params, c, fixed); };
  double worst = 0.0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto& m = *blocks[b].first;
    if (m.size() == 0) continue;
    const Eigen::MatrixXd numeric = oracle::central_difference(m, loss, 1e-4);
    // Column 0 of an embedding table is the frozen padding vector.
    for (Eigen::Index j = blocks[b].second ? 1 : 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        worst = std::max(worst, oracle::relative_error((*grads[b])(i, j), numeric(i, j)));
  }
  return worst;
}

}  // namespace testdata

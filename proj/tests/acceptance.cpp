// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 8 and 9 train on the default synthetic dataset
// and dominate the runtime (a few minutes on one core).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "eta/auc.hpp"
#include "eta/bench.hpp"
#include "eta/data.hpp"
#include "eta/fingerprint.hpp"
#include "eta/model.hpp"
#include "eta/retrieval.hpp"
#include "eta/rng.hpp"
#include "support/oracles.hpp"
#include "support/random_samples.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& run) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("criterion %2d %s  %-22s %s  [%.1fs]\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::VectorXd normal_vector(eta::Rng& rng, Eigen::Index d) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
  return v;
}

eta::Fingerprint random_fingerprint(eta::Rng& rng, std::size_t rounds, std::size_t bits) {
  eta::Fingerprint fp{rounds, bits, std::vector<std::uint64_t>(rounds * ((bits + 63) / 64))};
  const std::size_t wpr = fp.words_per_round();
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t w = 0; w < wpr; ++w) {
      std::uint64_t x = rng.next();
      const std::size_t used = std::min<std::size_t>(64, bits - w * 64);
      if (used < 64) x &= (std::uint64_t{1} << used) - 1;
      fp.words[r * wpr + w] = x;
    }
  }
  return fp;
}

Outcome angle_property() {
  const std::size_t d = 64, pairs = 10000;
  const auto family = eta::new_hash_family(2024, d, 256, 2);
  eta::Rng rng(11);
  double err = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const Eigen::VectorXd u = normal_vector(rng, d), v = normal_vector(rng, d);
    const double angle = std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0));
    const double frac = static_cast<double>(eta::hamming(eta::simhash(u, family), eta::simhash(v, family))) / 512.0;
    err += std::abs(frac - angle / std::numbers::pi);
  }
  err /= static_cast<double>(pairs);
  return {err <= 0.02, fmt("mean |h/512 - angle/pi| = %.4f (<= 0.02)", err)};
}

Outcome packed_hamming() {
  eta::Rng rng(12);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < 10000; ++i) {
    const std::size_t rounds = 1 + rng.below(4), bits = 1 + rng.below(200);
    const auto a = random_fingerprint(rng, rounds, bits), b = random_fingerprint(rng, rounds, bits);
    mismatches += eta::hamming(a, b) != oracle::naive_hamming(a, b);
  }
  return {mismatches == 0, fmt("%zu mismatches in 10000 pairs", mismatches)};
}

Outcome retrieval_oracles() {
  eta::Rng rng(13);
  std::size_t bad_hamming = 0, bad_dot = 0;
  for (std::size_t inst = 0; inst < 500; ++inst) {
    const std::size_t L = 1 + rng.below(256), k = 1 + rng.below(std::min<std::size_t>(L + 4, 64));
    eta::Mask valid(L);
    for (auto& v : valid) v = rng.bernoulli(0.85);
    // Few bits and small integer coordinates make ties common.
    const std::size_t bits = 1 + rng.below(24), rounds = 1 + rng.below(2);
    eta::FingerprintTable table(rounds, bits);
    std::vector<eta::Fingerprint> keys;
    for (std::size_t i = 0; i < L; ++i) {
      keys.push_back(random_fingerprint(rng, rounds, bits));
      table.push_back(keys.back());
    }
    const auto q = random_fingerprint(rng, rounds, bits);
    bad_hamming += eta::top_k_by_hamming(q, table, valid, k).indices != oracle::hamming_topk(q, keys, valid, k);

    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(8));
    Eigen::MatrixXd K(static_cast<Eigen::Index>(L), d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < K.rows(); ++i) K(i, j) = static_cast<double>(rng.below(5)) - 2.0;
    Eigen::VectorXd qd(d);
    for (Eigen::Index j = 0; j < d; ++j) qd(j) = static_cast<double>(rng.below(5)) - 2.0;
    bad_dot += eta::top_k_by_dot(qd, K, valid, k).indices != oracle::dot_topk(qd, K, valid, k, false);
  }
  return {bad_hamming == 0 && bad_dot == 0,
          fmt("hamming mismatches %zu/500, dot mismatches %zu/500", bad_hamming, bad_dot)};
}

/// Small synthetic dataset shared by the inference criteria.
const eta::DatasetSplits& small_dataset() {
  static const eta::DatasetSplits splits = [] {
    eta::SyntheticSpec spec;
    spec.n_users = 600;
    spec.n_items = 2000;
    spec.n_categories = 40;
    spec.events_per_user = 150;
    spec.seed = 5;
    auto built = eta::build_dataset(eta::generate_synthetic(spec).log, 16, 64, 1, 3);
    return built.splits;
  }();
  return splits;
}

std::vector<eta::Sample> all_samples(const eta::DatasetSplits& s) {
  std::vector<eta::Sample> out = s.train;
  out.insert(out.end(), s.valid.begin(), s.valid.end());
  out.insert(out.end(), s.test.begin(), s.test.end());
  return out;
}

Outcome saturation() {
  const auto& data = small_dataset();
  auto samples = all_samples(data);
  samples.resize(std::min<std::size_t>(samples.size(), 1000));
  eta::ModelConfig c;
  c.long_len = 64;
  c.k = 64;
  c.variant = eta::Variant::kEta;
  const auto params = eta::init_params(c, data.vocab, data.item_category);
  const auto eta_scores = eta::predict(samples, params, c);
  c.variant = eta::Variant::kFullTa;
  const auto full_scores = eta::predict(samples, params, c);
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) worst = std::max(worst, std::abs(eta_scores[i] - full_scores[i]));
  return {samples.size() == 1000 && worst <= 1e-6, fmt("%zu samples, max |ETA - FULL_TA| = %.3g (<= 1e-6)", samples.size(), worst)};
}

Outcome precomputed_equivalence() {
  const auto& data = small_dataset();
  const auto samples = all_samples(data);
  eta::ModelConfig c;
  c.long_len = 64;
  c.k = 16;
  const auto params = eta::init_params(c, data.vocab, data.item_category);
  const auto table = eta::precompute_item_fingerprints(params, c);
  const auto live = eta::predict(samples, params, c);
  const auto pre = eta::predict(samples, params, c, &table);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) differ += live[i] != pre[i];
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  const double a = eta::auc(live, labels), b = eta::auc(pre, labels);
  return {differ == 0 && a == b, fmt("%zu/%zu scores differ, AUC %.6f vs %.6f", differ, samples.size(), a, b)};
}

Outcome gradient_checks() {
  const std::vector<eta::Variant> variants = {eta::Variant::kEta,     eta::Variant::kFullTa,     eta::Variant::kSimHard,
                                              eta::Variant::kEtaDot,  eta::Variant::kPooling,    eta::Variant::kDinShort,
                                              eta::Variant::kDinLongAvg};
  const std::size_t configs = 21;
  double worst = 0.0;
  std::string worst_at;
  for (std::size_t i = 0; i < configs; ++i) {
    eta::ModelConfig c;
    c.d = 4;
    c.short_len = 4;
    c.long_len = 8;
    c.k = 4;
    c.heads = 2;
    c.bits = 8;
    c.mlp_widths = {6, 4};
    c.l2 = 1e-3;
    c.variant = variants[i % variants.size()];
    c.use_time_buckets = i % 2 == 1;
    c.seed = 100 + i;
    const double err = testdata::gradient_check(c, 4, 300 + i);
    if (err > worst) {
      worst = err;
      worst_at = std::string(eta::variant_name(c.variant)) + " seed " + std::to_string(c.seed);
    }
  }
  return {worst <= 1e-4, fmt("%zu configs, max relative error %.3g (<= 1e-4) at %s", configs, worst, worst_at.c_str())};
}

Outcome auc_oracle() {
  eta::Rng rng(17);
  std::size_t bad = 0;
  for (std::size_t inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.below(1999);
    const std::size_t levels = 1 + rng.below(50);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) / static_cast<double>(levels);
      y[i] = rng.bernoulli(0.4);
    }
    y[0] = 1;
    y[1] = 0;
    bad += eta::auc(s, y) != oracle::pairwise_auc(s, y);
  }
  return {bad == 0, fmt("%zu/100 instances differ from the pairwise count", bad)};
}

struct SyntheticRun {
  std::optional<double> auc;
  double seconds = 0.0;
};

const eta::DatasetSplits& synthetic_dataset() {
  static const eta::DatasetSplits splits =
      eta::build_dataset(eta::generate_synthetic(eta::SyntheticSpec{}).log, 16, 256, 1, 7).splits;
  return splits;
}

eta::ModelConfig synthetic_config(eta::Variant v, std::size_t bits) {
  eta::ModelConfig c;
  c.d = 16;
  c.long_len = 256;
  c.k = 16;
  c.bits = bits;
  c.rounds = 2;
  c.variant = v;
  return c;
}

double test_auc(eta::Variant v, std::size_t bits) {
  const auto& data = synthetic_dataset();
  const auto c = synthetic_config(v, bits);
  const auto result = eta::train(data, c);
  const auto scores = eta::predict(data.test, result.params, c);
  std::vector<int> labels;
  for (const auto& s : data.test) labels.push_back(s.label);
  return eta::auc(scores, labels);
}

double eta_m32 = NAN;

Outcome long_term_interest() {
  const auto t0 = Clock::now();
  const double pooling = test_auc(eta::Variant::kPooling, 32);
  eta_m32 = test_auc(eta::Variant::kEta, 32);
  const double full = test_auc(eta::Variant::kFullTa, 32);
  const double minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
  const bool ok = eta_m32 - pooling >= 0.01 && full - eta_m32 <= 0.005 && minutes <= 15.0;
  return {ok, fmt("POOLING %.4f  ETA %.4f  FULL_TA %.4f  (ETA-POOLING %.4f >= 0.01, FULL_TA-ETA %.4f <= 0.005, %.1f min <= 15)",
                  pooling, eta_m32, full, eta_m32 - pooling, full - eta_m32, minutes)};
}

Outcome bit_sweep() {
  const double m4 = test_auc(eta::Variant::kEta, 4);
  const double m32 = std::isnan(eta_m32) ? test_auc(eta::Variant::kEta, 32) : eta_m32;
  const double m64 = test_auc(eta::Variant::kEta, 64);
  const bool ok = m32 - m4 >= 0.003 && m64 - m32 <= 0.003;
  return {ok, fmt("m=4 %.4f  m=32 %.4f  m=64 %.4f  (m32-m4 %.4f >= 0.003, m64-m32 %.4f <= 0.003)", m4, m32, m64,
                  m32 - m4, m64 - m32)};
}

Outcome latency_trend() {
  eta::ModelConfig c;
  c.d = 32;
  c.long_len = 1024;
  c.k = 48;
  const eta::Vocab vocab{1000, 100000, 1000, eta::kContexts};
  const auto params = eta::init_params(c, vocab, eta::round_robin_categories(vocab));
  const auto requests = eta::simulate_requests(params, 128, c.short_len, c.long_len, 128, 21);
  const eta::TimingOptions opts{100, 1000};
  c.variant = eta::Variant::kEta;
  const auto eta_lat = eta::measure_request_latency(requests, params, c, opts);
  c.variant = eta::Variant::kFullTa;
  const auto full_lat = eta::measure_request_latency(requests, params, c, opts);
  const double ratio = eta_lat.mean_us / full_lat.mean_us;

  c.variant = eta::Variant::kEta;
  const std::vector<std::size_t> lens = {256, 512, 1024, 2048};
  const auto rows = eta::run_scaling(c, vocab, lens, {128}, {20, 200}, 22);
  bool linear = true;
  std::string ratios;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double r = rows[i].stages.retrieval.mean_us / rows[i - 1].stages.retrieval.mean_us;
    linear = linear && r >= 1.5 && r <= 2.8;
    ratios += fmt("%s%.2f", i > 1 ? "," : "", r);
  }
  const double a0 = rows.front().stages.attention.mean_us, a1 = rows.back().stages.attention.mean_us;
  const double spread = std::abs(a1 - a0) / std::min(a0, a1);
  const bool ok = ratio <= 0.75 && linear && spread < 0.25;
  return {ok, fmt("ETA/FULL_TA mean %.0f/%.0f us = %.3f (<= 0.75); retrieval ratios %s in [1.5,2.8]; attention "
                  "L=256 vs 2048 differs %.1f%% (< 25%%)",
                  eta_lat.mean_us, full_lat.mean_us, ratio, ratios.c_str(), 100.0 * spread)};
}

Outcome freshness() {
  const auto& data = small_dataset();
  eta::ModelConfig c;
  c.long_len = 64;
  c.k = 8;
  auto params = eta::init_params(c, data.vocab, data.item_category);
  std::size_t tried = 0, entered = 0;
  for (const auto& s : data.test) {
    if (s.long_seq.size() <= c.k) continue;
    const auto before = eta::forward_trace(s, params, c);
    // A full set of exact matches would legitimately keep a new exact match out.
    if (std::all_of(before.selection.scores.begin(), before.selection.scores.end(), [](double x) { return x == 0.0; }))
      continue;
    const auto chosen = before.selection.sorted_indices();
    std::size_t pos = s.long_seq.size();
    for (std::size_t j = 0; j < s.long_seq.size(); ++j) {
      if (s.long_seq[j].item != s.target_item && !std::binary_search(chosen.begin(), chosen.end(), j)) pos = j;
    }
    if (pos == s.long_seq.size()) continue;
    auto p = params;
    const auto& b = s.long_seq[pos];
    // item + category embedding becomes 0.5 * target vector.
    p.weights.item_emb.col(b.item) = 0.5 * before.target - p.weights.category_emb.col(b.category);
    const auto after = eta::forward_trace(s, p, c);
    const auto& sel = after.selection.indices;
    ++tried;
    entered += std::find(sel.begin(), sel.end(), pos) != sel.end();
    if (tried == 50) break;
  }
  return {tried > 0 && entered == tried, fmt("%zu/%zu perturbed behaviors entered the top-K", entered, tried)};
}

}  // namespace

int main() {
  report(1, "simhash angle", angle_property);
  report(2, "packed hamming", packed_hamming);
  report(3, "retrieval oracles", retrieval_oracles);
  report(4, "saturation K=L", saturation);
  report(5, "precomputed = live", precomputed_equivalence);
  report(6, "gradient check", gradient_checks);
  report(7, "auc oracle", auc_oracle);
  report(8, "long-term interest", long_term_interest);
  report(9, "bit-length sweep", bit_sweep);
  report(10, "latency trend", latency_trend);
  report(11, "fingerprint freshness", freshness);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

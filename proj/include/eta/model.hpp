#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "eta/attention.hpp"
#include "eta/fingerprint.hpp"
#include "eta/retrieval.hpp"
#include "eta/sample.hpp"

namespace eta {

/// How the long behavior sequence is summarized.
enum class Variant {
  kPooling,     ///< mean pooling for both short and long sequences
  kDinShort,    ///< TA on the short sequence, no long sequence
  kDinLongAvg,  ///< TA on the short sequence, mean pooling on the long one
  kEta,         ///< SimHash top-K retrieval then MHTA
  kFullTa,      ///< MHTA over the whole long sequence
  kSimHard,     ///< category hard-search top-K then MHTA
  kEtaDot,      ///< exact dot-product top-K then MHTA
};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t d = 16;
  std::size_t short_len = 16;
  std::size_t long_len = 256;
  std::size_t k = 16;
  std::size_t heads = 2;
  std::size_t bits = 32;   ///< bits per hash round (m)
  std::size_t rounds = 2;  ///< hash rounds (n_r)
  Variant variant = Variant::kEta;
  bool use_time_buckets = false;
  HashInput hash_input = HashInput::kRaw;
  std::vector<std::size_t> mlp_widths{64, 32};
  std::uint64_t seed = 1;
  double learning_rate = 3e-3;
  double l2 = 1e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  /// Half-width of the uniform init of item and category embeddings, in
  /// units of 1/sqrt(d).
  double item_init_scale = 4.0;
  double category_init_scale = 1.0;
  /// Adam touches only the embedding columns present in a batch, with
  /// per-column step counts (dense blocks are unaffected).
  bool sparse_embedding_updates = true;

  void validate() const;
  /// [user, context, target, short, long], 5d wide.
  std::size_t mlp_input_width() const { return 5 * d; }
};

/// Report label: technique/retrieval/L/K, e.g. "TA/HASH/1024/48".
std::string variant_label(const ModelConfig& config);

/// Number of time-difference buckets when time embeddings are enabled.
inline constexpr std::size_t kTimeBuckets = 10;
/// floor(log2(1 + days)) capped at kTimeBuckets - 1.
std::size_t time_bucket(std::int64_t impression_ts, std::int64_t behavior_ts);

/// Every trainable tensor. Embedding tables are d x (n + 1): column i holds
/// id i and column 0 is the frozen all-zero padding embedding. MLP layer l is
/// out x in with a bias column out x 1.
struct Weights {
  Eigen::MatrixXd item_emb, category_emb, user_emb, context_emb, time_emb;
  MHTAParams<double> short_attn, long_attn;
  std::vector<Eigen::MatrixXd> mlp_w, mlp_b;

  /// f(name, matrix, regularized, embedding) over all blocks in a fixed order.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  Weights zeros_like() const;
  std::size_t parameter_count() const;

 private:
  template <class Self, class F>
  static void visit(Self& s, F& f) {
    f("item_emb", s.item_emb, false, true);
    f("category_emb", s.category_emb, false, true);
    f("user_emb", s.user_emb, false, true);
    f("context_emb", s.context_emb, false, true);
    f("time_emb", s.time_emb, false, false);
    auto attn = [&](const char* prefix, auto& p) {
      const std::string base(prefix);
      for (std::size_t h = 0; h < p.wq.size(); ++h) f(base + ".wq" + std::to_string(h), p.wq[h], true, false);
      for (std::size_t h = 0; h < p.wk.size(); ++h) f(base + ".wk" + std::to_string(h), p.wk[h], true, false);
      for (std::size_t h = 0; h < p.wv.size(); ++h) f(base + ".wv" + std::to_string(h), p.wv[h], true, false);
      f(base + ".wo", p.wo, true, false);
    };
    attn("short_attn", s.short_attn);
    attn("long_attn", s.long_attn);
    for (std::size_t l = 0; l < s.mlp_w.size(); ++l) {
      f("mlp.w" + std::to_string(l), s.mlp_w[l], true, false);
      f("mlp.b" + std::to_string(l), s.mlp_b[l], false, false);
    }
  }
};

/// Weights plus the non-trainable pieces needed to score: the SimHash family
/// (fixed at initialization, never resampled), vocabulary sizes, and the
/// item -> category map used to fingerprint items offline.
struct ModelParams {
  Weights weights;
  HashFamily family;
  Vocab vocab;
  std::vector<std::int64_t> item_category;
};

/// `item_category` has vocab.items + 1 entries (entry 0 unused).
ModelParams init_params(const ModelConfig& config, const Vocab& vocab,
                        std::vector<std::int64_t> item_category);

/// Checks shapes against the config and vocabulary, and finiteness.
void validate_params(const ModelParams& params, const ModelConfig& config);

/// Item embedding used for hashing and retrieval: item + category embedding.
Eigen::VectorXd item_vector(const ModelParams& params, std::int64_t item, std::int64_t category);

/// One fingerprint per item id (row i = item i, row 0 = padding) under the
/// model's hash family. Only defined for HashInput::kRaw.
FingerprintTable precompute_item_fingerprints(const ModelParams& params, const ModelConfig& config);

/// Intermediate values of one forward pass.
struct ForwardTrace {
  Eigen::VectorXd target;  ///< target item + category embedding
  AttentionInput<double> short_input;
  AttentionInput<double> long_input;  ///< padded to long_len; may include time embeddings
  Eigen::MatrixXd long_raw;           ///< item + category rows used for retrieval
  TopKResult selection;               ///< retrieval result for restricted variants
  std::vector<std::size_t> attended;  ///< long rows fed to attention, ascending
  Eigen::VectorXd short_repr, long_repr;
  Eigen::VectorXd mlp_input;
  std::vector<Eigen::VectorXd> pre_act, post_act;
  double logit = 0.0;
  double probability = 0.5;
};

/// Full forward with all intermediates. `item_fps`, when given, supplies key
/// fingerprints by item id instead of hashing the long sequence.
/// `fixed_selection`, when given, replaces retrieval for restricted variants
/// (used to evaluate the loss with the selection held fixed).
ForwardTrace forward_trace(const Sample& sample, const ModelParams& params,
                           const ModelConfig& config, const FingerprintTable* item_fps = nullptr,
                           const TopKResult* fixed_selection = nullptr);

/// Click probability in (0, 1).
double forward(const Sample& sample, const ModelParams& params, const ModelConfig& config,
               const FingerprintTable* item_fps = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  Weights gradients;
};

/// Mean binary cross-entropy (computed from logits) plus l2 times the sum of
/// squared MLP and attention projection weights, with analytic gradients.
/// Retrieval is treated as a fixed selection.
LossAndGradients loss_and_gradients(std::span<const Sample> batch, const ModelParams& params,
                                    const ModelConfig& config);

/// Loss only. When `fixed_selections` is non-empty it holds one selection per
/// sample and retrieval is not re-run.
double batch_loss(std::span<const Sample> batch, const ModelParams& params,
                  const ModelConfig& config, std::span<const TopKResult> fixed_selections = {});

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8. With `sparse_embeddings`
/// an embedding column whose gradient is exactly zero is left alone (moments
/// included) and bias correction uses that column's own update count.
class Adam {
 public:
  Adam(const Weights& shape, double learning_rate, bool sparse_embeddings = false);
  void step(Weights& weights, const Weights& gradients);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_;
  bool sparse_;
  std::size_t t_ = 0;
  Weights m_, v_;
  std::vector<std::vector<std::size_t>> column_steps_;
};

struct DatasetSplits {
  Vocab vocab;
  std::vector<std::int64_t> item_category;
  std::vector<Sample> train, valid, test;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_auc = 0.0;
  double valid_auc = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;  ///< 0 when no epoch ran
};

/// Mini-batch Adam training; returns the parameters of the epoch with the
/// best validation AUC.
TrainResult train(const DatasetSplits& data, const ModelConfig& config);

/// Scores for a list of samples.
std::vector<double> predict(std::span<const Sample> samples, const ModelParams& params,
                            const ModelConfig& config, const FingerprintTable* item_fps = nullptr);

/// Everything about a request except the candidate item.
struct UserRequest {
  std::int64_t user = 0;
  std::int64_t context = 0;
  std::int64_t timestamp = 0;
  std::vector<Behavior> short_seq, long_seq;
};

struct Candidate {
  std::int64_t item = 0;
  std::int64_t category = 0;
};

/// Scores many candidates for one request. Sequence embeddings, key/value
/// projections and key fingerprints are computed once in the constructor and
/// reused for every candidate. The stage methods are public so benchmarks
/// can time retrieval and attention separately.
class RequestScorer {
 public:
  RequestScorer(const UserRequest& request, const ModelParams& params, const ModelConfig& config,
                const FingerprintTable* item_fps = nullptr);

  struct Query {
    Eigen::VectorXd target;
    Fingerprint fingerprint;  ///< empty unless the variant hashes
    std::int64_t category = 0;
  };

  Query query(const Candidate& c) const;
  /// Long-sequence rows chosen for this candidate (all valid rows for FULL_TA).
  TopKResult select(const Query& q) const;
  Eigen::VectorXd long_representation(const Query& q, const TopKResult& selection) const;
  double head(const Query& q, const Eigen::VectorXd& long_repr) const;

  double score(const Candidate& c) const;

 private:
  const ModelParams& params_;
  const ModelConfig& config_;
  std::int64_t user_, context_;
  AttentionInput<double> short_input_, long_input_;
  Eigen::MatrixXd long_raw_;
  std::vector<std::int64_t> long_categories_;
  ProjectedSequence<double> short_proj_, long_proj_;
  Eigen::MatrixXd long_seq_t_;  ///< d x L, restricted variants only
  FingerprintTable long_fps_;
  Eigen::VectorXd short_mean_, long_mean_;
};

std::vector<double> predict_request(const UserRequest& request,
                                    std::span<const Candidate> candidates,
                                    const ModelParams& params, const ModelConfig& config,
                                    const FingerprintTable* item_fps = nullptr);

/// Splits a sample into its request and candidate halves.
UserRequest request_of(const Sample& sample);

}  // namespace eta

#include "eta/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "eta/auc.hpp"
#include "eta/error.hpp"
#include "eta/rng.hpp"

namespace eta {

namespace {

// Init streams sit far above the hash family's per-round streams.
enum Stream : std::uint64_t {
  kItemStream = 1001,
  kCategoryStream,
  kUserStream,
  kContextStream,
  kTimeStream,
  kShortAttnStream,
  kLongAttnStream,
  kMlpStream,
  kShuffleStream,
};

bool restricted(Variant v) {
  return v == Variant::kEta || v == Variant::kSimHard || v == Variant::kEtaDot;
}
bool pooled_long(Variant v) { return v == Variant::kPooling || v == Variant::kDinLongAvg; }
bool has_long(Variant v) { return v != Variant::kDinShort; }

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

Eigen::MatrixXd embedding_table(std::size_t d, std::size_t n, double bound, std::uint64_t seed,
                                Stream stream) {
  Rng rng(seed, stream);
  Eigen::MatrixXd t = uniform_matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n + 1), bound, rng);
  t.col(0).setZero();
  return t;
}

void check_id(std::int64_t id, Eigen::Index cols, const char* what) {
  if (id < 0 || id >= cols) {
    throw InvalidArgument(std::string("id out of range for ") + what + ": " + std::to_string(id));
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Hidden-layer activation; smooth, so finite differences hold everywhere.
double silu(double z) { return z * sigmoid(z); }
double silu_grad(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Keeps the reported probability strictly inside (0, 1).
double open_unit(double p) {
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(p, lo, hi);
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value in ") + layer);
}

struct SequenceRows {
  AttentionInput<double> input;  // attention rows, may include time embeddings
  Eigen::MatrixXd raw;           // item + category rows
  std::vector<std::int64_t> categories;
};

SequenceRows build_sequence(const std::vector<Behavior>& seq, std::size_t capacity,
                            const ModelParams& params, const ModelConfig& config,
                            std::int64_t impression_ts, const char* what) {
  if (seq.size() > capacity) {
    throw InvalidArgument(std::string(what) + " sequence longer than its configured capacity");
  }
  const auto& w = params.weights;
  const auto d = static_cast<Eigen::Index>(config.d);
  SequenceRows rows;
  rows.input.sequence = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(capacity), d);
  rows.raw = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(capacity), d);
  rows.input.valid.assign(capacity, 0);
  rows.categories.assign(capacity, 0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& b = seq[i];
    check_id(b.item, w.item_emb.cols(), "behavior item");
    check_id(b.category, w.category_emb.cols(), "behavior category");
    if (b.item == 0) continue;
    const auto r = static_cast<Eigen::Index>(i);
    rows.raw.row(r) = (w.item_emb.col(b.item) + w.category_emb.col(b.category)).transpose();
    rows.input.sequence.row(r) = rows.raw.row(r);
    if (config.use_time_buckets) {
      rows.input.sequence.row(r) +=
          w.time_emb.col(static_cast<Eigen::Index>(time_bucket(impression_ts, b.timestamp))).transpose();
    }
    rows.input.valid[i] = 1;
    rows.categories[i] = b.category;
  }
  return rows;
}

Eigen::VectorXd masked_mean(const AttentionInput<double>& in) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(in.sequence.cols());
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < in.sequence.rows(); ++i) {
    if (in.valid[static_cast<std::size_t>(i)]) {
      sum += in.sequence.row(i).transpose();
      ++n;
    }
  }
  return n == 0 ? sum : Eigen::VectorXd(sum / static_cast<double>(n));
}

std::vector<std::size_t> valid_indices(const Mask& valid) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) out.push_back(i);
  return out;
}

// Key fingerprints for the long sequence: table lookup by item id or hashing
// of the valid rows. Padding rows stay all-zero and are masked out anyway.
FingerprintTable long_key_fingerprints(const std::vector<Behavior>& seq, const Eigen::MatrixXd& raw,
                                       const Mask& valid, const ModelParams& params,
                                       const ModelConfig& config, const FingerprintTable* item_fps) {
  const auto& fam = params.family;
  if (item_fps != nullptr) {
    if (config.hash_input != HashInput::kRaw) {
      throw InvalidArgument("precomputed fingerprints require raw-embedding hashing");
    }
    if (item_fps->rounds() != fam.rounds() || item_fps->bits_per_round() != fam.bits_per_round() ||
        item_fps->size() != params.vocab.items + 1) {
      throw InvalidArgument("precomputed fingerprint table does not match the model");
    }
    FingerprintTable table(fam.rounds(), fam.bits_per_round(), valid.size());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (!valid[i]) continue;
      const auto src = item_fps->row(static_cast<std::size_t>(seq[i].item));
      std::copy(src.begin(), src.end(), table.row(i).begin());
    }
    return table;
  }
  const Eigen::MatrixXd* source = &raw;
  Eigen::MatrixXd projected;
  if (config.hash_input == HashInput::kProjected) {
    projected = raw * params.weights.long_attn.wk.front();
    source = &projected;
  }
  // Padding rows are hashed too; they are masked out of every ranking.
  return simhash_rows(*source, fam);
}

Fingerprint query_fingerprint_of(const Eigen::VectorXd& target, const ModelParams& params,
                                 const ModelConfig& config) {
  if (config.hash_input == HashInput::kProjected) {
    const Eigen::VectorXd q = params.weights.long_attn.wq.front().transpose() * target;
    return simhash(q, params.family);
  }
  return simhash(target, params.family);
}

// Returns the logit; fills pre-activations and activations per layer.
double mlp_forward(const Weights& w, const Eigen::VectorXd& x, std::vector<Eigen::VectorXd>* pre,
                   std::vector<Eigen::VectorXd>* post) {
  Eigen::VectorXd a = x;
  const std::size_t layers = w.mlp_w.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::VectorXd z = w.mlp_w[l] * a + w.mlp_b[l];
    require_finite(z, l + 1 == layers ? "output layer" : "hidden layer");
    if (pre) pre->push_back(z);
    if (l + 1 < layers) {
      a = z.unaryExpr([](double v) { return silu(v); });
    } else {
      a = z;
    }
    if (post) post->push_back(a);
  }
  return a(0);
}

Eigen::VectorXd concat_features(const Weights& w, const ModelConfig& config, std::int64_t user,
                                std::int64_t context, const Eigen::VectorXd& target,
                                const Eigen::VectorXd& short_repr, const Eigen::VectorXd& long_repr) {
  check_id(user, w.user_emb.cols(), "user");
  check_id(context, w.context_emb.cols(), "context");
  Eigen::VectorXd x(static_cast<Eigen::Index>(config.mlp_input_width()));
  x << w.user_emb.col(user), w.context_emb.col(context), target, short_repr, long_repr;
  return x;
}

std::vector<Eigen::MatrixXd*> blocks_of(Weights& w) {
  std::vector<Eigen::MatrixXd*> out;
  w.for_each([&](const std::string&, Eigen::MatrixXd& m, bool, bool) { out.push_back(&m); });
  return out;
}

std::vector<const Eigen::MatrixXd*> blocks_of(const Weights& w) {
  std::vector<const Eigen::MatrixXd*> out;
  w.for_each([&](const std::string&, const Eigen::MatrixXd& m, bool, bool) { out.push_back(&m); });
  return out;
}

void add_attention_grads(MHTAParams<double>& acc, const MHTAParams<double>& g) {
  for (std::size_t h = 0; h < acc.heads(); ++h) {
    acc.wq[h] += g.wq[h];
    acc.wk[h] += g.wk[h];
    acc.wv[h] += g.wv[h];
  }
  acc.wo += g.wo;
}

// Pushes a gradient on a sequence row back into the tables it was summed from.
void scatter_row(Weights& g, const Behavior& b, std::int64_t impression_ts, bool time,
                 const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  g.item_emb.col(b.item) += row.transpose();
  g.category_emb.col(b.category) += row.transpose();
  if (time) {
    g.time_emb.col(static_cast<Eigen::Index>(time_bucket(impression_ts, b.timestamp))) += row.transpose();
  }
}

void backward_sample(const Sample& s, const ForwardTrace& tr, const ModelParams& params,
                     const ModelConfig& config, double dlogit, Weights& g) {
  const Weights& w = params.weights;
  const std::size_t layers = w.mlp_w.size();
  Eigen::VectorXd dz = Eigen::VectorXd::Constant(1, dlogit);
  Eigen::VectorXd dx;
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::VectorXd& input = l == 0 ? tr.mlp_input : tr.post_act[l - 1];
    g.mlp_w[l].noalias() += dz * input.transpose();
    g.mlp_b[l] += dz;
    Eigen::VectorXd da = w.mlp_w[l].transpose() * dz;
    if (l == 0) {
      dx = std::move(da);
    } else {
      const Eigen::VectorXd& zprev = tr.pre_act[l - 1];
      dz = da.cwiseProduct(zprev.unaryExpr([](double v) { return silu_grad(v); }));
    }
  }
  const Eigen::Index d = static_cast<Eigen::Index>(config.d);
  g.user_emb.col(s.user) += dx.segment(0, d);
  g.context_emb.col(s.context) += dx.segment(d, d);
  Eigen::VectorXd dtarget = dx.segment(2 * d, d);
  const Eigen::VectorXd dshort = dx.segment(3 * d, d);
  const Eigen::VectorXd dlong = dx.segment(4 * d, d);
  const bool time = config.use_time_buckets;

  // Short sequence.
  const auto short_n = tr.short_input.valid_count();
  if (short_n > 0) {
    if (config.variant == Variant::kPooling) {
      const Eigen::RowVectorXd row = (dshort / static_cast<double>(short_n)).transpose();
      for (std::size_t i = 0; i < s.short_seq.size(); ++i)
        if (tr.short_input.valid[i]) scatter_row(g, s.short_seq[i], s.timestamp, time, row);
    } else {
      const auto ag = attention_gradients<double>(tr.short_input, w.short_attn, dshort);
      add_attention_grads(g.short_attn, ag.params);
      dtarget += ag.target;
      for (std::size_t i = 0; i < s.short_seq.size(); ++i)
        if (tr.short_input.valid[i])
          scatter_row(g, s.short_seq[i], s.timestamp, time, ag.sequence.row(static_cast<Eigen::Index>(i)));
    }
  }

  // Long sequence.
  if (has_long(config.variant)) {
    const auto long_n = tr.long_input.valid_count();
    if (long_n > 0 && pooled_long(config.variant)) {
      const Eigen::RowVectorXd row = (dlong / static_cast<double>(long_n)).transpose();
      for (std::size_t i = 0; i < s.long_seq.size(); ++i)
        if (tr.long_input.valid[i]) scatter_row(g, s.long_seq[i], s.timestamp, time, row);
    } else if (config.variant == Variant::kFullTa && long_n > 0) {
      const auto ag = attention_gradients<double>(tr.long_input, w.long_attn, dlong);
      add_attention_grads(g.long_attn, ag.params);
      dtarget += ag.target;
      for (std::size_t i = 0; i < s.long_seq.size(); ++i)
        if (tr.long_input.valid[i])
          scatter_row(g, s.long_seq[i], s.timestamp, time, ag.sequence.row(static_cast<Eigen::Index>(i)));
    } else if (restricted(config.variant) && !tr.attended.empty()) {
      const auto sub = gather(tr.long_input, tr.attended);
      const auto ag = attention_gradients<double>(sub, w.long_attn, dlong);
      add_attention_grads(g.long_attn, ag.params);
      dtarget += ag.target;
      for (std::size_t j = 0; j < tr.attended.size(); ++j)
        scatter_row(g, s.long_seq[tr.attended[j]], s.timestamp, time,
                    ag.sequence.row(static_cast<Eigen::Index>(j)));
    }
  }

  g.item_emb.col(s.target_item) += dtarget;
  g.category_emb.col(s.target_category) += dtarget;
}

double l2_penalty(const Weights& w) {
  double sum = 0.0;
  w.for_each([&](const std::string&, const Eigen::MatrixXd& m, bool reg, bool) {
    if (reg) sum += m.squaredNorm();
  });
  return sum;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kPooling: return "POOLING";
    case Variant::kDinShort: return "DIN_SHORT";
    case Variant::kDinLongAvg: return "DIN_LONG_AVG";
    case Variant::kEta: return "ETA";
    case Variant::kFullTa: return "FULL_TA";
    case Variant::kSimHard: return "SIM_HARD";
    case Variant::kEtaDot: return "ETA_DOT";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::kPooling, Variant::kDinShort, Variant::kDinLongAvg, Variant::kEta,
                 Variant::kFullTa, Variant::kSimHard, Variant::kEtaDot}) {
    if (variant_name(v) == name) return v;
  }
  throw InvalidArgument("unknown variant: " + std::string(name));
}

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw InvalidArgument("config: d must be a positive multiple of heads");
  }
  if (short_len == 0 || long_len == 0) throw InvalidArgument("config: sequence capacities must be >= 1");
  if (k == 0 || k > long_len) throw InvalidArgument("config: require 1 <= K <= L_lt");
  if (bits == 0 || rounds == 0) throw InvalidArgument("config: bits and rounds must be >= 1");
  if (mlp_widths.empty()) throw InvalidArgument("config: need at least one hidden layer");
  for (auto w : mlp_widths)
    if (w == 0) throw InvalidArgument("config: hidden widths must be >= 1");
  if (batch_size == 0) throw InvalidArgument("config: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !(l2 >= 0.0)) throw InvalidArgument("config: learning_rate and l2 must be >= 0");
}

std::string variant_label(const ModelConfig& c) {
  const std::string L = std::to_string(c.long_len);
  const std::string K = std::to_string(c.k);
  switch (c.variant) {
    case Variant::kPooling: return "POOL/-/" + L + "/-";
    case Variant::kDinShort: return "TA/-/0/-";
    case Variant::kDinLongAvg: return "AVG/-/" + L + "/-";
    case Variant::kEta: return "TA/HASH/" + L + "/" + K;
    case Variant::kFullTa: return "TA/-/" + L + "/-";
    case Variant::kSimHard: return "TA/CATE/" + L + "/" + K;
    case Variant::kEtaDot: return "TA/DOT/" + L + "/" + K;
  }
  return "?";
}

std::size_t time_bucket(std::int64_t impression_ts, std::int64_t behavior_ts) {
  const std::int64_t delta = std::max<std::int64_t>(0, impression_ts - behavior_ts);
  const auto days = static_cast<std::uint64_t>(delta / 86400);
  const auto bucket = static_cast<std::size_t>(std::bit_width(days + 1) - 1);
  return std::min(bucket, kTimeBuckets - 1);
}

Weights Weights::zeros_like() const {
  Weights z = *this;
  z.for_each([](const std::string&, Eigen::MatrixXd& m, bool, bool) { m.setZero(); });
  return z;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Eigen::MatrixXd& m, bool, bool) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

ModelParams init_params(const ModelConfig& config, const Vocab& vocab,
                        std::vector<std::int64_t> item_category) {
  config.validate();
  if (item_category.size() != vocab.items + 1) {
    throw InvalidArgument("init_params: item_category must have items + 1 entries");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d));
  ModelParams p;
  p.vocab = vocab;
  p.item_category = std::move(item_category);
  auto& w = p.weights;
  w.item_emb = embedding_table(config.d, vocab.items, bound * config.item_init_scale, config.seed, kItemStream);
  w.category_emb = embedding_table(config.d, vocab.categories, bound * config.category_init_scale,
                                   config.seed, kCategoryStream);
  w.user_emb = embedding_table(config.d, vocab.users, bound, config.seed, kUserStream);
  w.context_emb = embedding_table(config.d, vocab.contexts, bound, config.seed, kContextStream);
  if (config.use_time_buckets) {
    Rng rng(config.seed, kTimeStream);
    w.time_emb = uniform_matrix(static_cast<Eigen::Index>(config.d), kTimeBuckets, bound, rng);
  } else {
    w.time_emb.resize(0, 0);
  }
  const auto d = static_cast<Eigen::Index>(config.d);
  Rng short_rng(config.seed, kShortAttnStream);
  w.short_attn = MHTAParams<double>::random(d, config.heads, short_rng);
  Rng long_rng(config.seed, kLongAttnStream);
  w.long_attn = MHTAParams<double>::random(d, config.heads, long_rng);
  Rng mlp_rng(config.seed, kMlpStream);
  auto in = static_cast<Eigen::Index>(config.mlp_input_width());
  std::vector<std::size_t> widths = config.mlp_widths;
  widths.push_back(1);
  for (auto width : widths) {
    const auto out = static_cast<Eigen::Index>(width);
    w.mlp_w.push_back(uniform_matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in)), mlp_rng));
    w.mlp_b.push_back(Eigen::MatrixXd::Zero(out, 1));
    in = out;
  }
  const std::size_t hash_dim = config.hash_input == HashInput::kRaw ? config.d : config.d / config.heads;
  p.family = new_hash_family(config.seed, hash_dim, config.bits, config.rounds);
  return p;
}

void validate_params(const ModelParams& p, const ModelConfig& config) {
  config.validate();
  const auto& w = p.weights;
  const auto d = static_cast<Eigen::Index>(config.d);
  auto table = [&](const Eigen::MatrixXd& m, std::size_t n, const char* name) {
    if (m.rows() != d || m.cols() != static_cast<Eigen::Index>(n + 1)) {
      throw InvalidArgument(std::string("params: bad shape for ") + name);
    }
  };
  table(w.item_emb, p.vocab.items, "item_emb");
  table(w.category_emb, p.vocab.categories, "category_emb");
  table(w.user_emb, p.vocab.users, "user_emb");
  table(w.context_emb, p.vocab.contexts, "context_emb");
  if (config.use_time_buckets &&
      (w.time_emb.rows() != d || w.time_emb.cols() != static_cast<Eigen::Index>(kTimeBuckets))) {
    throw InvalidArgument("params: bad shape for time_emb");
  }
  for (const auto* attn : {&w.short_attn, &w.long_attn}) {
    attn->validate();
    if (attn->model_dim() != d || attn->heads() != config.heads) {
      throw InvalidArgument("params: attention shape does not match config");
    }
  }
  if (w.mlp_w.size() != config.mlp_widths.size() + 1 || w.mlp_b.size() != w.mlp_w.size()) {
    throw InvalidArgument("params: MLP depth does not match config");
  }
  auto in = static_cast<Eigen::Index>(config.mlp_input_width());
  for (std::size_t l = 0; l < w.mlp_w.size(); ++l) {
    const Eigen::Index out = l < config.mlp_widths.size() ? static_cast<Eigen::Index>(config.mlp_widths[l]) : 1;
    if (w.mlp_w[l].rows() != out || w.mlp_w[l].cols() != in || w.mlp_b[l].rows() != out || w.mlp_b[l].cols() != 1) {
      throw InvalidArgument("params: MLP layer shape does not match config");
    }
    in = out;
  }
  if (p.item_category.size() != p.vocab.items + 1) {
    throw InvalidArgument("params: item_category size does not match vocabulary");
  }
  const std::size_t hash_dim = config.hash_input == HashInput::kRaw ? config.d : config.d / config.heads;
  if (p.family.dim() != hash_dim || p.family.bits_per_round() != config.bits ||
      p.family.rounds() != config.rounds) {
    throw InvalidArgument("params: hash family does not match config");
  }
  w.for_each([](const std::string& name, const Eigen::MatrixXd& m, bool, bool) {
    if (!m.allFinite()) throw InvalidArgument("params: non-finite entry in " + name);
  });
}

Eigen::VectorXd item_vector(const ModelParams& params, std::int64_t item, std::int64_t category) {
  const auto& w = params.weights;
  check_id(item, w.item_emb.cols(), "item");
  check_id(category, w.category_emb.cols(), "category");
  return w.item_emb.col(item) + w.category_emb.col(category);
}

FingerprintTable precompute_item_fingerprints(const ModelParams& params, const ModelConfig& config) {
  if (config.hash_input != HashInput::kRaw) {
    throw InvalidArgument("precompute: only raw-embedding hashing has per-item fingerprints");
  }
  const std::size_t n = params.vocab.items + 1;
  FingerprintTable table(params.family.rounds(), params.family.bits_per_round(), n);
  for (std::size_t i = 1; i < n; ++i) {
    const auto item = static_cast<std::int64_t>(i);
    const Eigen::VectorXd v = item_vector(params, item, params.item_category[i]);
    simhash_into(v, params.family, table.row(i));
  }
  return table;
}

ForwardTrace forward_trace(const Sample& s, const ModelParams& params, const ModelConfig& config,
                           const FingerprintTable* item_fps, const TopKResult* fixed_selection) {
  const auto& w = params.weights;
  const auto d = static_cast<Eigen::Index>(config.d);
  ForwardTrace tr;
  tr.target = item_vector(params, s.target_item, s.target_category);

  auto short_rows = build_sequence(s.short_seq, config.short_len, params, config, s.timestamp, "short");
  tr.short_input = std::move(short_rows.input);
  tr.short_input.target = tr.target;
  if (config.variant == Variant::kPooling) {
    tr.short_repr = masked_mean(tr.short_input);
  } else if (tr.short_input.valid_count() > 0) {
    tr.short_repr = mhta(tr.short_input, w.short_attn);
  } else {
    tr.short_repr = Eigen::VectorXd::Zero(d);
  }
  require_finite(tr.short_repr, "short-sequence representation");

  tr.long_repr = Eigen::VectorXd::Zero(d);
  if (has_long(config.variant)) {
    auto long_rows = build_sequence(s.long_seq, config.long_len, params, config, s.timestamp, "long");
    tr.long_input = std::move(long_rows.input);
    tr.long_input.target = tr.target;
    tr.long_raw = std::move(long_rows.raw);
    const bool any = tr.long_input.valid_count() > 0;
    if (pooled_long(config.variant)) {
      tr.long_repr = masked_mean(tr.long_input);
    } else if (config.variant == Variant::kFullTa) {
      tr.attended = valid_indices(tr.long_input.valid);
      if (any) tr.long_repr = mhta(tr.long_input, w.long_attn);
    } else if (any) {
      if (fixed_selection != nullptr) {
        tr.selection = *fixed_selection;
      } else if (config.variant == Variant::kEta) {
        const FingerprintTable keys =
            long_key_fingerprints(s.long_seq, tr.long_raw, tr.long_input.valid, params, config, item_fps);
        const Fingerprint query = query_fingerprint_of(tr.target, params, config);
        tr.selection = top_k_by_hamming(query, keys, tr.long_input.valid, config.k);
      } else if (config.variant == Variant::kSimHard) {
        tr.selection = category_hard_search(s.target_category, long_rows.categories, tr.long_input.valid, config.k);
      } else {
        tr.selection = top_k_by_dot(tr.target, tr.long_raw, tr.long_input.valid, config.k, Similarity::kDot);
      }
      tr.attended = tr.selection.sorted_indices();
      if (!tr.attended.empty()) tr.long_repr = mhta(gather(tr.long_input, tr.attended), w.long_attn);
    }
    require_finite(tr.long_repr, "long-sequence representation");
  }

  tr.mlp_input = concat_features(w, config, s.user, s.context, tr.target, tr.short_repr, tr.long_repr);
  tr.logit = mlp_forward(w, tr.mlp_input, &tr.pre_act, &tr.post_act);
  tr.probability = open_unit(sigmoid(tr.logit));
  return tr;
}

double forward(const Sample& sample, const ModelParams& params, const ModelConfig& config,
               const FingerprintTable* item_fps) {
  return forward_trace(sample, params, config, item_fps).probability;
}

LossAndGradients loss_and_gradients(std::span<const Sample> batch, const ModelParams& params,
                                    const ModelConfig& config) {
  if (batch.empty()) throw InvalidArgument("loss_and_gradients: empty batch");
  LossAndGradients out;
  out.gradients = params.weights.zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& s : batch) {
    const ForwardTrace tr = forward_trace(s, params, config);
    const double y = s.label != 0 ? 1.0 : 0.0;
    loss += softplus(tr.logit) - y * tr.logit;
    backward_sample(s, tr, params, config, (sigmoid(tr.logit) - y) * scale, out.gradients);
  }
  out.loss = loss * scale + config.l2 * l2_penalty(params.weights);
  auto gb = blocks_of(out.gradients);
  auto wb = blocks_of(params.weights);
  std::size_t i = 0;
  params.weights.for_each([&](const std::string&, const Eigen::MatrixXd&, bool reg, bool emb) {
    if (reg) *gb[i] += 2.0 * config.l2 * *wb[i];
    if (emb && gb[i]->cols() > 0) gb[i]->col(0).setZero();
    ++i;
  });
  return out;
}

double batch_loss(std::span<const Sample> batch, const ModelParams& params,
                  const ModelConfig& config, std::span<const TopKResult> fixed_selections) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  if (!fixed_selections.empty() && fixed_selections.size() != batch.size()) {
    throw InvalidArgument("batch_loss: one fixed selection per sample required");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TopKResult* fixed = fixed_selections.empty() ? nullptr : &fixed_selections[i];
    const ForwardTrace tr = forward_trace(batch[i], params, config, nullptr, fixed);
    const double y = batch[i].label != 0 ? 1.0 : 0.0;
    loss += softplus(tr.logit) - y * tr.logit;
  }
  return loss / static_cast<double>(batch.size()) + config.l2 * l2_penalty(params.weights);
}

Adam::Adam(const Weights& shape, double learning_rate, bool sparse_embeddings)
    : lr_(learning_rate), sparse_(sparse_embeddings), m_(shape.zeros_like()), v_(shape.zeros_like()) {
  shape.for_each([&](const std::string&, const Eigen::MatrixXd& m, bool, bool emb) {
    column_steps_.emplace_back(sparse_ && emb ? static_cast<std::size_t>(m.cols()) : 0, 0);
  });
}

void Adam::step(Weights& weights, const Weights& gradients) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  auto wb = blocks_of(weights);
  auto gb = blocks_of(gradients);
  auto mb = blocks_of(m_);
  auto vb = blocks_of(v_);
  if (wb.size() != gb.size() || wb.size() != mb.size()) throw InvalidArgument("Adam: weight layout changed");
  auto update = [&](auto&& w, auto&& m, auto&& v, const auto& g, std::size_t t) {
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < wb.size(); ++i) {
    auto& steps = column_steps_[i];
    if (steps.empty()) {
      update(*wb[i], *mb[i], *vb[i], *gb[i], t_);
      continue;
    }
    for (Eigen::Index c = 0; c < gb[i]->cols(); ++c) {
      if (gb[i]->col(c).isZero(0.0)) continue;
      auto& t = steps[static_cast<std::size_t>(c)];
      update(wb[i]->col(c), mb[i]->col(c), vb[i]->col(c), gb[i]->col(c), ++t);
    }
  }
}

std::vector<double> predict(std::span<const Sample> samples, const ModelParams& params,
                            const ModelConfig& config, const FingerprintTable* item_fps) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward(s, params, config, item_fps));
  return out;
}

namespace {

double safe_auc(std::span<const Sample> samples, const std::vector<double>& scores) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  try {
    return auc(scores, labels);
  } catch (const InvalidArgument&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrainResult train(const DatasetSplits& data, const ModelConfig& config) {
  if (data.train.empty() || data.valid.empty()) {
    throw InvalidArgument("train: train and validation splits must be non-empty");
  }
  TrainResult result;
  result.params = init_params(config, data.vocab, data.item_category);
  if (config.epochs == 0) return result;

  ModelParams params = result.params;
  Adam adam(params.weights, config.learning_rate, config.sparse_embedding_updates);
  std::vector<Sample> order(data.train.begin(), data.train.end());
  Rng rng(config.seed, kShuffleStream);
  double best_auc = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const std::span<const Sample> batch(order.data() + start, n);
      LossAndGradients lg;
      try {
        lg = loss_and_gradients(batch, params, config);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": loss is not finite");
      }
      adam.step(params.weights, lg.gradients);
      loss_sum += lg.loss * static_cast<double>(n);
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_auc = safe_auc(data.train, predict(data.train, params, config));
    m.valid_auc = safe_auc(data.valid, predict(data.valid, params, config));
    result.metrics.push_back(m);
    const double key = std::isnan(m.valid_auc) ? -1.0 : m.valid_auc;
    if (key > best_auc) {
      best_auc = key;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

UserRequest request_of(const Sample& s) {
  return UserRequest{s.user, s.context, s.timestamp, s.short_seq, s.long_seq};
}

RequestScorer::RequestScorer(const UserRequest& request, const ModelParams& params,
                             const ModelConfig& config, const FingerprintTable* item_fps)
    : params_(params), config_(config), user_(request.user), context_(request.context) {
  const auto& w = params.weights;
  auto short_rows = build_sequence(request.short_seq, config.short_len, params, config, request.timestamp, "short");
  short_input_ = std::move(short_rows.input);
  if (config.variant == Variant::kPooling) {
    short_mean_ = masked_mean(short_input_);
  } else {
    short_proj_ = project_sequence<double>(short_input_.sequence, w.short_attn);
  }
  if (!has_long(config.variant)) return;
  auto long_rows = build_sequence(request.long_seq, config.long_len, params, config, request.timestamp, "long");
  if (pooled_long(config.variant)) {
    long_input_ = std::move(long_rows.input);
    long_mean_ = masked_mean(long_input_);
    return;
  }
  if (restricted(config.variant)) {
    long_seq_t_ = long_rows.input.sequence.transpose();
  } else {
    long_proj_ = project_sequence<double>(long_rows.input.sequence, w.long_attn);
  }
  if (config.variant == Variant::kEta) {
    long_fps_ = long_key_fingerprints(request.long_seq, long_rows.raw, long_rows.input.valid, params, config, item_fps);
  }
  long_input_ = std::move(long_rows.input);
  long_raw_ = std::move(long_rows.raw);
  long_categories_ = std::move(long_rows.categories);
}

RequestScorer::Query RequestScorer::query(const Candidate& c) const {
  Query q;
  q.target = item_vector(params_, c.item, c.category);
  q.category = c.category;
  if (config_.variant == Variant::kEta) q.fingerprint = query_fingerprint_of(q.target, params_, config_);
  return q;
}

TopKResult RequestScorer::select(const Query& q) const {
  switch (config_.variant) {
    case Variant::kEta:
      return top_k_by_hamming(q.fingerprint, long_fps_, long_input_.valid, config_.k);
    case Variant::kSimHard:
      return category_hard_search(q.category, long_categories_, long_input_.valid, config_.k);
    case Variant::kEtaDot:
      return top_k_by_dot(q.target, long_raw_, long_input_.valid, config_.k, Similarity::kDot);
    case Variant::kFullTa: {
      TopKResult all;
      all.indices = valid_indices(long_input_.valid);
      all.scores.assign(all.indices.size(), 0.0);
      return all;
    }
    default:
      return {};
  }
}

Eigen::VectorXd RequestScorer::long_representation(const Query& q, const TopKResult& selection) const {
  const auto d = static_cast<Eigen::Index>(config_.d);
  const auto& w = params_.weights;
  if (!has_long(config_.variant)) return Eigen::VectorXd::Zero(d);
  if (pooled_long(config_.variant)) return long_mean_;
  // Full attention reads the mask directly; the selection is not consulted.
  if (config_.variant == Variant::kFullTa) {
    if (long_input_.valid_count() == 0) return Eigen::VectorXd::Zero(d);
    return mhta_projected<double>(q.target, long_proj_, long_input_.valid, w.long_attn);
  }
  // Selections hold valid rows only, so an empty one means an empty sequence.
  if (selection.empty()) return Eigen::VectorXd::Zero(d);
  return mhta_absorbed_rows<double>(q.target, long_seq_t_, selection.sorted_indices(), w.long_attn);
}

double RequestScorer::head(const Query& q, const Eigen::VectorXd& long_repr) const {
  const auto& w = params_.weights;
  Eigen::VectorXd short_repr;
  if (config_.variant == Variant::kPooling) {
    short_repr = short_mean_;
  } else if (short_input_.valid_count() > 0) {
    short_repr = mhta_projected<double>(q.target, short_proj_, short_input_.valid, w.short_attn);
  } else {
    short_repr = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.d));
  }
  const Eigen::VectorXd x = concat_features(w, config_, user_, context_, q.target, short_repr, long_repr);
  return open_unit(sigmoid(mlp_forward(w, x, nullptr, nullptr)));
}

double RequestScorer::score(const Candidate& c) const {
  const Query q = query(c);
  if (config_.variant == Variant::kFullTa) return head(q, long_representation(q, {}));
  return head(q, long_representation(q, select(q)));
}

std::vector<double> predict_request(const UserRequest& request, std::span<const Candidate> candidates,
                                    const ModelParams& params, const ModelConfig& config,
                                    const FingerprintTable* item_fps) {
  if (candidates.empty()) throw InvalidArgument("predict_request: no candidates");
  const RequestScorer scorer(request, params, config, item_fps);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(scorer.score(c));
  return out;
}

}  // namespace eta

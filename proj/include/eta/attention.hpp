#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eta/error.hpp"
#include "eta/fingerprint.hpp"
#include "eta/retrieval.hpp"
#include "eta/rng.hpp"

namespace eta {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Multi-head target attention weights. Head h projects a d-dimensional
/// embedding with wq[h], wk[h] (d x d_k) and wv[h] (d x d_v); the concatenated
/// head outputs are mapped back to d by wo ((n_H * d_v) x d).
template <class Scalar>
struct MHTAParams {
  std::vector<MatrixX<Scalar>> wq, wk, wv;
  MatrixX<Scalar> wo;
  Scalar alpha = Scalar(1);

  std::size_t heads() const noexcept { return wq.size(); }
  Eigen::Index model_dim() const noexcept { return wo.cols(); }
  Eigen::Index key_dim() const noexcept { return wq.empty() ? 0 : wq.front().cols(); }
  Eigen::Index value_dim() const noexcept { return wv.empty() ? 0 : wv.front().cols(); }

  /// d_q = d_k = d_v = d / heads, alpha = 1/sqrt(d_k), entries uniform in
  /// (-1/sqrt(d), 1/sqrt(d)).
  static MHTAParams random(Eigen::Index d, std::size_t heads, Rng& rng) {
    if (d <= 0 || heads == 0 || d % static_cast<Eigen::Index>(heads) != 0) {
      throw InvalidArgument("MHTAParams: model dim must be a positive multiple of heads");
    }
    const Eigen::Index dh = d / static_cast<Eigen::Index>(heads);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto draw = [&](Eigen::Index r, Eigen::Index c) {
      MatrixX<Scalar> m(r, c);
      for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = Scalar(rng.uniform(-bound, bound));
      return m;
    };
    MHTAParams p;
    for (std::size_t h = 0; h < heads; ++h) {
      p.wq.push_back(draw(d, dh));
      p.wk.push_back(draw(d, dh));
      p.wv.push_back(draw(d, dh));
    }
    p.wo = draw(dh * static_cast<Eigen::Index>(heads), d);
    p.alpha = Scalar(1.0 / std::sqrt(static_cast<double>(dh)));
    return p;
  }

  void validate() const {
    if (wq.empty() || wq.size() != wk.size() || wq.size() != wv.size()) {
      throw InvalidArgument("MHTAParams: inconsistent head count");
    }
    const Eigen::Index d = wo.cols();
    for (std::size_t h = 0; h < heads(); ++h) {
      if (wq[h].rows() != d || wk[h].rows() != d || wv[h].rows() != d) {
        throw InvalidArgument("MHTAParams: projection input dim differs from model dim");
      }
      if (wq[h].cols() != wk[h].cols()) throw InvalidArgument("MHTAParams: d_q must equal d_k");
      if (wq[h].cols() != key_dim() || wv[h].cols() != value_dim()) {
        throw InvalidArgument("MHTAParams: heads have different widths");
      }
    }
    if (wo.rows() != value_dim() * static_cast<Eigen::Index>(heads())) {
      throw InvalidArgument("MHTAParams: W^O rows must equal heads * d_v");
    }
  }

  template <class F>
  void for_each_matrix(F&& f) {
    for (auto& m : wq) f(m);
    for (auto& m : wk) f(m);
    for (auto& m : wv) f(m);
    f(wo);
  }
  template <class F>
  void for_each_matrix(F&& f) const {
    for (const auto& m : wq) f(m);
    for (const auto& m : wk) f(m);
    for (const auto& m : wv) f(m);
    f(wo);
  }

  MHTAParams zeros_like() const {
    MHTAParams z;
    for (const auto& m : wq) z.wq.push_back(MatrixX<Scalar>::Zero(m.rows(), m.cols()));
    for (const auto& m : wk) z.wk.push_back(MatrixX<Scalar>::Zero(m.rows(), m.cols()));
    for (const auto& m : wv) z.wv.push_back(MatrixX<Scalar>::Zero(m.rows(), m.cols()));
    z.wo = MatrixX<Scalar>::Zero(wo.rows(), wo.cols());
    z.alpha = alpha;
    return z;
  }
};

/// Target embedding (d), behavior embeddings (L x d) and validity flags.
template <class Scalar>
struct AttentionInput {
  VectorX<Scalar> target;
  MatrixX<Scalar> sequence;
  Mask valid;

  Eigen::Index length() const noexcept { return sequence.rows(); }
  std::size_t valid_count() const noexcept {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
};

/// Rows `indices` (in the given order) of the sequence, all marked valid.
template <class Scalar>
AttentionInput<Scalar> gather(const AttentionInput<Scalar>& in,
                              const std::vector<std::size_t>& indices) {
  AttentionInput<Scalar> out;
  out.target = in.target;
  out.sequence.resize(static_cast<Eigen::Index>(indices.size()), in.sequence.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.sequence.row(static_cast<Eigen::Index>(i)) =
        in.sequence.row(static_cast<Eigen::Index>(indices[i]));
  }
  out.valid.assign(indices.size(), 1);
  return out;
}

/// Masked softmax of alpha * K q. Masked positions are excluded from the max
/// shift and from normalization and receive weight exactly zero.
template <class Scalar>
VectorX<Scalar> attention_weights(const Eigen::Ref<const VectorX<Scalar>>& q,
                                  const Eigen::Ref<const MatrixX<Scalar>>& keys, Scalar alpha,
                                  std::span<const std::uint8_t> valid) {
  if (keys.cols() != q.size()) throw InvalidArgument("attention: query/key width mismatch");
  if (valid.size() != static_cast<std::size_t>(keys.rows())) {
    throw InvalidArgument("attention: mask length differs from sequence length");
  }
  VectorX<Scalar> logits = alpha * (keys * q);
  Scalar mx = -std::numeric_limits<Scalar>::infinity();
  bool any = false;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (valid[static_cast<std::size_t>(i)]) {
      mx = any ? std::max(mx, logits(i)) : logits(i);
      any = true;
    }
  }
  if (!any) throw InvalidArgument("attention: no valid positions");
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (valid[static_cast<std::size_t>(i)]) {
      logits(i) = std::exp(logits(i) - mx);
      sum += logits(i);
    } else {
      logits(i) = 0;
    }
  }
  return logits / sum;
}

/// softmax(alpha q K^T) V over the valid positions; q is 1 x d_k given as a
/// column vector, K is L x d_k and V is L x d_v.
template <class Scalar>
VectorX<Scalar> single_head_attention(const Eigen::Ref<const VectorX<Scalar>>& q,
                                      const Eigen::Ref<const MatrixX<Scalar>>& keys,
                                      const Eigen::Ref<const MatrixX<Scalar>>& values,
                                      Scalar alpha, std::span<const std::uint8_t> valid) {
  if (keys.rows() != values.rows()) throw InvalidArgument("attention: K and V lengths differ");
  const VectorX<Scalar> w = attention_weights<Scalar>(q, keys, alpha, valid);
  return values.transpose() * w;
}

/// Per-head key and value projections of a behavior sequence. Computed once
/// per request and shared by every candidate scored against it.
template <class Scalar>
struct ProjectedSequence {
  std::vector<MatrixX<Scalar>> keys, values;
};

template <class Scalar>
ProjectedSequence<Scalar> project_sequence(const Eigen::Ref<const MatrixX<Scalar>>& sequence,
                                           const MHTAParams<Scalar>& params) {
  ProjectedSequence<Scalar> p;
  for (std::size_t h = 0; h < params.heads(); ++h) {
    p.keys.push_back(sequence * params.wk[h]);
    p.values.push_back(sequence * params.wv[h]);
  }
  return p;
}

template <class Scalar>
ProjectedSequence<Scalar> gather_rows(const ProjectedSequence<Scalar>& full,
                                      const std::vector<std::size_t>& indices) {
  ProjectedSequence<Scalar> out;
  for (std::size_t h = 0; h < full.keys.size(); ++h) {
    MatrixX<Scalar> k(static_cast<Eigen::Index>(indices.size()), full.keys[h].cols());
    MatrixX<Scalar> v(static_cast<Eigen::Index>(indices.size()), full.values[h].cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      k.row(static_cast<Eigen::Index>(i)) = full.keys[h].row(static_cast<Eigen::Index>(indices[i]));
      v.row(static_cast<Eigen::Index>(i)) =
          full.values[h].row(static_cast<Eigen::Index>(indices[i]));
    }
    out.keys.push_back(std::move(k));
    out.values.push_back(std::move(v));
  }
  return out;
}

/// MHTA given an already projected sequence.
template <class Scalar>
VectorX<Scalar> mhta_projected(const Eigen::Ref<const VectorX<Scalar>>& target,
                               const ProjectedSequence<Scalar>& seq,
                               std::span<const std::uint8_t> valid,
                               const MHTAParams<Scalar>& params) {
  const Eigen::Index dv = params.value_dim();
  VectorX<Scalar> concat(dv * static_cast<Eigen::Index>(params.heads()));
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const VectorX<Scalar> q = params.wq[h].transpose() * target;
    concat.segment(static_cast<Eigen::Index>(h) * dv, dv) =
        single_head_attention<Scalar>(q, seq.keys[h], seq.values[h], params.alpha, valid);
  }
  return params.wo.transpose() * concat;
}

/// mhta_projected over the given rows only, computed from the unprojected
/// sequence (stored d x L): each head folds W_k into the query and applies
/// W_v after pooling, so only the selected rows are ever touched.
template <class Scalar>
VectorX<Scalar> mhta_absorbed_rows(const Eigen::Ref<const VectorX<Scalar>>& target,
                                   const MatrixX<Scalar>& sequence_t,
                                   const std::vector<std::size_t>& rows,
                                   const MHTAParams<Scalar>& params) {
  if (rows.empty()) throw InvalidArgument("attention: no valid positions");
  const Eigen::Index dv = params.value_dim();
  const auto n = static_cast<Eigen::Index>(rows.size());
  VectorX<Scalar> concat(dv * static_cast<Eigen::Index>(params.heads()));
  // One gather, then every head works on a small contiguous block.
  MatrixX<Scalar> picked(sequence_t.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) picked.col(i) = sequence_t.col(static_cast<Eigen::Index>(rows[i]));
  VectorX<Scalar> w(n);
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const VectorX<Scalar> u = params.alpha * (params.wk[h] * (params.wq[h].transpose() * target));
    w.noalias() = picked.transpose() * u;
    w = (w.array() - w.maxCoeff()).exp();
    w /= w.sum();
    concat.segment(static_cast<Eigen::Index>(h) * dv, dv).noalias() = params.wv[h].transpose() * (picked * w);
  }
  return params.wo.transpose() * concat;
}

template <class Scalar>
void check_compatible(const AttentionInput<Scalar>& input, const MHTAParams<Scalar>& params) {
  params.validate();
  if (input.target.size() != params.model_dim() || input.sequence.cols() != params.model_dim()) {
    throw InvalidArgument("mhta: embedding dim does not match parameters");
  }
  if (input.valid.size() != static_cast<std::size_t>(input.sequence.rows())) {
    throw InvalidArgument("mhta: mask length differs from sequence length");
  }
}

/// Concat(Head_1..Head_n) W^O with Head_h = Att(E^t W^Q_h, E^s W^K_h, E^s W^V_h).
template <class Scalar>
VectorX<Scalar> mhta(const AttentionInput<Scalar>& input, const MHTAParams<Scalar>& params) {
  check_compatible(input, params);
  return mhta_projected<Scalar>(input.target, project_sequence<Scalar>(input.sequence, params),
                                input.valid, params);
}

enum class HashInput {
  kRaw,        ///< hash the target and behavior embeddings themselves
  kProjected,  ///< hash head-0 query and key projections (d_k-dim family)
};

template <class Scalar>
struct EtaResult {
  VectorX<Scalar> output;
  TopKResult selection;
};

/// Fingerprints for the hashed keys of an attention input.
template <class Scalar>
FingerprintTable key_fingerprints(const AttentionInput<Scalar>& input,
                                  const MHTAParams<Scalar>& params, const HashFamily& family,
                                  HashInput mode = HashInput::kRaw) {
  if (mode == HashInput::kRaw) return simhash_rows(input.sequence, family);
  const MatrixX<Scalar> keys = input.sequence * params.wk.front();
  return simhash_rows(keys, family);
}

template <class Scalar>
Fingerprint query_fingerprint(const AttentionInput<Scalar>& input,
                              const MHTAParams<Scalar>& params, const HashFamily& family,
                              HashInput mode = HashInput::kRaw) {
  if (mode == HashInput::kRaw) return simhash(input.target, family);
  const VectorX<Scalar> q = params.wq.front().transpose() * input.target;
  return simhash(q, family);
}

/// Retrieval-restricted MHTA: hash, select the k nearest keys by Hamming
/// distance, then run mhta over the selected rows taken in sequence order.
/// When `key_fps` is given it replaces on-the-fly key hashing.
template <class Scalar>
EtaResult<Scalar> eta_attention(const AttentionInput<Scalar>& input,
                                const MHTAParams<Scalar>& params, const HashFamily& family,
                                std::size_t k, const FingerprintTable* key_fps = nullptr,
                                HashInput mode = HashInput::kRaw) {
  check_compatible(input, params);
  if (k == 0) throw InvalidArgument("eta_attention: k must be >= 1");
  FingerprintTable computed;
  if (key_fps == nullptr) {
    computed = key_fingerprints(input, params, family, mode);
    key_fps = &computed;
  } else if (key_fps->size() != static_cast<std::size_t>(input.length())) {
    throw InvalidArgument("eta_attention: precomputed fingerprint count differs from L");
  }
  const Fingerprint query = query_fingerprint(input, params, family, mode);
  EtaResult<Scalar> res;
  res.selection = top_k_by_hamming(query, *key_fps, input.valid, k);
  res.output = mhta(gather(input, res.selection.sorted_indices()), params);
  return res;
}

template <class Scalar>
struct MHTAGradients {
  MHTAParams<Scalar> params;  ///< d loss / d W (alpha is not trained)
  VectorX<Scalar> target;     ///< d loss / d E^t
  MatrixX<Scalar> sequence;   ///< d loss / d E^s (zero on masked rows)
};

/// Analytic gradients of upstream . mhta(input, params).
template <class Scalar>
MHTAGradients<Scalar> attention_gradients(const AttentionInput<Scalar>& input,
                                          const MHTAParams<Scalar>& params,
                                          const Eigen::Ref<const VectorX<Scalar>>& upstream) {
  check_compatible(input, params);
  if (upstream.size() != params.model_dim()) {
    throw InvalidArgument("attention_gradients: upstream dim does not match model dim");
  }
  const Eigen::Index dv = params.value_dim();
  const auto heads = params.heads();
  MHTAGradients<Scalar> g;
  g.params = params.zeros_like();
  g.target = VectorX<Scalar>::Zero(input.target.size());
  g.sequence = MatrixX<Scalar>::Zero(input.sequence.rows(), input.sequence.cols());

  VectorX<Scalar> concat(dv * static_cast<Eigen::Index>(heads));
  std::vector<VectorX<Scalar>> qs, ws;
  std::vector<MatrixX<Scalar>> ks, vs;
  for (std::size_t h = 0; h < heads; ++h) {
    qs.push_back(params.wq[h].transpose() * input.target);
    ks.push_back(input.sequence * params.wk[h]);
    vs.push_back(input.sequence * params.wv[h]);
    ws.push_back(attention_weights<Scalar>(qs[h], ks[h], params.alpha, input.valid));
    concat.segment(static_cast<Eigen::Index>(h) * dv, dv) = vs[h].transpose() * ws[h];
  }
  g.params.wo = concat * upstream.transpose();
  const VectorX<Scalar> dconcat = params.wo * upstream;
  for (std::size_t h = 0; h < heads; ++h) {
    const VectorX<Scalar> dhead = dconcat.segment(static_cast<Eigen::Index>(h) * dv, dv);
    const MatrixX<Scalar> dv_h = ws[h] * dhead.transpose();
    const VectorX<Scalar> dw = vs[h] * dhead;
    const Scalar mean = ws[h].dot(dw);
    // Softmax Jacobian; masked entries have w = 0 and so get no gradient.
    const VectorX<Scalar> dlogits = ws[h].cwiseProduct((dw.array() - mean).matrix());
    const VectorX<Scalar> dq = params.alpha * (ks[h].transpose() * dlogits);
    const MatrixX<Scalar> dk = params.alpha * (dlogits * qs[h].transpose());
    g.params.wq[h] = input.target * dq.transpose();
    g.target.noalias() += params.wq[h] * dq;
    g.params.wk[h] = input.sequence.transpose() * dk;
    g.params.wv[h] = input.sequence.transpose() * dv_h;
    g.sequence.noalias() += dk * params.wk[h].transpose() + dv_h * params.wv[h].transpose();
  }
  return g;
}

}  // namespace eta

#pragma once

#include <string>
#include <vector>

#include "fmhca/ops.hpp"
#include "fmhca/params.hpp"

namespace fmhca {

struct AttentionConfig {
  std::size_t d_model = 128;
  std::size_t heads = 8;

  std::size_t d_k() const { return d_model / heads; }
  void validate() const;
};

template <typename T>
struct AttentionOutput {
  Tensor<T> context;  // [q x d_model]
  Tensor<T> weights;  // [q x kv], no graph; mean over heads for multi-head calls
};

// Per-head projections W_j^{Q,K,V} [d_model x d_k] and the output map
// W^O [heads*d_k x d_model]. No bias terms.
template <typename T>
struct MhcaParams {
  std::vector<Tensor<T>> w_q, w_k, w_v;
  Tensor<T> w_o;

  std::size_t heads() const { return w_q.size(); }
};

// Registers "<prefix>.head<j>.wq|wk|wv" and "<prefix>.wo" with Glorot init.
template <typename T>
MhcaParams<T> add_mhca_params(ParameterSet<T>& params, const std::string& prefix,
                              const AttentionConfig& cfg, Rng& rng);
template <typename T>
MhcaParams<T> mhca_view(const ParameterSet<T>& params, const std::string& prefix);

struct DropoutContext {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool training = false;

  template <typename T>
  Tensor<T> apply(const Tensor<T>& x) const {
    if (!training || rate == 0.0 || rng == nullptr) return x;
    return ops::dropout(x, rate, *rng, training);
  }
};

// softmax(Q K^T / sqrt(d_k)) V with masked keys excluded.
template <typename T>
AttentionOutput<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const KeyMask& key_mask);

// Concat_j Attention(Q W_j^Q, KV W_j^K, KV W_j^V) W^O. Keys and values share
// one source sequence. Dropout (if active) hits the W^O output.
template <typename T>
AttentionOutput<T> multi_head_cross_attention(const MhcaParams<T>& p, const AttentionConfig& cfg,
                                              const Tensor<T>& query_in, const Tensor<T>& kv_in,
                                              const KeyMask& key_mask,
                                              const DropoutContext& drop = {});

template <typename T>
struct TwoStageOutput {
  Tensor<T> attended;  // G: [(n+1) x d]
  Tensor<T> refined;   // F': [(n+1) x d]
  Tensor<T> s1;        // [(n+1) x (m+1)]
  Tensor<T> s2;        // [(n+1) x (n+1)]
};

// Stage 1: trending rows query the timely sequence, (s1, G) = MHCA(H, F).
// Stage 2: the attended rows query the trending sequence, (s2, F') = MHCA(G, H).
template <typename T>
TwoStageOutput<T> fmhca_two_stage(const MhcaParams<T>& stage1, const MhcaParams<T>& stage2,
                                  const AttentionConfig& cfg, const Tensor<T>& trending,
                                  const Tensor<T>& timely, const KeyMask& timely_mask,
                                  const KeyMask& trending_mask, const DropoutContext& drop = {});

}  // namespace fmhca

#include "fmhca/attention.hpp"

#include <cmath>

namespace fmhca {

void AttentionConfig::validate() const {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw Error(ErrorCode::InvalidArgument, "d_model " + std::to_string(d_model) +
                                                " is not divisible by " + std::to_string(heads) +
                                                " heads");
  }
}

template <typename T>
MhcaParams<T> add_mhca_params(ParameterSet<T>& params, const std::string& prefix,
                              const AttentionConfig& cfg, Rng& rng) {
  cfg.validate();
  MhcaParams<T> p;
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    const std::string head = prefix + ".head" + std::to_string(j);
    p.w_q.push_back(params.add(head + ".wq", glorot_uniform<T>(cfg.d_model, cfg.d_k(), rng)));
    p.w_k.push_back(params.add(head + ".wk", glorot_uniform<T>(cfg.d_model, cfg.d_k(), rng)));
    p.w_v.push_back(params.add(head + ".wv", glorot_uniform<T>(cfg.d_model, cfg.d_k(), rng)));
  }
  p.w_o = params.add(prefix + ".wo", glorot_uniform<T>(cfg.heads * cfg.d_k(), cfg.d_model, rng));
  return p;
}

template <typename T>
MhcaParams<T> mhca_view(const ParameterSet<T>& params, const std::string& prefix) {
  MhcaParams<T> p;
  for (std::size_t j = 0;; ++j) {
    const std::string head = prefix + ".head" + std::to_string(j);
    if (!params.contains(head + ".wq")) break;
    p.w_q.push_back(params.get(head + ".wq"));
    p.w_k.push_back(params.get(head + ".wk"));
    p.w_v.push_back(params.get(head + ".wv"));
  }
  if (p.w_q.empty()) throw Error(ErrorCode::MissingTensor, "no attention heads under '" + prefix + "'");
  p.w_o = params.get(prefix + ".wo");
  return p;
}

template <typename T>
AttentionOutput<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                        const KeyMask& key_mask) {
  if (q.cols() != k.cols()) {
    throw Error(ErrorCode::ShapeMismatch,
                "query " + shape_string(q.shape()) + " and key " + shape_string(k.shape()) + " differ in d_k");
  }
  if (k.rows() != v.rows() || key_mask.size() != k.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "key/value/mask lengths disagree");
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.cols()));
  auto logits = ops::scale(ops::matmul_nt(q, k), inv_sqrt_dk);
  auto weights = ops::masked_softmax(logits, Mask::from_keys(q.rows(), key_mask));
  auto context = ops::matmul(weights, v);
  return {std::move(context), std::move(weights)};
}

template <typename T>
AttentionOutput<T> multi_head_cross_attention(const MhcaParams<T>& p, const AttentionConfig& cfg,
                                              const Tensor<T>& query_in, const Tensor<T>& kv_in,
                                              const KeyMask& key_mask, const DropoutContext& drop) {
  cfg.validate();
  if (query_in.cols() != cfg.d_model || kv_in.cols() != cfg.d_model) {
    throw Error(ErrorCode::ShapeMismatch, "attention inputs " + shape_string(query_in.shape()) + ", " +
                                              shape_string(kv_in.shape()) + " vs d_model " +
                                              std::to_string(cfg.d_model));
  }
  if (p.heads() != cfg.heads) {
    throw Error(ErrorCode::ShapeMismatch, "parameter head count differs from config");
  }
  std::vector<Tensor<T>> heads;
  heads.reserve(cfg.heads);
  std::vector<T> mean_weights(query_in.rows() * kv_in.rows(), T(0));
  for (std::size_t j = 0; j < cfg.heads; ++j) {
    auto q = ops::matmul(query_in, p.w_q[j]);
    auto k = ops::matmul(kv_in, p.w_k[j]);
    auto v = ops::matmul(kv_in, p.w_v[j]);
    auto head = scaled_dot_attention(q, k, v, key_mask);
    const auto w = head.weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) mean_weights[i] += w[i];
    heads.push_back(std::move(head.context));
  }
  const T inv_heads = T(1) / static_cast<T>(cfg.heads);
  for (auto& w : mean_weights) w *= inv_heads;

  auto concatenated = cfg.heads == 1 ? heads.front() : ops::concat_cols<T>(heads);
  auto context = drop.apply(ops::matmul(concatenated, p.w_o));
  return {std::move(context),
          Tensor<T>(Shape{query_in.rows(), kv_in.rows()}, std::move(mean_weights))};
}

template <typename T>
TwoStageOutput<T> fmhca_two_stage(const MhcaParams<T>& stage1, const MhcaParams<T>& stage2,
                                  const AttentionConfig& cfg, const Tensor<T>& trending,
                                  const Tensor<T>& timely, const KeyMask& timely_mask,
                                  const KeyMask& trending_mask, const DropoutContext& drop) {
  auto first = multi_head_cross_attention(stage1, cfg, trending, timely, timely_mask, drop);
  auto second = multi_head_cross_attention(stage2, cfg, first.context, trending, trending_mask, drop);
  return {std::move(first.context), std::move(second.context), std::move(first.weights),
          std::move(second.weights)};
}

#define FMHCA_INSTANTIATE_ATTENTION(T)                                                          \
  template MhcaParams<T> add_mhca_params(ParameterSet<T>&, const std::string&,                   \
                                         const AttentionConfig&, Rng&);                          \
  template MhcaParams<T> mhca_view(const ParameterSet<T>&, const std::string&);                  \
  template AttentionOutput<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&,           \
                                                   const Tensor<T>&, const KeyMask&);            \
  template AttentionOutput<T> multi_head_cross_attention(                                        \
      const MhcaParams<T>&, const AttentionConfig&, const Tensor<T>&, const Tensor<T>&,          \
      const KeyMask&, const DropoutContext&);                                                    \
  template TwoStageOutput<T> fmhca_two_stage(const MhcaParams<T>&, const MhcaParams<T>&,         \
                                             const AttentionConfig&, const Tensor<T>&,           \
                                             const Tensor<T>&, const KeyMask&, const KeyMask&,   \
                                             const DropoutContext&);

FMHCA_INSTANTIATE_ATTENTION(float)
FMHCA_INSTANTIATE_ATTENTION(double)
FMHCA_INSTANTIATE_ATTENTION(long double)

}  // namespace fmhca

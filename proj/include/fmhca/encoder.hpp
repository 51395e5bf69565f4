#pragma once

#include <string>
#include <vector>

#include "fmhca/attention.hpp"

namespace fmhca {

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t heads = 8;
  std::size_t d_ff = 512;

  AttentionConfig attention() const { return {d_model, heads}; }
};

template <typename T>
struct TransformerLayerParams {
  MhcaParams<T> attention;
  Tensor<T> w1, b1, w2, b2;  // [d x d_ff], [d_ff], [d_ff x d], [d]
  Tensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};

template <typename T>
TransformerLayerParams<T> add_transformer_params(ParameterSet<T>& params, const std::string& prefix,
                                                 const EncoderConfig& cfg, Rng& rng);
template <typename T>
TransformerLayerParams<T> transformer_view(const ParameterSet<T>& params, const std::string& prefix);

// Factor matrices W_f^(k), W_h^(k), each [d_mfb x d].
template <typename T>
struct MfbParams {
  std::vector<Tensor<T>> w_f, w_h;

  std::size_t factors() const { return w_f.size(); }
};

template <typename T>
MfbParams<T> add_mfb_params(ParameterSet<T>& params, const std::string& prefix, std::size_t factors,
                            std::size_t d_mfb, std::size_t d_model, Rng& rng);
template <typename T>
MfbParams<T> mfb_view(const ParameterSet<T>& params, const std::string& prefix);

// Row 0 becomes cls; rows 1..m are x. The matching mask is prepend_valid(mask).
template <typename T>
Tensor<T> prepend_cls(const Tensor<T>& x, const Tensor<T>& cls);
KeyMask prepend_valid(const KeyMask& mask);

// Fixed sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)),
// PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d);

// relu(X W1 + b1) W2 + b2, row by row.
template <typename T>
Tensor<T> feed_forward(const TransformerLayerParams<T>& p, const Tensor<T>& x);

// X' = LN(X + MHSA(X)); out = LN(X' + FFN(X')). Masked rows never act as keys.
template <typename T>
Tensor<T> transformer_layer(const TransformerLayerParams<T>& p, const EncoderConfig& cfg,
                            const Tensor<T>& x, const KeyMask& mask, const DropoutContext& drop = {});

// z = sum_k (W_f^(k) f) .* (W_h^(k) h), with f and h given as [1 x d] rows;
// returns [1 x d_mfb].
template <typename T>
Tensor<T> mfb_pool(const MfbParams<T>& p, const Tensor<T>& f_cls, const Tensor<T>& h_cls);

// W [f; h] + b with W [d_out x 2d]; returns [1 x d_out].
template <typename T>
Tensor<T> concat_fusion(const Tensor<T>& f_cls, const Tensor<T>& h_cls, const Tensor<T>& w,
                        const Tensor<T>& b);

}  // namespace fmhca

#include "fmhca/encoder.hpp"

#include <array>
#include <cmath>

namespace fmhca {

template <typename T>
TransformerLayerParams<T> add_transformer_params(ParameterSet<T>& params, const std::string& prefix,
                                                 const EncoderConfig& cfg, Rng& rng) {
  if (cfg.d_ff < cfg.d_model) {
    throw Error(ErrorCode::InvalidArgument, "d_ff must be at least d_model");
  }
  TransformerLayerParams<T> p;
  p.attention = add_mhca_params(params, prefix + ".attn", cfg.attention(), rng);
  p.w1 = params.add(prefix + ".ffn.w1", glorot_uniform<T>(cfg.d_model, cfg.d_ff, rng));
  p.b1 = params.add(prefix + ".ffn.b1", Tensor<T>::zeros(Shape{cfg.d_ff}, true));
  p.w2 = params.add(prefix + ".ffn.w2", glorot_uniform<T>(cfg.d_ff, cfg.d_model, rng));
  p.b2 = params.add(prefix + ".ffn.b2", Tensor<T>::zeros(Shape{cfg.d_model}, true));
  p.ln1_gamma = params.add(prefix + ".ln1.gamma", Tensor<T>(Shape{cfg.d_model}, std::vector<T>(cfg.d_model, T(1)), true));
  p.ln1_beta = params.add(prefix + ".ln1.beta", Tensor<T>::zeros(Shape{cfg.d_model}, true));
  p.ln2_gamma = params.add(prefix + ".ln2.gamma", Tensor<T>(Shape{cfg.d_model}, std::vector<T>(cfg.d_model, T(1)), true));
  p.ln2_beta = params.add(prefix + ".ln2.beta", Tensor<T>::zeros(Shape{cfg.d_model}, true));
  return p;
}

template <typename T>
TransformerLayerParams<T> transformer_view(const ParameterSet<T>& params, const std::string& prefix) {
  TransformerLayerParams<T> p;
  p.attention = mhca_view(params, prefix + ".attn");
  p.w1 = params.get(prefix + ".ffn.w1");
  p.b1 = params.get(prefix + ".ffn.b1");
  p.w2 = params.get(prefix + ".ffn.w2");
  p.b2 = params.get(prefix + ".ffn.b2");
  p.ln1_gamma = params.get(prefix + ".ln1.gamma");
  p.ln1_beta = params.get(prefix + ".ln1.beta");
  p.ln2_gamma = params.get(prefix + ".ln2.gamma");
  p.ln2_beta = params.get(prefix + ".ln2.beta");
  return p;
}

template <typename T>
MfbParams<T> add_mfb_params(ParameterSet<T>& params, const std::string& prefix, std::size_t factors,
                            std::size_t d_mfb, std::size_t d_model, Rng& rng) {
  if (factors == 0) throw Error(ErrorCode::InvalidArgument, "MFB needs at least one factor");
  MfbParams<T> p;
  for (std::size_t k = 0; k < factors; ++k) {
    p.w_f.push_back(params.add(prefix + ".wf" + std::to_string(k), glorot_uniform<T>(d_mfb, d_model, rng)));
    p.w_h.push_back(params.add(prefix + ".wh" + std::to_string(k), glorot_uniform<T>(d_mfb, d_model, rng)));
  }
  return p;
}

template <typename T>
MfbParams<T> mfb_view(const ParameterSet<T>& params, const std::string& prefix) {
  MfbParams<T> p;
  for (std::size_t k = 0; params.contains(prefix + ".wf" + std::to_string(k)); ++k) {
    p.w_f.push_back(params.get(prefix + ".wf" + std::to_string(k)));
    p.w_h.push_back(params.get(prefix + ".wh" + std::to_string(k)));
  }
  if (p.w_f.empty()) throw Error(ErrorCode::MissingTensor, "no MFB factors under '" + prefix + "'");
  return p;
}

template <typename T>
Tensor<T> prepend_cls(const Tensor<T>& x, const Tensor<T>& cls) {
  if (cls.numel() != x.cols()) {
    throw Error(ErrorCode::ShapeMismatch,
                "cls " + shape_string(cls.shape()) + " vs sequence " + shape_string(x.shape()));
  }
  const std::array<Tensor<T>, 2> parts{cls, x};
  return ops::concat_rows<T>(parts);
}

KeyMask prepend_valid(const KeyMask& mask) {
  KeyMask out;
  out.reserve(mask.size() + 1);
  out.push_back(1);
  out.insert(out.end(), mask.begin(), mask.end());
  return out;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d) {
  std::vector<T> table(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      table[pos * d + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<T>(Shape{length, d}, std::move(table));
}

template <typename T>
Tensor<T> feed_forward(const TransformerLayerParams<T>& p, const Tensor<T>& x) {
  auto hidden = ops::relu(ops::add_bias(ops::matmul(x, p.w1), p.b1));
  return ops::add_bias(ops::matmul(hidden, p.w2), p.b2);
}

template <typename T>
Tensor<T> transformer_layer(const TransformerLayerParams<T>& p, const EncoderConfig& cfg,
                            const Tensor<T>& x, const KeyMask& mask, const DropoutContext& drop) {
  if (mask.size() != x.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "mask length " + std::to_string(mask.size()) +
                                              " for sequence " + shape_string(x.shape()));
  }
  auto attended = multi_head_cross_attention(p.attention, cfg.attention(), x, x, mask, drop);
  auto x1 = ops::layer_norm(ops::add(x, attended.context), p.ln1_gamma, p.ln1_beta);
  auto ffn = drop.apply(feed_forward(p, x1));
  return ops::layer_norm(ops::add(x1, ffn), p.ln2_gamma, p.ln2_beta);
}

template <typename T>
Tensor<T> mfb_pool(const MfbParams<T>& p, const Tensor<T>& f_cls, const Tensor<T>& h_cls) {
  if (f_cls.numel() != h_cls.numel()) {
    throw Error(ErrorCode::ShapeMismatch,
                "MFB inputs " + shape_string(f_cls.shape()) + " and " + shape_string(h_cls.shape()));
  }
  const auto f = ops::reshape(f_cls, Shape{1, f_cls.numel()});
  const auto h = ops::reshape(h_cls, Shape{1, h_cls.numel()});
  Tensor<T> z;
  for (std::size_t k = 0; k < p.factors(); ++k) {
    auto term = ops::hadamard(ops::matmul_nt(f, p.w_f[k]), ops::matmul_nt(h, p.w_h[k]));
    z = k == 0 ? term : ops::add(z, term);
  }
  return z;
}

template <typename T>
Tensor<T> concat_fusion(const Tensor<T>& f_cls, const Tensor<T>& h_cls, const Tensor<T>& w,
                        const Tensor<T>& b) {
  const std::array<Tensor<T>, 2> parts{ops::reshape(f_cls, Shape{1, f_cls.numel()}),
                                       ops::reshape(h_cls, Shape{1, h_cls.numel()})};
  return ops::add_bias(ops::matmul_nt(ops::concat_cols<T>(parts), w), b);
}

#define FMHCA_INSTANTIATE_ENCODER(T)                                                              \
  template TransformerLayerParams<T> add_transformer_params(ParameterSet<T>&, const std::string&,   \
                                                            const EncoderConfig&, Rng&);            \
  template TransformerLayerParams<T> transformer_view(const ParameterSet<T>&, const std::string&);  \
  template MfbParams<T> add_mfb_params(ParameterSet<T>&, const std::string&, std::size_t,           \
                                       std::size_t, std::size_t, Rng&);                             \
  template MfbParams<T> mfb_view(const ParameterSet<T>&, const std::string&);                       \
  template Tensor<T> prepend_cls(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> positional_encoding(std::size_t, std::size_t);                                 \
  template Tensor<T> feed_forward(const TransformerLayerParams<T>&, const Tensor<T>&);              \
  template Tensor<T> transformer_layer(const TransformerLayerParams<T>&, const EncoderConfig&,      \
                                       const Tensor<T>&, const KeyMask&, const DropoutContext&);    \
  template Tensor<T> mfb_pool(const MfbParams<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> concat_fusion(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                   const Tensor<T>&);

FMHCA_INSTANTIATE_ENCODER(float)
FMHCA_INSTANTIATE_ENCODER(double)
FMHCA_INSTANTIATE_ENCODER(long double)

}  // namespace fmhca

#include "fmhca/model.hpp"

#include <cmath>

namespace fmhca {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "no_cross_attention") return Variant::NoCrossAttention;
  if (name == "no_fusion") return Variant::NoFusion;
  if (name == "mlp_baseline") return Variant::MlpBaseline;
  throw Error(ErrorCode::InvalidArgument,
              "unknown variant '" + name + "' (full|no_cross_attention|no_fusion|mlp_baseline)");
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Full: return "full";
    case Variant::NoCrossAttention: return "no_cross_attention";
    case Variant::NoFusion: return "no_fusion";
    case Variant::MlpBaseline: return "mlp_baseline";
  }
  return "full";
}

void ModelConfig::validate() const {
  if (d_emb_in == 0 || d_model == 0) throw Error(ErrorCode::InvalidArgument, "dimensions must be positive");
  attention().validate();
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout must lie in [0, 1)");
  if (mfb_factors == 0 || d_mfb == 0) throw Error(ErrorCode::InvalidArgument, "MFB needs K >= 1 and d_mfb >= 1");
  if (d_ff < d_model) throw Error(ErrorCode::InvalidArgument, "d_ff must be at least d_model");
  if (n_layers == 0) throw Error(ErrorCode::InvalidArgument, "need at least one transformer layer");
  if (mlp_hidden == 0) throw Error(ErrorCode::InvalidArgument, "mlp_hidden must be positive");
}

namespace {

bool uses_fmhca(Variant v) { return v == Variant::Full || v == Variant::NoFusion; }

std::string layer_prefix(const char* branch, std::size_t layer) {
  return std::string(branch) + ".layer" + std::to_string(layer);
}

template <typename T>
Tensor<T> embeddings_tensor(std::span<const float> rows, std::size_t count, std::size_t d_emb) {
  return Tensor<T>(Shape{count, d_emb}, std::vector<T>(rows.begin(), rows.end()));
}

template <typename T>
Tensor<T> project(const ParameterSet<T>& params, const ModelConfig& cfg, const Tensor<T>& emb,
                  const DropoutContext& drop) {
  auto projected = ops::relu(ops::add_bias(ops::matmul(emb, params.get("proj.w")), params.get("proj.b")));
  return cfg.dropout_on_projection ? drop.apply(projected) : projected;
}

template <typename T>
Tensor<T> prepare_sequence(const Tensor<T>& projected, const Tensor<T>& cls) {
  auto seq = prepend_cls(projected, cls);
  return ops::add(seq, positional_encoding<T>(seq.rows(), seq.cols()));
}

template <typename T>
Tensor<T> encode(const ParameterSet<T>& params, const ModelConfig& cfg, const char* branch,
                 Tensor<T> x, const KeyMask& mask, const DropoutContext& drop) {
  for (std::size_t l = 0; l < cfg.n_layers; ++l)
    x = transformer_layer(transformer_view(params, layer_prefix(branch, l)), cfg.encoder(), x, mask, drop);
  return x;
}

AttentionMap trim(std::span<const double> values, std::size_t cols, std::size_t keep_rows,
                  std::size_t keep_cols) {
  AttentionMap map{keep_rows, keep_cols, {}};
  map.values.reserve(keep_rows * keep_cols);
  for (std::size_t r = 0; r < keep_rows; ++r)
    for (std::size_t c = 0; c < keep_cols; ++c) map.values.push_back(values[r * cols + c]);
  return map;
}

template <typename T>
AttentionMap trim(const Tensor<T>& weights, std::size_t keep_rows, std::size_t keep_cols) {
  std::vector<double> v(weights.values().begin(), weights.values().end());
  return trim(v, weights.cols(), keep_rows, keep_cols);
}

std::size_t count_valid(const KeyMask& mask) {
  std::size_t n = 0;
  for (auto v : mask) n += v != 0;
  return n;
}

template <typename T>
Tensor<T> finish(std::vector<Tensor<T>>& rows) {
  return ops::concat_rows<T>(rows);
}

template <typename T>
Tensor<T> softmax_values(const Tensor<T>& logits) {
  return ops::masked_softmax(logits.detach());
}

}  // namespace

template <typename T>
ParameterSet<T> build_model(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ParameterSet<T> params;
  params.add("proj.w", glorot_uniform<T>(cfg.d_emb_in, cfg.d_model, rng));
  params.add("proj.b", Tensor<T>::zeros(Shape{cfg.d_model}, true));

  if (cfg.variant == Variant::MlpBaseline) {
    params.add("mlp.w1", glorot_uniform<T>(2 * cfg.d_model, cfg.mlp_hidden, rng));
    params.add("mlp.b1", Tensor<T>::zeros(Shape{cfg.mlp_hidden}, true));
    params.add("mlp.w2", glorot_uniform<T>(cfg.mlp_hidden, kNumClasses, rng));
    params.add("mlp.b2", Tensor<T>::zeros(Shape{kNumClasses}, true));
    return params;
  }

  params.add("cls.timely", normal_vector<T>(cfg.d_model, 0.02, rng));
  params.add("cls.trending", normal_vector<T>(cfg.d_model, 0.02, rng));
  if (uses_fmhca(cfg.variant)) {
    add_mhca_params(params, "fmhca1", cfg.attention(), rng);
    if (!cfg.share_fmhca) add_mhca_params(params, "fmhca2", cfg.attention(), rng);
  }
  for (const char* branch : {"enc_timely", "enc_trending"})
    for (std::size_t l = 0; l < cfg.n_layers; ++l)
      add_transformer_params(params, layer_prefix(branch, l), cfg.encoder(), rng);

  if (cfg.variant == Variant::NoFusion) {
    params.add("fusion.w", glorot_uniform<T>(cfg.d_mfb, 2 * cfg.d_model, rng));
    params.add("fusion.b", Tensor<T>::zeros(Shape{cfg.d_mfb}, true));
  } else {
    add_mfb_params(params, "mfb", cfg.mfb_factors, cfg.d_mfb, cfg.d_model, rng);
  }
  params.add("classifier.w", glorot_uniform<T>(kNumClasses, cfg.d_mfb, rng));
  params.add("classifier.b", Tensor<T>::zeros(Shape{kNumClasses}, true));
  return params;
}

template <typename T>
ModelConfig infer_config(const ParameterSet<T>& params) {
  ModelConfig cfg;
  const auto& proj = params.get("proj.w");
  cfg.d_emb_in = proj.rows();
  cfg.d_model = proj.cols();
  if (params.contains("mlp.w1")) {
    cfg.variant = Variant::MlpBaseline;
    cfg.mlp_hidden = params.get("mlp.w1").cols();
    return cfg;
  }
  const bool has_fmhca = params.contains("fmhca1.wo");
  const bool has_concat = params.contains("fusion.w");
  cfg.variant = has_concat ? Variant::NoFusion : (has_fmhca ? Variant::Full : Variant::NoCrossAttention);
  cfg.share_fmhca = has_fmhca && !params.contains("fmhca2.wo");
  cfg.heads = mhca_view(params, "enc_timely.layer0.attn").heads();
  cfg.d_ff = params.get("enc_timely.layer0.ffn.w1").cols();
  cfg.n_layers = 0;
  while (params.contains(layer_prefix("enc_timely", cfg.n_layers) + ".ffn.w1")) ++cfg.n_layers;
  cfg.d_mfb = params.get("classifier.w").cols();
  if (!has_concat) cfg.mfb_factors = mfb_view(params, "mfb").factors();
  cfg.validate();
  return cfg;
}

template <typename T>
ForwardTrace<T> mlp_baseline_forward(const ParameterSet<T>& params, const ModelConfig& cfg,
                                     const Batch& batch, bool training, Rng& rng) {
  if (batch.size == 0) throw Error(ErrorCode::EmptyBatch, "forward on an empty batch");
  if (batch.d_emb != cfg.d_emb_in) {
    throw Error(ErrorCode::ShapeMismatch, "batch embeddings are " + std::to_string(batch.d_emb) +
                                              " wide, model expects " + std::to_string(cfg.d_emb_in));
  }
  const DropoutContext drop{cfg.dropout, &rng, training};
  std::vector<Tensor<T>> rows;
  for (std::size_t b = 0; b < batch.size; ++b) {
    auto f = project(params, cfg, embeddings_tensor<T>(batch.timely_of(b), batch.max_timely, batch.d_emb), drop);
    auto h = project(params, cfg, embeddings_tensor<T>(batch.trending_of(b), batch.max_trending, batch.d_emb), drop);
    const std::array<Tensor<T>, 2> pooled{ops::masked_mean_rows(f, batch.timely_mask_of(b)),
                                          ops::masked_mean_rows(h, batch.trending_mask_of(b))};
    auto hidden = ops::relu(ops::add_bias(ops::matmul(ops::concat_cols<T>(pooled), params.get("mlp.w1")),
                                          params.get("mlp.b1")));
    rows.push_back(ops::add_bias(ops::matmul(drop.apply(hidden), params.get("mlp.w2")), params.get("mlp.b2")));
  }
  ForwardTrace<T> trace;
  trace.logits = finish(rows);
  trace.probabilities = softmax_values(trace.logits);
  return trace;
}

template <typename T>
ForwardTrace<T> forward(const ParameterSet<T>& params, const ModelConfig& cfg, const Batch& batch,
                        bool training, Rng& rng) {
  if (cfg.variant == Variant::MlpBaseline) return mlp_baseline_forward(params, cfg, batch, training, rng);
  if (batch.size == 0) throw Error(ErrorCode::EmptyBatch, "forward on an empty batch");
  if (batch.d_emb != cfg.d_emb_in) {
    throw Error(ErrorCode::ShapeMismatch, "batch embeddings are " + std::to_string(batch.d_emb) +
                                              " wide, model expects " + std::to_string(cfg.d_emb_in));
  }
  const DropoutContext drop{cfg.dropout, &rng, training};
  const bool cross = uses_fmhca(cfg.variant);
  MhcaParams<T> stage1, stage2;
  if (cross) {
    stage1 = mhca_view(params, "fmhca1");
    stage2 = cfg.share_fmhca ? stage1 : mhca_view(params, "fmhca2");
  }

  ForwardTrace<T> trace;
  std::vector<Tensor<T>> rows;
  for (std::size_t b = 0; b < batch.size; ++b) {
    const KeyMask f_mask = prepend_valid(batch.timely_mask_of(b));
    const KeyMask h_mask = prepend_valid(batch.trending_mask_of(b));
    auto f_proj = project(params, cfg, embeddings_tensor<T>(batch.timely_of(b), batch.max_timely, batch.d_emb), drop);
    auto h_proj = project(params, cfg, embeddings_tensor<T>(batch.trending_of(b), batch.max_trending, batch.d_emb), drop);
    auto timely = prepare_sequence(f_proj, params.get("cls.timely"));
    auto trending = prepare_sequence(h_proj, params.get("cls.trending"));

    Tensor<T> timely_encoded;
    if (cross) {
      auto exchange = fmhca_two_stage(stage1, stage2, cfg.attention(), trending, timely, f_mask, h_mask, drop);
      const std::size_t n1 = count_valid(h_mask), m1 = count_valid(f_mask);
      trace.s1.push_back(trim(exchange.s1, n1, m1));
      trace.s2.push_back(trim(exchange.s2, n1, n1));
      // The refined sequence follows the trending length, hence the trending mask.
      timely_encoded = encode(params, cfg, "enc_timely", exchange.refined, h_mask, drop);
    } else {
      timely_encoded = encode(params, cfg, "enc_timely", timely, f_mask, drop);
    }
    auto trending_encoded = encode(params, cfg, "enc_trending", trending, h_mask, drop);

    auto f_cls = ops::slice_rows(timely_encoded, 0, 1);
    auto h_cls = ops::slice_rows(trending_encoded, 0, 1);
    auto fused = cfg.variant == Variant::NoFusion
                     ? concat_fusion(f_cls, h_cls, params.get("fusion.w"), params.get("fusion.b"))
                     : mfb_pool(mfb_view(params, "mfb"), f_cls, h_cls);
    rows.push_back(ops::add_bias(ops::matmul_nt(fused, params.get("classifier.w")), params.get("classifier.b")));
  }
  trace.logits = finish(rows);
  trace.probabilities = softmax_values(trace.logits);
  return trace;
}

template <typename T>
int predict(std::span<const T> probabilities) {
  if (probabilities.size() != kNumClasses) {
    throw Error(ErrorCode::ShapeMismatch, "predict expects 3 class probabilities");
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c)
    if (probabilities[c] > probabilities[best]) best = c;
  return index_to_label(best);
}

#define FMHCA_INSTANTIATE_MODEL(T)                                                                  \
  template ParameterSet<T> build_model<T>(const ModelConfig&);                                      \
  template ModelConfig infer_config(const ParameterSet<T>&);                                        \
  template ForwardTrace<T> forward(const ParameterSet<T>&, const ModelConfig&, const Batch&, bool,  \
                                   Rng&);                                                           \
  template ForwardTrace<T> mlp_baseline_forward(const ParameterSet<T>&, const ModelConfig&,         \
                                                const Batch&, bool, Rng&);                          \
  template int predict(std::span<const T>);

FMHCA_INSTANTIATE_MODEL(float)
FMHCA_INSTANTIATE_MODEL(double)
FMHCA_INSTANTIATE_MODEL(long double)

}  // namespace fmhca

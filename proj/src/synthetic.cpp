#include "fmhca/synthetic.hpp"

#include <cmath>
#include <sstream>

namespace fmhca {

SyntheticTask parse_task(const std::string& name) {
  if (name == "separable") return SyntheticTask::Separable;
  if (name == "interaction") return SyntheticTask::Interaction;
  throw Error(ErrorCode::InvalidArgument, "unknown task '" + name + "' (separable|interaction)");
}

std::string to_string(SyntheticTask task) {
  return task == SyntheticTask::Separable ? "separable" : "interaction";
}

void SyntheticSpec::validate() const {
  double total = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "class priors must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    std::ostringstream msg;
    msg << "class priors must sum to 1, got " << total;
    throw Error(ErrorCode::InvalidArgument, msg.str());
  }
  if (companies == 0) throw Error(ErrorCode::InvalidArgument, "need at least one company");
  if (d_emb == 0) throw Error(ErrorCode::InvalidArgument, "d_emb must be positive");
  if (timely_min == 0 || timely_min > timely_max || trending_min == 0 || trending_min > trending_max) {
    throw Error(ErrorCode::InvalidArgument, "opinion count ranges must satisfy 1 <= min <= max");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be nonnegative");
  if (task == SyntheticTask::Interaction && latent_dim == 0) {
    throw Error(ErrorCode::InvalidArgument, "latent_dim must be positive");
  }
}

void SyntheticSpec::use_full_scale_lengths() {
  timely_min = trending_min = 150;
  timely_max = trending_max = 300;
}

int interaction_label(double inner_product, double neutral_band) {
  if (inner_product < -neutral_band) return -1;
  if (inner_product > neutral_band) return 1;
  return 0;
}

namespace {

int draw_label(Rng& rng, const std::array<double, 3>& priors) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t c = 0; c < priors.size(); ++c) {
    cumulative += priors[c];
    if (u < cumulative) return index_to_label(c);
  }
  // u landed in the rounding gap above the last cumulative sum.
  for (std::size_t c = priors.size(); c-- > 0;)
    if (priors[c] > 0.0) return index_to_label(c);
  return 0;
}

std::size_t draw_count(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

std::string company_name(std::size_t i) {
  std::ostringstream out;
  out << "C" << (i + 1);
  return out.str();
}

EmbeddingMatrix noisy_rows(Rng& rng, std::size_t rows, const std::vector<double>& center, double sigma) {
  EmbeddingMatrix m{rows, center.size(), std::vector<float>(rows * center.size())};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < center.size(); ++j)
      m.values[r * center.size() + j] = static_cast<float>(center[j] + sigma * rng.normal());
  return m;
}

// Latent rows l_r = center + N(0, I); returns the rows and their mean.
std::vector<std::vector<double>> latent_rows(Rng& rng, std::size_t rows, const std::vector<double>& center,
                                             std::vector<double>& mean) {
  std::vector<std::vector<double>> out(rows, std::vector<double>(center.size()));
  mean.assign(center.size(), 0.0);
  for (auto& row : out)
    for (std::size_t j = 0; j < center.size(); ++j) {
      row[j] = center[j] + rng.normal();
      mean[j] += row[j];
    }
  for (auto& v : mean) v /= static_cast<double>(rows);
  return out;
}

EmbeddingMatrix embed_rows(Rng& rng, const std::vector<std::vector<double>>& latent,
                           const std::vector<double>& projection, std::size_t d_emb, double sigma) {
  const std::size_t r_dim = latent.empty() ? 0 : latent.front().size();
  EmbeddingMatrix m{latent.size(), d_emb, std::vector<float>(latent.size() * d_emb)};
  for (std::size_t r = 0; r < latent.size(); ++r)
    for (std::size_t j = 0; j < d_emb; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < r_dim; ++k) v += latent[r][k] * projection[k * d_emb + j];
      m.values[r * d_emb + j] = static_cast<float>(v + sigma * rng.normal());
    }
  return m;
}

}  // namespace

SyntheticResult generate_synthetic_detailed(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticResult result;
  result.data.d_emb = static_cast<std::uint32_t>(spec.d_emb);

  if (spec.task == SyntheticTask::Separable) {
    std::array<std::vector<double>, kNumClasses> means;
    for (auto& mu : means) {
      mu.resize(spec.d_emb);
      for (auto& v : mu) v = rng.normal();
    }
    for (std::size_t i = 0; i < spec.companies; ++i) {
      OpinionPairSample s;
      s.company_id = company_name(i);
      s.label = draw_label(rng, spec.priors);
      const auto m = draw_count(rng, spec.timely_min, spec.timely_max);
      const auto n = draw_count(rng, spec.trending_min, spec.trending_max);
      const auto& mu = means[label_to_index(s.label)];
      s.timely = noisy_rows(rng, m, mu, spec.noise_sigma);
      s.trending = noisy_rows(rng, n, mu, spec.noise_sigma);
      result.data.samples.push_back(std::move(s));
    }
    return result;
  }

  // Interaction: per-modality linear maps from the latent space into the
  // embedding space, shared by all companies.
  const std::size_t r_dim = spec.latent_dim;
  std::vector<double> proj_timely(r_dim * spec.d_emb), proj_trending(r_dim * spec.d_emb);
  for (auto& v : proj_timely) v = rng.normal();
  for (auto& v : proj_trending) v = rng.normal();
  // Half a standard deviation of a product of two N(0, 1) sums over r_dim terms.
  result.neutral_band = 0.5 * std::sqrt(static_cast<double>(r_dim));

  for (std::size_t i = 0; i < spec.companies; ++i) {
    OpinionPairSample s;
    s.company_id = company_name(i);
    s.label = draw_label(rng, spec.priors);
    const auto m = draw_count(rng, spec.timely_min, spec.timely_max);
    const auto n = draw_count(rng, spec.trending_min, spec.trending_max);
    std::vector<double> center_f(r_dim), center_h(r_dim), mean_f, mean_h;
    std::vector<std::vector<double>> rows_f, rows_h;
    for (;;) {
      for (auto& v : center_f) v = rng.normal();
      for (auto& v : center_h) v = rng.normal();
      rows_f = latent_rows(rng, m, center_f, mean_f);
      rows_h = latent_rows(rng, n, center_h, mean_h);
      double inner = 0.0;
      for (std::size_t k = 0; k < r_dim; ++k) inner += mean_f[k] * mean_h[k];
      if (interaction_label(inner, result.neutral_band) == s.label) break;
    }
    s.timely = embed_rows(rng, rows_f, proj_timely, spec.d_emb, spec.noise_sigma);
    s.trending = embed_rows(rng, rows_h, proj_trending, spec.d_emb, spec.noise_sigma);
    result.timely_latent_means.push_back(std::move(mean_f));
    result.trending_latent_means.push_back(std::move(mean_h));
    result.data.samples.push_back(std::move(s));
  }
  return result;
}

Dataset generate_synthetic(const SyntheticSpec& spec) { return generate_synthetic_detailed(spec).data; }

}  // namespace fmhca

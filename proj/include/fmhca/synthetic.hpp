#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fmhca/dataset.hpp"

namespace fmhca {

enum class SyntheticTask {
  // Class means added to Gaussian noise rows in both modalities.
  Separable,
  // Label is a bucket of <mean timely latent, mean trending latent>; neither
  // modality carries the label on its own.
  Interaction,
};

SyntheticTask parse_task(const std::string& name);
std::string to_string(SyntheticTask task);

struct SyntheticSpec {
  std::size_t companies = 200;
  std::size_t d_emb = 32;
  std::size_t timely_min = 4, timely_max = 24;
  std::size_t trending_min = 4, trending_max = 24;
  std::array<double, 3> priors{0.32, 0.41, 0.27};  // negative, neutral, positive
  SyntheticTask task = SyntheticTask::Separable;
  double noise_sigma = 0.5;
  std::uint64_t seed = 7;
  // Interaction task only.
  std::size_t latent_dim = 4;

  void validate() const;
  // Opinion counts of 150..300 per modality.
  void use_full_scale_lengths();
};

struct SyntheticResult {
  Dataset data;
  // Interaction task: the per-sample latent means the label was computed from.
  std::vector<std::vector<double>> timely_latent_means;
  std::vector<std::vector<double>> trending_latent_means;
  double neutral_band = 0.0;
};

// Interaction labelling rule: s < -band -> -1, s > band -> +1, otherwise 0.
int interaction_label(double inner_product, double neutral_band);

SyntheticResult generate_synthetic_detailed(const SyntheticSpec& spec);
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace fmhca

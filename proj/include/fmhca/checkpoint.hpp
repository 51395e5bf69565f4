#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fmhca/params.hpp"

namespace fmhca {

// FCKP container: "FCKP" | version u32 = 1 | tensor_count u32 | per tensor:
// name_len u32 | name | rank u32 | dims u32 x rank | f32 data. Little-endian,
// row-major. Values are stored as 32-bit floats whatever the in-memory type.
template <typename T>
std::vector<char> encode_checkpoint(std::span<const NamedTensor<T>> tensors);
ParameterSet<float> decode_checkpoint(std::vector<char> bytes);

template <typename T>
void save_checkpoint(std::span<const NamedTensor<T>> tensors, const std::filesystem::path& path);
template <typename T>
void save_checkpoint(const ParameterSet<T>& params, const std::filesystem::path& path) {
  save_checkpoint<T>(std::span<const NamedTensor<T>>(params.entries()), path);
}

// Loaded tensors are leaves with requires_grad set.
template <typename T = float>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace fmhca

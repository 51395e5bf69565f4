#include "fmhca/checkpoint.hpp"

#include <cmath>
#include <set>

#include "fmhca/binary_io.hpp"

namespace fmhca {

namespace {
constexpr std::string_view kCheckpointMagic = "FCKP";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

template <typename T>
std::vector<char> encode_checkpoint(std::span<const NamedTensor<T>> tensors) {
  std::set<std::string> seen;
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (!seen.insert(t.name).second) throw Error(ErrorCode::NameCollision, "tensor '" + t.name + "' appears twice");
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto extent : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (T v : t.tensor.values()) {
      if (!std::isfinite(static_cast<double>(v))) throw Error(ErrorCode::NonFiniteValue, "tensor '" + t.name + "'");
      w.f32(static_cast<float>(v));
    }
  }
  return w.buffer();
}

ParameterSet<float> decode_checkpoint(std::vector<char> bytes) {
  io::ByteReader r(std::move(bytes));
  if (r.remaining() < kCheckpointMagic.size() || r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(ErrorCode::BadMagic, "not a FCKP file");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "FCKP version " + std::to_string(version));
  }
  ParameterSet<float> params;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const auto rank = r.u32();
    if (rank == 0 || rank > 3) throw Error(ErrorCode::InvalidArgument, "tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    const auto n = shape_numel(shape);
    if (r.remaining() / 4 < n) throw Error(ErrorCode::TruncatedFile, "data of tensor '" + name + "'");
    std::vector<float> values(n);
    for (auto& v : values) {
      v = r.f32();
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "tensor '" + name + "'");
    }
    params.add(std::move(name), Tensor<float>(std::move(shape), std::move(values), true));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::InvalidArgument, std::to_string(r.remaining()) + " trailing bytes after FCKP payload");
  }
  return params;
}

template <typename T>
void save_checkpoint(std::span<const NamedTensor<T>> tensors, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(tensors));
}

template <typename T>
ParameterSet<T> load_checkpoint(const std::filesystem::path& path) {
  auto params = decode_checkpoint(io::read_file(path));
  if constexpr (std::is_same_v<T, float>) {
    return params;
  } else {
    return params.template convert<T>();
  }
}

template std::vector<char> encode_checkpoint(std::span<const NamedTensor<float>>);
template std::vector<char> encode_checkpoint(std::span<const NamedTensor<double>>);
template void save_checkpoint(std::span<const NamedTensor<float>>, const std::filesystem::path&);
template void save_checkpoint(std::span<const NamedTensor<double>>, const std::filesystem::path&);
template ParameterSet<float> load_checkpoint(const std::filesystem::path&);
template ParameterSet<double> load_checkpoint(const std::filesystem::path&);

}  // namespace fmhca

#pragma once

// Binary checkpoint: "OCFRCKPT", format version, network configuration, trainable
// parameter count, then per tensor: name, dims, dtype tag, trainable flag, raw data.
// Loading rebuilds the network from the stored configuration and insists that every
// name and shape matches it.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ocfr/error.hpp"
#include "ocfr/nn/network.hpp"

namespace ocfr::nn {

inline constexpr char kCheckpointMagic[8] = {'O', 'C', 'F', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <typename V>
void put(std::ostream& o, V v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V get(std::istream& in, const std::string& where) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw IoError(where + ": truncated checkpoint");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const SegmentationNet<float>& net) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw IoError(path.string() + ": cannot open for writing");
  const auto& cfg = net.config();
  const auto& ps = net.params();
  o.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(o, kCheckpointVersion);
  detail::put<std::int32_t>(o, cfg.input_height);
  detail::put<std::int32_t>(o, cfg.input_width);
  detail::put<std::int32_t>(o, cfg.width_divisor);
  detail::put<std::uint64_t>(o, ps.trainable_count());
  detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(ps.size()));
  for (const auto& p : ps) {
    for (float v : p.value)
      if (!std::isfinite(v)) throw InvalidArgument("save_checkpoint: non-finite value in " + p.name);
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(p.name.size()));
    o.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(p.shape.size()));
    for (int d : p.shape) detail::put<std::int32_t>(o, d);
    detail::put<std::uint8_t>(o, kDtypeF32);
    detail::put<std::uint8_t>(o, p.trainable ? 1 : 0);
    o.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!o) throw IoError(path.string() + ": write failed");
}

inline NetworkConfig read_checkpoint_config(std::istream& in, const std::string& where) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw IoError(where + ": not a checkpoint file");
  const auto version = detail::get<std::uint32_t>(in, where);
  if (version != kCheckpointVersion) throw IoError(where + ": unsupported checkpoint version " + std::to_string(version));
  NetworkConfig cfg;
  cfg.input_height = detail::get<std::int32_t>(in, where);
  cfg.input_width = detail::get<std::int32_t>(in, where);
  cfg.width_divisor = detail::get<std::int32_t>(in, where);
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw IoError(where + ": " + e.what());
  }
  return cfg;
}

inline SegmentationNet<float> load_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(where + ": cannot open");
  SegmentationNet<float> net(read_checkpoint_config(in, where), 0);
  auto& ps = net.params();
  const auto trainable = detail::get<std::uint64_t>(in, where);
  const auto count = detail::get<std::uint32_t>(in, where);
  if (trainable != ps.trainable_count() || count != ps.size())
    throw ShapeError(where + ": parameter count " + std::to_string(trainable) + " in " + std::to_string(count) +
                     " tensors, architecture expects " + std::to_string(ps.trainable_count()) + " in " + std::to_string(ps.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& p = ps[static_cast<int>(i)];
    const auto len = detail::get<std::uint32_t>(in, where);
    if (len > 4096) throw IoError(where + ": corrupt tensor name");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (name != p.name) throw ShapeError(where + ": tensor " + std::to_string(i) + " is '" + name + "', expected '" + p.name + "'");
    const auto ndims = detail::get<std::uint32_t>(in, where);
    if (ndims > 8) throw IoError(where + ": corrupt dims for " + name);
    std::vector<int> shape(ndims);
    for (auto& d : shape) d = detail::get<std::int32_t>(in, where);
    if (shape != p.shape) throw ShapeError(where + ": shape mismatch for " + name);
    if (detail::get<std::uint8_t>(in, where) != kDtypeF32) throw IoError(where + ": unsupported dtype for " + name);
    if ((detail::get<std::uint8_t>(in, where) != 0) != p.trainable) throw IoError(where + ": trainable flag mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!in) throw IoError(where + ": truncated data for " + name);
    for (float v : p.value)
      if (!std::isfinite(v)) throw IoError(where + ": non-finite value in " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(where + ": trailing bytes after last tensor");
  return net;
}

}  // namespace ocfr::nn

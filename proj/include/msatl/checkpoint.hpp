#pragma once

#include "msatl/model.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

namespace msatl::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'A', 'T', 'L', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::string read_str(std::istream& is) {
  std::string s(read_u64(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

}  // namespace detail

// Archive layout: magic, version, config JSON, then every registry parameter
// keyed by name with values widened to double (lossless for both scalars).
template <typename T>
void save_checkpoint(const std::filesystem::path& path, MsatlModel<T>& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_u32(os, kCheckpointVersion);
  detail::write_str(os, nlohmann::json(model.config()).dump());
  ParamRegistry<T> reg = model.params();
  detail::write_u64(os, reg.size());
  for (const auto& pr : reg) {
    detail::write_str(os, pr.name);
    detail::write_u64(os, pr.size);
    for (std::size_t j = 0; j < pr.size; ++j) {
      const double v = static_cast<double>(pr.value[j]);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

template <typename T>
MsatlModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8] = {};
  is.read(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  const std::uint32_t version = detail::read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const ModelConfig cfg = nlohmann::json::parse(detail::read_str(is)).get<ModelConfig>();
  MsatlModel<T> model(cfg);
  ParamRegistry<T> reg = model.params();
  const std::uint64_t count = detail::read_u64(is);
  if (count != reg.size())
    throw std::runtime_error("checkpoint parameter count mismatch");
  for (auto& pr : reg) {
    const std::string name = detail::read_str(is);
    if (name != pr.name)
      throw std::runtime_error("checkpoint parameter mismatch: expected " + pr.name +
                               ", found " + name);
    const std::uint64_t size = detail::read_u64(is);
    if (size != pr.size)
      throw std::runtime_error("checkpoint size mismatch for " + pr.name);
    for (std::size_t j = 0; j < pr.size; ++j) {
      double v = 0;
      is.read(reinterpret_cast<char*>(&v), sizeof v);
      pr.value[j] = static_cast<T>(v);
    }
  }
  if (!is) throw std::runtime_error("truncated checkpoint: " + path.string());
  return model;
}

// Loading against an expected configuration; any field difference is an error.
template <typename T>
MsatlModel<T> load_checkpoint(const std::filesystem::path& path,
                              const ModelConfig& expected) {
  MsatlModel<T> model = load_checkpoint<T>(path);
  if (!(model.config() == expected))
    throw std::runtime_error("checkpoint config mismatch: " + path.string());
  return model;
}

}  // namespace msatl::nn

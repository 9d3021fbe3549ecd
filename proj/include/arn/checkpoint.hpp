#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "ARN1"  u16 version
//   u64 count
//   count x { u32 name_len, name bytes (UTF-8), u32 rank, rank x u64 extent, u8 dtype }
//   payloads in manifest order, raw little-endian f32 or f64
// dtype: 0 = f32, 1 = f64.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "arn/errors.hpp"
#include "arn/networks.hpp"
#include "arn/tensor.hpp"

namespace arn {

inline constexpr std::array<char, 4> kCheckpointMagic{'A', 'R', 'N', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <class T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct CheckpointEntry {
  std::string name;
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> values;  // widened for in-memory handling
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put(std::ostream& os, U v) {
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <class U>
U get(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) {
    throw IoError("checkpoint: truncated file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U v;
  std::memcpy(&v, bytes.data(), sizeof(U));
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const std::vector<CheckpointEntry>& entries) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint16_t>(os, kCheckpointVersion);
  detail::put<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    if (numel(e.shape) != e.values.size()) throw ShapeError("checkpoint: entry " + e.name + " size mismatch");
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t x : e.shape) detail::put<std::uint64_t>(os, x);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
  }
  for (const auto& e : entries) {
    for (double v : e.values) {
      if (e.dtype == DType::f32) {
        detail::put<float>(os, static_cast<float>(v));
      } else {
        detail::put<double>(os, v);
      }
    }
  }
  if (!os) throw IoError("checkpoint: write failed");
}

inline std::vector<CheckpointEntry> read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw IoError("checkpoint: bad magic");
  }
  const auto version = detail::get<std::uint16_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = detail::get<std::uint64_t>(is);
  if (count > (1u << 20)) throw IoError("checkpoint: implausible entry count");
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    const auto len = detail::get<std::uint32_t>(is);
    e.name.resize(len);
    if (len > 0 && !is.read(e.name.data(), len)) throw IoError("checkpoint: truncated name");
    const auto rank = detail::get<std::uint32_t>(is);
    if (rank > 16) throw IoError("checkpoint: implausible rank");
    e.shape.resize(rank);
    for (auto& x : e.shape) x = detail::get<std::uint64_t>(is);
    const auto tag = detail::get<std::uint8_t>(is);
    if (tag > 1) throw IoError("checkpoint: unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
  }
  for (auto& e : entries) {
    e.values.resize(numel(e.shape));
    for (auto& v : e.values) {
      v = e.dtype == DType::f32 ? static_cast<double>(detail::get<float>(is)) : detail::get<double>(is);
    }
  }
  return entries;
}

template <class T>
CheckpointEntry to_entry(std::string name, const Tensor<T>& t) {
  return {std::move(name), t.shape(), dtype_of<T>(),
          std::vector<double>(t.data().begin(), t.data().end())};
}

// Model file: every named parameter plus "meta/dims" (vocab, seq_len, embed,
// hidden, latent, disc_hidden) and any caller-supplied extra entries.
template <class T>
std::vector<CheckpointEntry> model_entries(const ArnModel<T>& model,
                                           const std::vector<CheckpointEntry>& extras = {}) {
  const auto& d = model.dims;
  std::vector<CheckpointEntry> out;
  out.push_back({"meta/dims", {6}, DType::f64,
                 {double(d.vocab), double(d.seq_len), double(d.embed), double(d.hidden),
                  double(d.latent), double(d.disc_hidden)}});
  for (const auto& p : model.parameters()) out.push_back(to_entry(p.name, p.tensor));
  for (const auto& e : extras) out.push_back(e);
  return out;
}

template <class T>
void save_model(const std::filesystem::path& path, const ArnModel<T>& model,
                const std::vector<CheckpointEntry>& extras = {}) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, model_entries(model, extras));
}

template <class T>
struct LoadedModel {
  ArnModel<T> model;
  std::map<std::string, CheckpointEntry> extras;
};

template <class T>
LoadedModel<T> model_from_entries(const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto dims_it = by_name.find("meta/dims");
  if (dims_it == by_name.end() || dims_it->second->values.size() != 6) {
    throw IoError("checkpoint: missing meta/dims");
  }
  const auto& dv = dims_it->second->values;
  const ModelDims d{std::size_t(dv[0]), std::size_t(dv[1]), std::size_t(dv[2]),
                    std::size_t(dv[3]), std::size_t(dv[4]), std::size_t(dv[5])};
  LoadedModel<T> out{ArnModel<T>::zeros(d), {}};
  std::map<std::string, bool> used;
  for (auto& p : out.model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw IoError("checkpoint: missing tensor " + p.name);
    if (it->second->shape != p.tensor.shape()) {
      throw ShapeError("checkpoint: tensor " + p.name + " has shape " + to_string(it->second->shape) +
                       ", expected " + to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
    used[p.name] = true;
  }
  for (const auto& e : entries) {
    if (e.name != "meta/dims" && !used.count(e.name)) out.extras[e.name] = e;
  }
  return out;
}

template <class T>
LoadedModel<T> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return model_from_entries<T>(read_checkpoint(is));
}

}  // namespace arn

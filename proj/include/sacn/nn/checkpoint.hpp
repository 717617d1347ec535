#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "SACNCKPT" u32 version u32 dtype(1=f32, 2=f64) u64 param_count
//   per parameter: u32 name_len, name bytes, u32 rank, u64 dims[rank], values (row-major)
//   "ADAMSTAT" u64 step f64 lr f64 beta1 f64 beta2 f64 eps u64 count
//   per parameter: u32 name_len, name bytes, m values, v values
//   "METADATA" u64 len, bytes

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "sacn/error.hpp"
#include "sacn/nn/adam.hpp"
#include "sacn/nn/parameter.hpp"

namespace sacn::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'A', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::array<char, 8> kAdamMagic{'A', 'D', 'A', 'M', 'S', 'T', 'A', 'T'};
inline constexpr std::array<char, 8> kMetadataMagic{'M', 'E', 'T', 'A', 'D', 'A', 'T', 'A'};

template <typename T>
constexpr std::uint32_t dtype_code() {
  if constexpr (std::is_same_v<T, float>) return 1;
  else if constexpr (std::is_same_v<T, double>) return 2;
  else static_assert(sizeof(T) == 0, "unsupported checkpoint dtype");
}

namespace detail {

template <typename U>
void write_le(std::ostream& os, U value) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  static_assert(sizeof(U) == sizeof(Bits));
  auto bits = std::bit_cast<Bits>(value);
  std::array<char, sizeof(Bits)> bytes;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& is) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  std::array<unsigned char, sizeof(Bits)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw IoError("checkpoint truncated");
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) bits |= static_cast<Bits>(bytes[i]) << (8 * i);
  return std::bit_cast<U>(bits);
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_le<std::uint32_t>(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw IoError("checkpoint truncated");
  return s;
}

inline void expect_magic(std::istream& is, const std::array<char, 8>& magic) {
  std::array<char, 8> got{};
  if (!is.read(got.data(), got.size()) || got != magic) {
    throw ValidationError("bad checkpoint section marker, expected " + std::string(magic.data(), magic.size()));
  }
}

template <typename T>
void write_values(std::ostream& os, const Matrix<T>& m) {
  for (T v : m.values()) write_le<T>(os, v);
}

template <typename T>
void read_values(std::istream& is, Matrix<T>& m) {
  for (auto& v : m.values()) v = read_le<T>(is);
}

}  // namespace detail

template <typename T>
void save_checkpoint(std::ostream& os, const std::vector<Parameter<T>*>& params, const Adam<T>* adam,
                     const std::string& metadata) {
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, dtype_code<T>());
  detail::write_le<std::uint64_t>(os, params.size());
  for (const auto* p : params) {
    detail::write_string(os, p->name);
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->dims.size()));
    for (auto d : p->dims) detail::write_le<std::uint64_t>(os, d);
    detail::write_values(os, p->value);
  }

  os.write(kAdamMagic.data(), kAdamMagic.size());
  const AdamConfig cfg = adam ? adam->config() : AdamConfig{};
  detail::write_le<std::uint64_t>(os, adam ? adam->step_count() : 0);
  detail::write_le<double>(os, cfg.learning_rate);
  detail::write_le<double>(os, cfg.beta1);
  detail::write_le<double>(os, cfg.beta2);
  detail::write_le<double>(os, cfg.eps);
  detail::write_le<std::uint64_t>(os, adam ? adam->moments().size() : 0);
  if (adam) {
    for (const auto& mo : adam->moments()) {
      detail::write_string(os, mo.name);
      detail::write_values(os, mo.m);
      detail::write_values(os, mo.v);
    }
  }

  os.write(kMetadataMagic.data(), kMetadataMagic.size());
  detail::write_le<std::uint64_t>(os, metadata.size());
  os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  if (!os) throw IoError("checkpoint write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter<T>*>& params,
                     const Adam<T>* adam, const std::string& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  save_checkpoint(out, params, adam, metadata);
}

/// Reads the dtype code and metadata block without touching any parameters.
struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t dtype = 0;
  std::string metadata;
};

inline CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  detail::expect_magic(is, kCheckpointMagic);
  CheckpointHeader h;
  h.version = detail::read_le<std::uint32_t>(is);
  h.dtype = detail::read_le<std::uint32_t>(is);
  if (h.version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(h.version));
  const std::size_t width = h.dtype == 1 ? 4 : h.dtype == 2 ? 8 : 0;
  if (width == 0) throw ValidationError("unknown checkpoint dtype code " + std::to_string(h.dtype));
  const auto count = detail::read_le<std::uint64_t>(is);
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t k = 0; k < count; ++k) {
    detail::read_string(is);
    const auto rank = detail::read_le<std::uint32_t>(is);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) n *= detail::read_le<std::uint64_t>(is);
    is.seekg(static_cast<std::streamoff>(n * width), std::ios::cur);
    sizes.push_back(n);
  }
  detail::expect_magic(is, kAdamMagic);
  detail::read_le<std::uint64_t>(is);
  for (int i = 0; i < 4; ++i) detail::read_le<double>(is);
  const auto moments = detail::read_le<std::uint64_t>(is);
  if (moments != 0 && moments != count) throw ValidationError("adam section size mismatch");
  for (std::uint64_t k = 0; k < moments; ++k) {
    detail::read_string(is);
    is.seekg(static_cast<std::streamoff>(2 * sizes[k] * width), std::ios::cur);
  }
  detail::expect_magic(is, kMetadataMagic);
  const auto len = detail::read_le<std::uint64_t>(is);
  h.metadata.resize(len);
  if (len && !is.read(h.metadata.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint truncated");
  return h;
}

/// Loads values into existing parameters (matched by order and name, shapes must agree)
/// and, when `adam` is given, restores its moments. Returns the metadata block.
template <typename T>
std::string load_checkpoint(std::istream& is, const std::vector<Parameter<T>*>& params, Adam<T>* adam) {
  detail::expect_magic(is, kCheckpointMagic);
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto dtype = detail::read_le<std::uint32_t>(is);
  if (dtype != dtype_code<T>()) throw ValidationError("checkpoint dtype code " + std::to_string(dtype) + " does not match");
  const auto count = detail::read_le<std::uint64_t>(is);
  if (count != params.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  for (auto* p : params) {
    const auto name = detail::read_string(is);
    if (name != p->name) throw ValidationError("checkpoint parameter '" + name + "' where '" + p->name + "' expected");
    const auto rank = detail::read_le<std::uint32_t>(is);
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = detail::read_le<std::uint64_t>(is);
    if (dims != p->dims) throw ValidationError("shape mismatch for checkpoint parameter '" + name + "'");
    detail::read_values(is, p->value);
  }

  detail::expect_magic(is, kAdamMagic);
  const auto step = detail::read_le<std::uint64_t>(is);
  for (int i = 0; i < 4; ++i) detail::read_le<double>(is);
  const auto moments = detail::read_le<std::uint64_t>(is);
  if (moments != 0 && moments != params.size()) throw ValidationError("adam section size mismatch");
  std::vector<typename Adam<T>::Moments> restored;
  for (std::uint64_t k = 0; k < moments; ++k) {
    typename Adam<T>::Moments mo{detail::read_string(is), Matrix<T>(params[k]->value.rows(), params[k]->value.cols()),
                                 Matrix<T>(params[k]->value.rows(), params[k]->value.cols())};
    detail::read_values(is, mo.m);
    detail::read_values(is, mo.v);
    restored.push_back(std::move(mo));
  }
  if (adam && moments != 0) adam->restore(step, std::move(restored));

  detail::expect_magic(is, kMetadataMagic);
  const auto len = detail::read_le<std::uint64_t>(is);
  std::string metadata(len, '\0');
  if (len && !is.read(metadata.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint truncated");
  return metadata;
}

template <typename T>
std::string load_checkpoint(const std::filesystem::path& path, const std::vector<Parameter<T>*>& params,
                            Adam<T>* adam) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return load_checkpoint(in, params, adam);
}

}  // namespace sacn::nn

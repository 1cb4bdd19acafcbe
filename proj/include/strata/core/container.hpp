#pragma once

// Binary container used for datasets, stack checkpoints and diffusion
// checkpoints.
//
// Layout (all integers little-endian):
//   char[8]   magic "STRATAC1"
//   u32       container format version
//   u64       metadata length in bytes, followed by UTF-8 JSON metadata
//   u32       array count, then per array:
//     u32 name length, name bytes
//     u8  dtype (0 = f32, 1 = f64, 2 = i32)
//     u32 rank, u64 dims[rank]
//     raw element data, row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "strata/core/error.hpp"

namespace strata {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

inline constexpr char kContainerMagic[8] = {'S', 'T', 'R', 'A', 'T', 'A', 'C', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

struct Array {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::int32_t>> data;

  std::size_t size() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
  }
  template <class T>
  const std::vector<T>& as() const {
    if (const auto* v = std::get_if<std::vector<T>>(&data)) return *v;
    throw FormatError("container", "array has unexpected element type");
  }
};

struct Container {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Array> arrays;

  template <class T>
  void put(const std::string& name, std::vector<std::uint64_t> dims, std::vector<T> values) {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    if (n != values.size()) throw FormatError("container", "dims do not match data for '" + name + "'");
    arrays[name] = Array{std::move(dims), std::move(values)};
  }

  const Array& get(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError("container", "missing array '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return arrays.count(name) != 0; }
};

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("container", "truncated file");
  return v;
}

}  // namespace detail

inline void write_container(const std::filesystem::path& path, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("container", "cannot open '" + path.string() + "' for writing");
  os.write(kContainerMagic, 8);
  detail::write_pod(os, kContainerVersion);
  const std::string meta = c.meta.dump();
  detail::write_pod(os, static_cast<std::uint64_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::write_pod(os, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& [name, arr] : c.arrays) {
    detail::write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    std::visit(
        [&](const auto& v) {
          using T = typename std::decay_t<decltype(v)>::value_type;
          std::uint8_t dtype = std::is_same_v<T, float> ? 0 : std::is_same_v<T, double> ? 1 : 2;
          detail::write_pod(os, dtype);
          detail::write_pod(os, static_cast<std::uint32_t>(arr.dims.size()));
          for (auto d : arr.dims) detail::write_pod(os, d);
          os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
        },
        arr.data);
  }
  if (!os) throw FormatError("container", "write failed for '" + path.string() + "'");
}

inline Container read_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("container", "cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kContainerMagic, 8) != 0)
    throw FormatError("container", "'" + path.string() + "' is not a strata container");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kContainerVersion)
    throw FormatError("container", "unsupported container version " + std::to_string(version));
  Container c;
  const auto meta_len = detail::read_pod<std::uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  c.meta = nlohmann::json::parse(meta);
  const auto n = detail::read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto dtype = detail::read_pod<std::uint8_t>(is);
    const auto rank = detail::read_pod<std::uint32_t>(is);
    Array arr;
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      arr.dims.push_back(detail::read_pod<std::uint64_t>(is));
      count *= arr.dims.back();
    }
    auto read_vec = [&](auto tag) {
      using T = decltype(tag);
      std::vector<T> v(count);
      is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
      if (!is) throw FormatError("container", "truncated array '" + name + "'");
      arr.data = std::move(v);
    };
    switch (dtype) {
      case 0: read_vec(float{}); break;
      case 1: read_vec(double{}); break;
      case 2: read_vec(std::int32_t{}); break;
      default: throw FormatError("container", "unknown dtype in array '" + name + "'");
    }
    c.arrays.emplace(std::move(name), std::move(arr));
  }
  return c;
}

}  // namespace strata

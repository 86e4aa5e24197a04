#pragma once

// Little-endian primitives shared by the index and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "altboot/error.hpp"

namespace altboot::binio {

template <class T>
T to_little(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <class T>
void write(std::ostream& out, T value) {
  value = to_little(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read(std::istream& in, std::string_view what) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError(std::string(what) + ": truncated file");
  }
  return to_little(value);
}

inline void write_string(std::ostream& out, std::string_view s) {
  write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::string_view what) {
  auto n = read<std::uint32_t>(in, what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw DataError(std::string(what) + ": truncated file");
  return s;
}

template <class T>
void write_array(std::ostream& out, const std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
  } else {
    for (const auto& v : values) write(out, v);
  }
}

template <class T>
std::vector<T> read_array(std::istream& in, std::size_t count, std::string_view what) {
  std::vector<T> values(count);
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(count * sizeof(T)))) {
    throw DataError(std::string(what) + ": truncated file");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : values) v = to_little(v);
  }
  return values;
}

inline void expect_magic(std::istream& in, std::string_view magic, std::string_view what) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw DataError(std::string(what) + ": bad magic, expected \"" + std::string(magic) + "\"");
  }
}

/// Errors unless the stream is exhausted.
inline void expect_end(std::istream& in, std::string_view what) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(std::string(what) + ": trailing bytes after payload");
  }
}

}  // namespace altboot::binio

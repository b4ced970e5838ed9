#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vaultor {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

template <std::size_t N>
using FixedBytes = std::array<std::uint8_t, N>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) {
  auto view = as_bytes(s);
  return {view.begin(), view.end()};
}

inline std::string to_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

void append(Bytes& out, ByteView more);
Bytes concat(ByteView a, ByteView b);

std::string hex_encode(ByteView data);
/// Throws Error(kMalformedMessage) on odd length or non-hex characters.
Bytes hex_decode(std::string_view hex);

std::string base64_encode(ByteView data);
/// Strict RFC 4648 decoding: padding required, non-zero trailing bits and
/// characters outside the alphabet are rejected, so every byte string has
/// exactly one accepted encoding.
Bytes base64_decode(std::string_view text);

/// Lower-case RFC 4648 base32 without padding.
std::string base32_encode(ByteView data);

/// True when `needle` occurs as a contiguous run inside `haystack`.
bool contains_subsequence(ByteView haystack, ByteView needle);

/// Best-effort zeroisation of secret buffers.
void secure_wipe(std::span<std::uint8_t> data);

template <std::size_t N>
FixedBytes<N> to_fixed(ByteView b);

}  // namespace vaultor

#include "vaultor/error.hpp"

namespace vaultor {

template <std::size_t N>
FixedBytes<N> to_fixed(ByteView b) {
  if (b.size() != N) {
    fail(ErrorCode::kMalformedMessage,
         "expected " + std::to_string(N) + " bytes, got " + std::to_string(b.size()));
  }
  FixedBytes<N> out{};
  std::copy(b.begin(), b.end(), out.begin());
  return out;
}

}  // namespace vaultor

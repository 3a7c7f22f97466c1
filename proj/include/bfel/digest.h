#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "bfel/bytes.h"

namespace bfel {

/// SHA-256 output.
using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);
Digest hmac_sha256(std::span<const std::uint8_t> key,
                   std::span<const std::uint8_t> message);

std::string to_hex(std::span<const std::uint8_t> data);
// Throws DecodeError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
Digest digest_from_hex(std::string_view hex);

inline constexpr Digest kZeroDigest{};

}  // namespace bfel

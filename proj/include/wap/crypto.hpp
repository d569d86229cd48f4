#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "wap/bytes.hpp"

namespace wap::crypto {

using Digest = std::array<std::uint8_t, 32>;

Digest hmac_sha256(BytesView key, BytesView data);

/// HMAC-SHA256 in counter mode: block i = HMAC(key, nonce || u32(i)).
Bytes keystream(BytesView key, std::uint32_t nonce, std::size_t length);

/// Constant-time comparison of equal-length tags.
bool equal_tags(BytesView a, BytesView b);

void random_bytes(std::span<std::uint8_t> out);

}  // namespace wap::crypto

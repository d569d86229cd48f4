#include "wap/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <stdexcept>

namespace wap::crypto {

Digest hmac_sha256(BytesView key, BytesView data) {
  Digest out{};
  unsigned int len = 0;
  static const std::uint8_t kEmpty = 0;
  if (HMAC(EVP_sha256(), key.empty() ? &kEmpty : key.data(), static_cast<int>(key.size()),
           data.empty() ? &kEmpty : data.data(), data.size(), out.data(), &len) == nullptr ||
      len != out.size())
    throw std::runtime_error("HMAC-SHA256 failed");
  return out;
}

Bytes keystream(BytesView key, std::uint32_t nonce, std::size_t length) {
  Bytes out;
  out.reserve(length + 32);
  Bytes block_input;
  for (std::uint32_t counter = 0; out.size() < length; ++counter) {
    block_input.clear();
    put_u32(block_input, nonce);
    put_u32(block_input, counter);
    const Digest block = hmac_sha256(key, block_input);
    out.insert(out.end(), block.begin(), block.end());
  }
  out.resize(length);
  return out;
}

bool equal_tags(BytesView a, BytesView b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

void random_bytes(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
    throw std::runtime_error("RAND_bytes failed");
}

}  // namespace wap::crypto

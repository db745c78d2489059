#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vmon::crypto {

using Digest = std::array<std::uint8_t, 32>;
using Key = std::array<std::uint8_t, 32>;

constexpr std::size_t kNonceBytes = 12;
constexpr std::size_t kTagBytes = 16;
using Nonce = std::array<std::uint8_t, kNonceBytes>;
using Tag = std::array<std::uint8_t, kTagBytes>;

Digest sha256(std::span<const std::uint8_t> bytes);
Digest sha256(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);  // throws std::invalid_argument

struct Sealed {
    std::vector<std::uint8_t> ciphertext;
    Tag tag;
};

// AES-256-GCM. The associated data is authenticated but not encrypted; any
// modification of ciphertext, tag, nonce, or aad fails decryption.
Sealed aead_seal(const Key& key, const Nonce& nonce, std::span<const std::uint8_t> aad,
                 std::span<const std::uint8_t> plaintext);

/// nullopt on authentication failure.
std::optional<std::vector<std::uint8_t>> aead_open(const Key& key, const Nonce& nonce,
                                                   std::span<const std::uint8_t> aad,
                                                   std::span<const std::uint8_t> ciphertext,
                                                   const Tag& tag);

/// Deterministic 256-bit key derivation for simulated pre-shared keys.
Key derive_key(std::uint64_t master_seed, std::uint16_t unit_id);

}  // namespace vmon::crypto

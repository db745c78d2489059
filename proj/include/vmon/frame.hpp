#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vmon/crypto.hpp"

namespace vmon {

// Wire layout (all integers big-endian):
//   magic "VSTR" | version u8 (=1) | msg_type u8 | unit_id u16 |
//   name_len u16 | name UTF-8 | payload_len u32 | payload
enum class MsgType : std::uint8_t {
    File = 1,
    Ack = 2,
    FaultBroadcast = 3,
    RegisterTu = 4,
};

enum class FrameErrorCode { BadMagic, BadVersion, UnknownType, Truncated, LengthMismatch };

struct FrameError : std::runtime_error {
    FrameErrorCode code;
    FrameError(FrameErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
};

struct Frame {
    MsgType msg_type = MsgType::File;
    std::uint16_t unit_id = 0;
    std::string name;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

constexpr std::size_t kFrameFixedHeader = 10;  // magic + version + type + unit + name_len

std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Decodes one frame occupying the whole buffer. Throws FrameError.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// At-rest / in-flight encrypted container. Serialized as
//   key_id u16 BE | nonce 12B | tag 16B | ciphertext
// The key_id is authenticated as AEAD associated data, so modifying any field
// fails decryption.
struct EncryptedBlob {
    std::uint16_t key_id = 0;
    crypto::Nonce nonce{};
    crypto::Tag tag{};
    std::vector<std::uint8_t> ciphertext;
};

constexpr std::size_t kBlobHeaderBytes = 2 + crypto::kNonceBytes + crypto::kTagBytes;

std::vector<std::uint8_t> encode_blob(const EncryptedBlob& blob);
EncryptedBlob decode_blob(std::span<const std::uint8_t> bytes);  // throws std::invalid_argument

/// Counter-based nonce: key_id | 2 zero bytes | counter u64 BE.
crypto::Nonce make_nonce(std::uint16_t key_id, std::uint64_t counter);

EncryptedBlob encrypt_blob(const crypto::Key& key, std::uint16_t key_id, std::uint64_t nonce_counter,
                           std::span<const std::uint8_t> plaintext);
EncryptedBlob encrypt_blob(const crypto::Key& key, std::uint16_t key_id, std::uint64_t nonce_counter,
                           std::string_view plaintext);

/// nullopt on authentication failure.
std::optional<std::vector<std::uint8_t>> decrypt_blob(const crypto::Key& key, const EncryptedBlob& blob);

}  // namespace vmon

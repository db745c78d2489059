#include "vmon/frame.hpp"

#include <algorithm>
#include <cstring>

namespace vmon {

namespace {

constexpr char kMagic[4] = {'V', 'S', 'T', 'R'};
constexpr std::uint8_t kVersion = 1;

bool known_type(std::uint8_t t) {
    return t >= static_cast<std::uint8_t>(MsgType::File) &&
           t <= static_cast<std::uint8_t>(MsgType::RegisterTu);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.name.size() > 0xffff) throw std::invalid_argument("frame name too long");
    if (frame.payload.size() > 0xffffffffull) throw std::invalid_argument("frame payload too long");

    std::vector<std::uint8_t> out;
    out.reserve(kFrameFixedHeader + frame.name.size() + 4 + frame.payload.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(kVersion);
    out.push_back(static_cast<std::uint8_t>(frame.msg_type));
    out.push_back(static_cast<std::uint8_t>(frame.unit_id >> 8));
    out.push_back(static_cast<std::uint8_t>(frame.unit_id));
    const auto name_len = static_cast<std::uint16_t>(frame.name.size());
    out.push_back(static_cast<std::uint8_t>(name_len >> 8));
    out.push_back(static_cast<std::uint8_t>(name_len));
    out.insert(out.end(), frame.name.begin(), frame.name.end());
    const auto payload_len = static_cast<std::uint32_t>(frame.payload.size());
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(payload_len >> s));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameFixedHeader)
        throw FrameError(FrameErrorCode::Truncated, "frame shorter than fixed header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FrameError(FrameErrorCode::BadMagic, "bad magic");
    if (bytes[4] != kVersion)
        throw FrameError(FrameErrorCode::BadVersion, "unsupported version " + std::to_string(bytes[4]));
    if (!known_type(bytes[5]))
        throw FrameError(FrameErrorCode::UnknownType, "unknown msg_type " + std::to_string(bytes[5]));

    Frame frame;
    frame.msg_type = static_cast<MsgType>(bytes[5]);
    frame.unit_id = static_cast<std::uint16_t>(bytes[6] << 8 | bytes[7]);
    const std::size_t name_len = static_cast<std::size_t>(bytes[8] << 8 | bytes[9]);

    std::size_t pos = kFrameFixedHeader;
    if (bytes.size() < pos + name_len + 4)
        throw FrameError(FrameErrorCode::Truncated, "frame truncated in name/payload_len");
    frame.name.assign(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;

    std::uint32_t payload_len = 0;
    for (int i = 0; i < 4; ++i) payload_len = payload_len << 8 | bytes[pos + i];
    pos += 4;

    if (bytes.size() < pos + payload_len)
        throw FrameError(FrameErrorCode::Truncated, "frame truncated in payload");
    if (bytes.size() > pos + payload_len)
        throw FrameError(FrameErrorCode::LengthMismatch, "trailing bytes after payload");
    frame.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return frame;
}

std::vector<std::uint8_t> encode_blob(const EncryptedBlob& blob) {
    std::vector<std::uint8_t> out;
    out.reserve(kBlobHeaderBytes + blob.ciphertext.size());
    out.push_back(static_cast<std::uint8_t>(blob.key_id >> 8));
    out.push_back(static_cast<std::uint8_t>(blob.key_id));
    out.insert(out.end(), blob.nonce.begin(), blob.nonce.end());
    out.insert(out.end(), blob.tag.begin(), blob.tag.end());
    out.insert(out.end(), blob.ciphertext.begin(), blob.ciphertext.end());
    return out;
}

EncryptedBlob decode_blob(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kBlobHeaderBytes) throw std::invalid_argument("blob shorter than header");
    EncryptedBlob blob;
    blob.key_id = static_cast<std::uint16_t>(bytes[0] << 8 | bytes[1]);
    std::copy_n(bytes.begin() + 2, crypto::kNonceBytes, blob.nonce.begin());
    std::copy_n(bytes.begin() + 2 + crypto::kNonceBytes, crypto::kTagBytes, blob.tag.begin());
    blob.ciphertext.assign(bytes.begin() + kBlobHeaderBytes, bytes.end());
    return blob;
}

crypto::Nonce make_nonce(std::uint16_t key_id, std::uint64_t counter) {
    crypto::Nonce nonce{};
    nonce[0] = static_cast<std::uint8_t>(key_id >> 8);
    nonce[1] = static_cast<std::uint8_t>(key_id);
    for (int i = 0; i < 8; ++i) nonce[4 + i] = static_cast<std::uint8_t>(counter >> (56 - 8 * i));
    return nonce;
}

EncryptedBlob encrypt_blob(const crypto::Key& key, std::uint16_t key_id, std::uint64_t nonce_counter,
                           std::span<const std::uint8_t> plaintext) {
    EncryptedBlob blob;
    blob.key_id = key_id;
    blob.nonce = make_nonce(key_id, nonce_counter);
    const std::uint8_t aad[2] = {static_cast<std::uint8_t>(key_id >> 8),
                                 static_cast<std::uint8_t>(key_id)};
    auto sealed = crypto::aead_seal(key, blob.nonce, aad, plaintext);
    blob.ciphertext = std::move(sealed.ciphertext);
    blob.tag = sealed.tag;
    return blob;
}

EncryptedBlob encrypt_blob(const crypto::Key& key, std::uint16_t key_id, std::uint64_t nonce_counter,
                           std::string_view plaintext) {
    return encrypt_blob(key, key_id, nonce_counter,
                        std::span(reinterpret_cast<const std::uint8_t*>(plaintext.data()), plaintext.size()));
}

std::optional<std::vector<std::uint8_t>> decrypt_blob(const crypto::Key& key, const EncryptedBlob& blob) {
    const std::uint8_t aad[2] = {static_cast<std::uint8_t>(blob.key_id >> 8),
                                 static_cast<std::uint8_t>(blob.key_id)};
    return crypto::aead_open(key, blob.nonce, aad, blob.ciphertext, blob.tag);
}

}  // namespace vmon

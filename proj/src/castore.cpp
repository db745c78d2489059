#include "vmon/castore.hpp"

namespace vmon {

ContentHash ContentHash::of(std::span<const std::uint8_t> bytes) {
    return ContentHash{crypto::sha256(bytes)};
}

ContentHash ContentHash::of(std::string_view bytes) {
    return ContentHash{crypto::sha256(bytes)};
}

std::string ContentHash::to_text() const {
    return "ch1-" + crypto::to_hex(digest);
}

ContentHash ContentHash::parse(std::string_view text) {
    if (text.size() != 68 || text.substr(0, 4) != "ch1-")
        throw std::invalid_argument("bad content hash: " + std::string(text));
    auto raw = crypto::from_hex(text.substr(4));
    ContentHash h;
    std::copy(raw.begin(), raw.end(), h.digest.begin());
    return h;
}

ContentHash PeerStore::add(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw std::invalid_argument("empty payload");
    ContentHash hash = ContentHash::of(bytes);
    std::unique_lock lock(mutex_);
    objects_.try_emplace(hash, StoredObject{hash, {bytes.begin(), bytes.end()}});
    return hash;
}

ContentHash PeerStore::add(std::string_view bytes) {
    return add(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

bool PeerStore::holds(const ContentHash& hash) const {
    std::shared_lock lock(mutex_);
    return objects_.contains(hash);
}

std::vector<std::uint8_t> PeerStore::fetch(const ContentHash& hash) const {
    std::vector<std::uint8_t> bytes;
    {
        std::shared_lock lock(mutex_);
        auto it = objects_.find(hash);
        if (it == objects_.end())
            throw NotFoundError("object not held: " + hash.to_text());
        bytes = it->second.bytes;
    }
    if (ContentHash::of(bytes) != hash)
        throw IntegrityError("stored bytes do not match " + hash.to_text());
    return bytes;
}

void PeerStore::remove(const ContentHash& hash) {
    std::unique_lock lock(mutex_);
    objects_.erase(hash);
}

std::size_t PeerStore::object_count() const {
    std::shared_lock lock(mutex_);
    return objects_.size();
}

void PeerStore::corrupt(const ContentHash& hash, std::size_t offset, std::uint8_t xor_mask) {
    std::unique_lock lock(mutex_);
    auto it = objects_.find(hash);
    if (it == objects_.end()) throw NotFoundError("object not held: " + hash.to_text());
    auto& bytes = it->second.bytes;
    bytes.at(offset % bytes.size()) ^= xor_mask;
}

// Raw copy used by pin: no verification here, the caller verifies the copy.
std::vector<std::uint8_t> pin_raw(const PeerStore& from, const ContentHash& hash) {
    std::shared_lock lock(from.mutex_);
    auto it = from.objects_.find(hash);
    if (it == from.objects_.end())
        throw NotFoundError("pin source does not hold " + hash.to_text());
    return it->second.bytes;
}

std::vector<std::uint8_t> StoreNetwork::get(const ContentHash& hash) const {
    for (PeerStore* p : peers_) {
        if (!p->holds(hash)) continue;
        return p->fetch(hash);  // IntegrityError propagates: tampering signal
    }
    throw NotFoundError("no peer holds " + hash.to_text());
}

void pin(const PeerStore& from, PeerStore& to, const ContentHash& hash) {
    auto bytes = pin_raw(from, hash);
    if (ContentHash::of(bytes) != hash)
        throw IntegrityError("pin source bytes do not match " + hash.to_text());
    to.add(bytes);
}

}  // namespace vmon

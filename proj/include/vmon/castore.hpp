#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vmon/crypto.hpp"

namespace vmon {

struct StoreError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotFoundError : StoreError {
    using StoreError::StoreError;
};
/// A store returned bytes whose hash does not match the requested one.
struct IntegrityError : StoreError {
    using StoreError::StoreError;
};

// Content address: SHA-256 over the object bytes, rendered as
// "ch1-" + 64 lowercase hex characters (68 characters total).
struct ContentHash {
    crypto::Digest digest{};

    static ContentHash of(std::span<const std::uint8_t> bytes);
    static ContentHash of(std::string_view bytes);
    static ContentHash parse(std::string_view text);  // throws std::invalid_argument

    std::string to_text() const;

    auto operator<=>(const ContentHash&) const = default;
};

struct StoredObject {
    ContentHash hash;
    std::vector<std::uint8_t> bytes;

    std::size_t size() const { return bytes.size(); }
};

// One peer's local object map. Concurrent reads share the lock; add/pin-style
// writes take it exclusively.
class PeerStore {
  public:
    explicit PeerStore(std::uint16_t peer_id) : peer_id_(peer_id) {}

    std::uint16_t peer_id() const { return peer_id_; }

    // Stores bytes under their content hash. Idempotent: re-adding identical
    // bytes returns the same hash and leaves the store unchanged.
    // Throws std::invalid_argument on an empty payload.
    ContentHash add(std::span<const std::uint8_t> bytes);
    ContentHash add(std::string_view bytes);

    bool holds(const ContentHash& hash) const;

    // Returns the object bytes after re-hashing them against the key; throws
    // NotFoundError / IntegrityError.
    std::vector<std::uint8_t> fetch(const ContentHash& hash) const;

    void remove(const ContentHash& hash);
    std::size_t object_count() const;

    /// Fault-injection hook: XORs one stored byte in place (simulated tampering).
    void corrupt(const ContentHash& hash, std::size_t offset, std::uint8_t xor_mask);

  private:
    friend std::vector<std::uint8_t> pin_raw(const PeerStore&, const ContentHash&);

    std::uint16_t peer_id_;
    mutable std::shared_mutex mutex_;
    std::map<ContentHash, StoredObject> objects_;
};

// The set of peers participating in content lookup. Holds non-owning
// references; peers must outlive the network view.
class StoreNetwork {
  public:
    void add_peer(PeerStore& store) { peers_.push_back(&store); }

    // Fetches the payload from any peer holding the hash, re-verifying the
    // content hash before returning. Throws NotFoundError when no peer holds
    // it and IntegrityError when a holder returns tampered bytes.
    std::vector<std::uint8_t> get(const ContentHash& hash) const;

    std::size_t peer_count() const { return peers_.size(); }
    PeerStore& peer(std::size_t i) const { return *peers_.at(i); }

  private:
    std::vector<PeerStore*> peers_;
};

// Replicates an object between peers. Idempotent; verifies content on copy.
// Throws NotFoundError when the source does not hold the hash.
void pin(const PeerStore& from, PeerStore& to, const ContentHash& hash);

}  // namespace vmon

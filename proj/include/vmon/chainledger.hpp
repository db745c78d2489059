#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vmon/castore.hpp"

namespace vmon {

struct LedgerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InsufficientBalanceError : LedgerError {
    using LedgerError::LedgerError;
};
/// First-writer-wins: the file name is already registered by another sender.
struct NameOwnedError : LedgerError {
    using LedgerError::LedgerError;
};
struct UnregisteredNameError : LedgerError {
    using LedgerError::LedgerError;
};

struct GasSchedule {
    std::uint64_t g_base = 93'357;   // per transaction
    std::uint64_t g_hash = 40'000;   // per registered hash entry
    std::uint64_t g_addr = 20'372;   // per stored policy address

    void validate() const;
};

// Calibration dataset: observed registration gas (one hash entry) per policy
// size in a 10-peer network. Symmetric around size 5 because only the smaller
// of allow/deny lists is stored.
std::span<const std::pair<std::uint32_t, std::uint64_t>> reference_gas_observations();

enum class PolicyMode : std::uint8_t { AllowList = 0, DenyList = 1 };

struct AccessPolicy {
    PolicyMode mode = PolicyMode::DenyList;
    std::vector<std::uint16_t> ids;  // sorted ascending, unique
    std::uint16_t network_size = 0;

    /// Membership under the policy alone; ownership is handled by the chain.
    bool allows(std::uint16_t peer) const;

    bool operator==(const AccessPolicy&) const = default;
};

/// Everyone-may-read policy for n peers (deny-list of nobody).
AccessPolicy open_policy(std::uint16_t network_size);

// Stores whichever of the allowed set / its complement is smaller; a tie
// resolves to the allow-list. Throws std::invalid_argument when an id falls
// outside {0..network_size-1}.
AccessPolicy canonicalize_policy(std::span<const std::uint16_t> allowed, std::uint16_t network_size);

struct RegisterEntry {
    std::string file_name;
    ContentHash hash;

    bool operator==(const RegisterEntry&) const = default;
};

struct RegisterFiles {
    std::vector<RegisterEntry> entries;
    AccessPolicy policy;
};

struct AnomalySignal {
    std::uint16_t unit_id = 0;
    std::string summary;
};

using TxPayload = std::variant<RegisterFiles, AnomalySignal>;

struct Transaction {
    std::uint16_t sender = 0;
    TxPayload payload;
    std::uint64_t gas_used = 0;
    std::uint64_t nonce = 0;  // per-sender, strictly increasing
};

// RegisterFiles: g_base + |entries|·g_hash + |policy.ids|·g_addr.
// AnomalySignal: g_base.
std::uint64_t estimate_gas(const TxPayload& payload, const GasSchedule& schedule);

// Least-squares fit of gas = (g_base + g_hash) + k·g_addr over observations
// (effective policy size k, total gas). The split of the intercept between
// g_base and g_hash is not observable; it follows the default schedule's
// ratio. Throws std::invalid_argument on fewer than 2 distinct k values or a
// non-positive fit.
GasSchedule calibrate_schedule(std::span<const std::pair<std::uint32_t, std::uint64_t>> observations);

// Canonical binary encoding (the hashing preimage). All integers big-endian,
// strings UTF-8 with u16 length prefixes:
//   tx    := kind u8 (1=RegisterFiles, 2=AnomalySignal) | sender u16 |
//            nonce u64 | gas_used u64 | body
//   body1 := entry_count u32 | { name_len u16 | name | digest 32B }* |
//            mode u8 | network_size u16 | id_count u16 | { id u16 }*
//   body2 := unit_id u16 | summary_len u16 | summary
std::vector<std::uint8_t> encode_tx(const Transaction& tx);
Transaction decode_tx(std::span<const std::uint8_t> bytes, std::size_t& offset);

struct Block {
    std::uint64_t index = 0;
    crypto::Digest prev_hash{};
    std::uint64_t timestamp_us = 0;
    std::vector<Transaction> transactions;
    std::uint64_t nonce = 0;
    crypto::Digest block_hash{};
};

// Block hash preimage: index u64 | prev_hash 32B | timestamp u64 |
// tx_count u32 | tx encodings | nonce u64.
crypto::Digest hash_block(const Block& block);

// Full canonical block encoding (preimage fields plus the stored block_hash),
// so a ledger copy round-trips bit-exactly.
std::vector<std::uint8_t> encode_block(const Block& block);
Block decode_block(std::span<const std::uint8_t> bytes);

unsigned leading_zero_bits(const crypto::Digest& digest);

// Stateless full verification: hash recomputation, difficulty, prev_hash
// linkage, genesis linkage to the zero digest, per-transaction gas
// recomputation, and per-sender nonce monotonicity. Returns the first invalid
// block index, or nullopt when the chain verifies.
std::optional<std::uint64_t> verify_blocks(std::span<const Block> blocks,
                                           const GasSchedule& schedule, std::uint32_t difficulty);

struct RegistryEntry {
    std::string file_name;
    ContentHash hash;
    AccessPolicy policy;
    std::uint16_t sender = 0;
    std::uint64_t block_index = 0;
};

struct ObservedSignal {
    std::uint16_t sender = 0;
    std::uint16_t unit_id = 0;
    std::string summary;
    std::uint64_t block_index = 0;
};

// Single-chain proof-of-work ledger: one writer at a time (submit/mine take
// the exclusive lock), reads run concurrently against a consistent snapshot.
class Chain {
  public:
    static constexpr std::uint64_t kDefaultInitialBalance = 100'000'000'000ULL;

    Chain(std::uint16_t n_peers, GasSchedule schedule = {}, std::uint32_t difficulty = 12,
          std::uint64_t initial_balance = kDefaultInitialBalance);

    // Validates balance and name ownership, assigns the per-sender nonce and
    // gas, and appends to the pending pool. Returns the assigned nonce.
    // Throws InsufficientBalanceError / NameOwnedError / std::invalid_argument.
    std::uint64_t submit_tx(std::uint16_t sender, TxPayload payload);

    // Mines all pending transactions (submission order) into a new block,
    // updating registry and balances. nullopt when the pool is empty.
    std::optional<Block> mine_block(std::uint16_t miner);

    std::optional<std::uint64_t> verify_chain() const;  // first invalid index

    // Read-only registry views; zero gas charged, pending txs not visible.
    std::optional<RegistryEntry> query_registry(std::string_view file_name) const;
    std::vector<RegistryEntry> query_registry_by_sender(std::uint16_t sender) const;
    std::vector<RegistryEntry> registrations_since(std::uint64_t block_height) const;
    std::vector<ObservedSignal> signals_since(std::uint64_t block_height) const;
    // Half-open block ranges [from, to) for cursor-based scans.
    std::vector<RegistryEntry> registrations_between(std::uint64_t from, std::uint64_t to) const;
    std::vector<ObservedSignal> signals_between(std::uint64_t from, std::uint64_t to) const;

    /// Owner always allowed, otherwise policy membership. Throws UnregisteredNameError.
    bool can_access(std::uint16_t peer, std::string_view file_name) const;

    std::uint64_t balance(std::uint16_t peer) const;
    std::uint64_t height() const;  // number of blocks including genesis
    std::size_t pending_count() const;
    std::size_t registry_size() const;
    std::vector<Block> blocks_snapshot() const;
    const GasSchedule& schedule() const { return schedule_; }
    std::uint32_t difficulty() const { return difficulty_; }
    std::uint16_t peer_count() const { return n_peers_; }

  private:
    void check_sender(std::uint16_t sender) const;
    std::uint64_t reserved_gas(std::uint16_t sender) const;
    Block mine_locked(std::vector<Transaction> txs);

    mutable std::shared_mutex mutex_;
    std::uint16_t n_peers_;
    GasSchedule schedule_;
    std::uint32_t difficulty_;
    std::vector<Block> blocks_;
    std::vector<Transaction> pending_;
    std::map<std::string, RegistryEntry, std::less<>> registry_;
    std::map<std::uint16_t, std::uint64_t> balances_;
    std::map<std::uint16_t, std::uint64_t> next_nonce_;
};

}  // namespace vmon

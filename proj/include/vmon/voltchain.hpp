#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "vmon/chainledger.hpp"
#include "vmon/detector.hpp"
#include "vmon/waveform.hpp"

namespace vmon {

struct RoleViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PuRole : std::uint8_t { Active, Dormant };

struct RotationSchedule {
    std::vector<std::uint16_t> order;  // permutation of peer ids
    std::uint64_t slot_duration = 1;   // simulated time units per slot
    std::uint32_t active_count = 1;

    void validate() const;
    static RotationSchedule round_robin(std::uint16_t n_peers, std::uint64_t slot_duration = 1,
                                        std::uint32_t active_count = 1);
};

// Role per peer id at the given simulated time: the active_count peers at
// positions starting from floor(tick / slot_duration) mod |order|, consecutive
// and wrapping, are Active.
std::vector<PuRole> rotate_roles(const RotationSchedule& schedule, std::uint64_t tick);

// Injectable latency standing in for the external daemon/RPC stack the
// in-process store and ledger replace. Zero it out for pure in-process runs.
struct LatencyModel {
    std::chrono::microseconds store_add_fixed{5000};
    double store_add_us_per_byte = 0.02;  // ~50 MB/s
    std::chrono::microseconds tx_submit_fixed{3000};

    static LatencyModel none() { return {std::chrono::microseconds{0}, 0.0, std::chrono::microseconds{0}}; }
    void apply_add(std::size_t bytes) const;
    void apply_submit() const;
};

struct VoltchainConfig {
    std::uint16_t n_peers = 10;
    GasSchedule schedule{};
    std::uint32_t difficulty = 12;
    std::uint64_t initial_balance = 100'000'000'000ULL;
    std::uint32_t replication_factor = 2;
    std::uint64_t slot_duration = 1;
    std::uint32_t active_count = 1;
    DetectorConfig detector;
    LatencyModel latency;
};

class ProcessingUnit;

// One in-process decentralized network: a shared ledger, one content store
// per peer, and the processing units on top of them.
class VoltchainNetwork {
  public:
    explicit VoltchainNetwork(VoltchainConfig config);
    ~VoltchainNetwork();

    Chain& chain() { return chain_; }
    const Chain& chain() const { return chain_; }
    PeerStore& store(std::uint16_t peer) { return *stores_.at(peer); }
    StoreNetwork& store_network() { return store_net_; }
    ProcessingUnit& pu(std::uint16_t id) { return *pus_.at(id); }
    std::uint16_t peer_count() const { return config_.n_peers; }
    const VoltchainConfig& config() const { return config_; }
    const RotationSchedule& rotation() const { return rotation_; }

    /// Applies rotate_roles for the tick to every PU; returns the assignment.
    std::vector<PuRole> apply_rotation(std::uint64_t tick);

  private:
    VoltchainConfig config_;
    RotationSchedule rotation_;
    Chain chain_;
    std::vector<std::unique_ptr<PeerStore>> stores_;
    StoreNetwork store_net_;
    std::vector<std::unique_ptr<ProcessingUnit>> pus_;
};

struct UploadReceipt {
    struct FileTiming {
        std::string name;
        std::uint64_t add_us = 0;  // store add + replication (+ injected latency)
    };
    struct TxTiming {
        std::uint64_t submit_us = 0;
        std::uint64_t mine_us = 0;
        std::size_t entries = 0;
        std::uint64_t gas_used = 0;
    };
    std::vector<FileTiming> files;
    std::vector<TxTiming> txs;
    std::vector<std::uint64_t> tx_nonces;
    std::vector<std::string> rejected;  // files left pending locally
};

class ProcessingUnit {
  public:
    ProcessingUnit(std::uint16_t id, VoltchainNetwork& net);

    std::uint16_t id() const { return id_; }
    PuRole role() const;
    void set_role(PuRole role);

    // Adds every file to the local store (replicating to successor peers),
    // groups the hashes into ceil(batch/hashes_per_tx) registration
    // transactions submitted in order, and mines them. The uploaded map is
    // updated only for mined registrations; ledger-rejected files are listed
    // in the receipt and kept pending locally.
    UploadReceipt upload_cycle(std::span<const DataFile> batch, std::uint32_t hashes_per_tx,
                               std::optional<AccessPolicy> policy = std::nullopt);

    struct ScanOutcome {
        std::vector<AnomalyReport> reports;
        std::size_t fetched = 0;
        std::size_t denied = 0;
        std::size_t fetch_failures = 0;
        std::size_t integrity_failures = 0;
    };
    // Fetches and analyzes every accessible registration newer than the scan
    // cursor. Requires the Active role.
    ScanOutcome active_scan();

    // Submits an AnomalySignal and mines it. Requires the Active role.
    // nullopt when the same (file, window) was already signalled.
    std::optional<std::uint64_t> signal_anomaly(const AnomalyReport& report);

    /// New signals mined since this PU last polled; each is observed exactly once.
    std::vector<ObservedSignal> poll_signals();

    std::map<std::string, ContentHash> uploaded() const;
    std::vector<std::string> pending_files() const;

    static std::string signal_summary(const AnomalyReport& report);
    static std::string signal_key(const AnomalyReport& report);

  private:
    std::uint16_t id_;
    VoltchainNetwork& net_;
    mutable std::mutex mutex_;
    PuRole role_ = PuRole::Dormant;
    std::uint64_t scan_cursor_ = 0;
    std::uint64_t signal_cursor_ = 0;
    std::map<std::string, ContentHash> uploaded_;
    std::vector<std::string> pending_files_;
    std::set<std::string> signalled_keys_;
};

}  // namespace vmon

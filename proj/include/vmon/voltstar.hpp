#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vmon/detector.hpp"
#include "vmon/frame.hpp"
#include "vmon/waveform.hpp"

namespace vmon {

struct NetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Move-only RAII wrapper for a socket descriptor.
class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close();
    /// Unblocks any thread sitting in read/accept on this descriptor.
    void shutdown_both();

  private:
    int fd_ = -1;
};

Socket tcp_listen_loopback(std::uint16_t port);  // port 0 = ephemeral
std::uint16_t local_port(const Socket& sock);
Socket tcp_connect_loopback(std::uint16_t port);  // throws NetError

bool write_all(int fd, std::span<const std::uint8_t> bytes);
void write_frame(int fd, const Frame& frame);  // throws NetError
/// nullopt on clean EOF at a frame boundary; FrameError/NetError otherwise.
std::optional<Frame> read_frame(int fd);

enum class AckStatus : std::uint8_t {
    Ok = 0,
    AuthFailure = 1,
    BadRequest = 2,
    UnknownUnit = 3,
};

struct BroadcastResult {
    std::size_t delivered = 0;
    std::vector<std::uint16_t> failed_units;
};

// FAULT_BROADCAST payload: window u32 | kind u8 | rms f64 bits u64 | detected_at u64.
std::vector<std::uint8_t> encode_fault_payload(const AnomalyReport& report);
AnomalyReport decode_fault_frame(const Frame& frame);

struct MUConfig {
    std::uint16_t data_port = 0;       // 0 picks an ephemeral port
    std::uint16_t broadcast_port = 0;
    std::map<std::uint16_t, crypto::Key> unit_keys;
    crypto::Key storage_key{};
    std::filesystem::path storage_dir;
    DetectorConfig detector;

    void validate() const;  // data_port != broadcast_port when both fixed
};

// Central server: accepts concurrent TU sessions on the data port, ACKs and
// persists encrypted files, and pushes fault broadcasts to every TU
// registered on the broadcast port. CSV parsing and anomaly scanning run on a
// single detector work queue so a slow scan never delays another unit's ACK.
class MasterUnit {
  public:
    explicit MasterUnit(MUConfig config);
    ~MasterUnit();

    void start();
    void stop();

    std::uint16_t data_port() const { return data_port_; }
    std::uint16_t broadcast_port() const { return broadcast_port_; }

    struct Stats {
        std::uint64_t files_ok = 0;
        std::uint64_t auth_failures = 0;
        std::uint64_t malformed_frames = 0;
        std::uint64_t malformed_csv = 0;
        std::uint64_t broadcasts_sent = 0;
    };
    Stats stats() const;
    std::size_t registered_tu_count() const;
    std::vector<AnomalyReport> reports() const;

    BroadcastResult broadcast_fault(const AnomalyReport& report);

    bool wait_files_ok(std::uint64_t n, std::chrono::milliseconds timeout);
    bool wait_registered(std::size_t n, std::chrono::milliseconds timeout);
    /// Waits until every accepted file has been through the detector queue.
    bool wait_detector_idle(std::chrono::milliseconds timeout);

  private:
    struct DetectJob {
        std::uint16_t unit_id;
        std::string name;
        std::string csv;
    };

    void accept_loop(Socket& listener, bool broadcast);
    void data_session(int fd);
    void broadcast_session(int fd);
    void detector_loop();
    void handle_file(int fd, const Frame& frame);
    void send_ack(int fd, const Frame& request, AckStatus status);

    MUConfig config_;
    std::uint16_t data_port_ = 0;
    std::uint16_t broadcast_port_ = 0;

    Socket data_listener_;
    Socket broadcast_listener_;
    std::atomic<bool> stopping_{false};
    std::mutex threads_mutex_;
    std::vector<std::thread> threads_;
    std::mutex session_mutex_;
    std::vector<int> session_fds_;

    mutable std::mutex state_mutex_;
    std::condition_variable state_cv_;
    Stats stats_;
    std::vector<AnomalyReport> reports_;
    std::map<std::uint16_t, int> broadcast_fds_;
    std::atomic<std::uint64_t> storage_nonce_{0};
    std::uint64_t jobs_enqueued_ = 0;
    std::uint64_t jobs_done_ = 0;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<DetectJob> detect_queue_;
    std::thread detector_thread_;
};

// Per-TU bookkeeping: every generated file, and the send/ack state of every
// file handed to the sender.
struct TransferLedger {
    struct Generated {
        std::size_t row_count = 0;
        std::uint64_t created_us = 0;
    };
    struct Sent {
        std::uint64_t sent_us = 0;
        AckStatus ack = AckStatus::Ok;
    };
    std::map<std::string, Generated> generated;
    std::map<std::string, Sent> sent;
};

struct TUConfig {
    std::uint16_t unit_id = 0;
    std::uint16_t data_port = 0;
    std::uint16_t broadcast_port = 0;
    crypto::Key key{};
    WaveformConfig waveform;
    std::size_t rows_per_file = 2000;
    std::size_t n_files = 10;
    // Optional fault injection into one generated file.
    std::size_t faulty_file_index = SIZE_MAX;
    std::vector<FaultSpec> faults;
    bool paced_generation = false;
    std::chrono::milliseconds retry_initial{200};
    std::chrono::milliseconds retry_cap{5000};
    bool listen_broadcasts = true;
};

// Edge node: generates voltage files and ships them to the MU. Generation and
// sending run concurrently and share the ledger under a mutex; generation
// never blocks on a dead connection.
class TransferUnit {
  public:
    explicit TransferUnit(TUConfig config);
    ~TransferUnit();

    void start();
    void stop();

    /// Replaces generation with prebuilt CSV payloads (benchmark path).
    void preload_files(std::vector<std::pair<std::string, std::string>> name_and_csv);

    TransferLedger ledger_snapshot() const;
    std::size_t generated_count() const;
    std::size_t sent_ok_count() const;
    bool wait_all_sent(std::chrono::milliseconds timeout);
    std::vector<std::uint64_t> transfer_times_us() const;
    std::vector<Frame> broadcasts_received() const;
    bool wait_broadcasts(std::size_t n, std::chrono::milliseconds timeout);

  private:
    struct Outgoing {
        std::string name;
        std::string csv;
    };

    void generator_loop();
    void sender_loop();
    void broadcast_loop();
    /// Sleeps with exponential backoff; false once the unit is stopping.
    bool backoff_wait(std::chrono::milliseconds& delay);

    TUConfig config_;
    std::size_t target_files_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<bool> preloaded_{false};
    std::atomic<int> sender_fd_{-1};
    std::atomic<int> broadcast_fd_{-1};
    std::thread generator_;
    std::thread sender_;
    std::thread broadcast_listener_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    TransferLedger ledger_;
    std::deque<Outgoing> outbox_;
    std::uint64_t nonce_counter_ = 0;
    std::vector<std::uint64_t> transfer_times_us_;
    std::vector<Frame> broadcasts_;
};

}  // namespace vmon

#include "vmon/voltstar.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>

namespace vmon {

namespace {

std::uint64_t steady_us() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                          std::chrono::steady_clock::now().time_since_epoch())
                                          .count());
}

bool read_exact(int fd, std::uint8_t* buf, std::size_t n, bool& clean_eof) {
    clean_eof = false;
    std::size_t got = 0;
    while (got < n) {
        ssize_t r = ::recv(fd, buf + got, n - got, 0);
        if (r == 0) {
            clean_eof = got == 0;
            return false;
        }
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64_be(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint64_t get_u64_be(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | p[i];
    return v;
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket tcp_listen_loopback(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError("socket() failed");
    Socket sock(fd);
    int yes = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
        throw NetError("bind(" + std::to_string(port) + ") failed: " + std::strerror(errno));
    if (::listen(fd, 64) != 0) throw NetError("listen() failed");
    return sock;
}

std::uint16_t local_port(const Socket& sock) {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        throw NetError("getsockname() failed");
    return ntohs(addr.sin_port);
}

Socket tcp_connect_loopback(std::uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError("socket() failed");
    Socket sock(fd);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
        throw NetError("connect(" + std::to_string(port) + ") failed: " + std::strerror(errno));
    int yes = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
    return sock;
}

bool write_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        sent += static_cast<std::size_t>(r);
    }
    return true;
}

void write_frame(int fd, const Frame& frame) {
    auto bytes = encode_frame(frame);
    if (!write_all(fd, bytes)) throw NetError("frame write failed");
}

std::optional<Frame> read_frame(int fd) {
    std::uint8_t header[kFrameFixedHeader];
    bool clean = false;
    if (!read_exact(fd, header, sizeof(header), clean)) {
        if (clean) return std::nullopt;
        throw NetError("connection lost reading frame header");
    }

    const std::size_t name_len = static_cast<std::size_t>(header[8] << 8 | header[9]);
    std::vector<std::uint8_t> rest(name_len + 4);
    if (!read_exact(fd, rest.data(), rest.size(), clean))
        throw FrameError(FrameErrorCode::Truncated, "eof inside frame");

    std::uint32_t payload_len = 0;
    for (int i = 0; i < 4; ++i) payload_len = payload_len << 8 | rest[name_len + i];

    std::vector<std::uint8_t> whole(sizeof(header) + rest.size() + payload_len);
    std::memcpy(whole.data(), header, sizeof(header));
    std::memcpy(whole.data() + sizeof(header), rest.data(), rest.size());
    if (payload_len > 0 &&
        !read_exact(fd, whole.data() + sizeof(header) + rest.size(), payload_len, clean))
        throw FrameError(FrameErrorCode::Truncated, "eof inside payload");

    return decode_frame(whole);
}

std::vector<std::uint8_t> encode_fault_payload(const AnomalyReport& report) {
    std::vector<std::uint8_t> payload;
    put_u32_be(payload, static_cast<std::uint32_t>(report.window_index));
    payload.push_back(static_cast<std::uint8_t>(report.kind));
    put_u64_be(payload, std::bit_cast<std::uint64_t>(report.rms_value));
    put_u64_be(payload, report.detected_at_us);
    return payload;
}

AnomalyReport decode_fault_frame(const Frame& frame) {
    if (frame.msg_type != MsgType::FaultBroadcast || frame.payload.size() != 21)
        throw std::invalid_argument("not a fault broadcast frame");
    AnomalyReport r;
    r.unit_id = frame.unit_id;
    r.file_name = frame.name;
    std::uint32_t w = 0;
    for (int i = 0; i < 4; ++i) w = w << 8 | frame.payload[i];
    r.window_index = w;
    r.kind = static_cast<AnomalyKind>(frame.payload[4]);
    r.rms_value = std::bit_cast<double>(get_u64_be(frame.payload.data() + 5));
    r.detected_at_us = get_u64_be(frame.payload.data() + 13);
    return r;
}

void MUConfig::validate() const {
    if (data_port != 0 && data_port == broadcast_port)
        throw std::invalid_argument("data and broadcast ports must differ");
    detector.validate();
}

MasterUnit::MasterUnit(MUConfig config) : config_(std::move(config)) { config_.validate(); }

MasterUnit::~MasterUnit() { stop(); }

void MasterUnit::start() {
    data_listener_ = tcp_listen_loopback(config_.data_port);
    broadcast_listener_ = tcp_listen_loopback(config_.broadcast_port);
    data_port_ = local_port(data_listener_);
    broadcast_port_ = local_port(broadcast_listener_);
    if (!config_.storage_dir.empty()) std::filesystem::create_directories(config_.storage_dir);

    detector_thread_ = std::thread([this] { detector_loop(); });
    std::lock_guard lock(threads_mutex_);
    threads_.emplace_back([this] { accept_loop(data_listener_, false); });
    threads_.emplace_back([this] { accept_loop(broadcast_listener_, true); });
}

void MasterUnit::stop() {
    if (stopping_.exchange(true)) return;
    data_listener_.shutdown_both();
    broadcast_listener_.shutdown_both();
    {
        std::lock_guard lock(session_mutex_);
        for (int fd : session_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    queue_cv_.notify_all();
    // Accept loops may still be appending session threads; drain in batches.
    for (;;) {
        std::vector<std::thread> batch;
        {
            std::lock_guard lock(threads_mutex_);
            batch.swap(threads_);
        }
        if (batch.empty()) break;
        for (auto& t : batch)
            if (t.joinable()) t.join();
    }
    if (detector_thread_.joinable()) detector_thread_.join();
    data_listener_.close();
    broadcast_listener_.close();
    std::lock_guard lock(session_mutex_);
    for (int fd : session_fds_) ::close(fd);
    session_fds_.clear();
}

void MasterUnit::accept_loop(Socket& listener, bool broadcast) {
    while (!stopping_.load()) {
        int fd = ::accept(listener.fd(), nullptr, nullptr);
        if (fd < 0) {
            if (stopping_.load()) return;
            if (errno == EINTR) continue;
            return;
        }
        int yes = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
        {
            std::lock_guard lock(session_mutex_);
            session_fds_.push_back(fd);
            if (stopping_.load()) ::shutdown(fd, SHUT_RDWR);
        }
        std::lock_guard lock(threads_mutex_);
        threads_.emplace_back([this, fd, broadcast] {
            if (broadcast)
                broadcast_session(fd);
            else
                data_session(fd);
        });
    }
}

void MasterUnit::send_ack(int fd, const Frame& request, AckStatus status) {
    Frame ack;
    ack.msg_type = MsgType::Ack;
    ack.unit_id = request.unit_id;
    ack.name = request.name;
    ack.payload = {static_cast<std::uint8_t>(status)};
    try {
        write_frame(fd, ack);
    } catch (const NetError&) {
        // peer vanished; its sender will retry
    }
}

void MasterUnit::handle_file(int fd, const Frame& frame) {
    EncryptedBlob blob;
    try {
        blob = decode_blob(frame.payload);
    } catch (const std::invalid_argument&) {
        std::lock_guard lock(state_mutex_);
        ++stats_.malformed_frames;
        send_ack(fd, frame, AckStatus::BadRequest);
        return;
    }

    auto key_it = config_.unit_keys.find(frame.unit_id);
    if (key_it == config_.unit_keys.end()) {
        std::lock_guard lock(state_mutex_);
        ++stats_.malformed_frames;
        send_ack(fd, frame, AckStatus::UnknownUnit);
        return;
    }

    auto plaintext = decrypt_blob(key_it->second, blob);
    if (!plaintext) {
        {
            std::lock_guard lock(state_mutex_);
            ++stats_.auth_failures;
        }
        state_cv_.notify_all();
        send_ack(fd, frame, AckStatus::AuthFailure);
        return;
    }

    // Re-encrypt under the MU storage key and persist before acknowledging.
    if (!config_.storage_dir.empty()) {
        auto at_rest = encrypt_blob(config_.storage_key, 0xffff,
                                    storage_nonce_.fetch_add(1), *plaintext);
        auto encoded = encode_blob(at_rest);
        auto dir = config_.storage_dir / ("u" + std::to_string(frame.unit_id));
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / (frame.name + ".enc"), std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(encoded.data()),
                  static_cast<std::streamsize>(encoded.size()));
    }

    {
        std::lock_guard qlock(queue_mutex_);
        detect_queue_.push_back(DetectJob{frame.unit_id, frame.name,
                                          std::string(plaintext->begin(), plaintext->end())});
    }
    queue_cv_.notify_one();
    {
        std::lock_guard lock(state_mutex_);
        ++stats_.files_ok;
        ++jobs_enqueued_;
    }
    state_cv_.notify_all();
    send_ack(fd, frame, AckStatus::Ok);
}

void MasterUnit::data_session(int fd) {
    while (!stopping_.load()) {
        std::optional<Frame> frame;
        try {
            frame = read_frame(fd);
        } catch (const std::exception&) {
            std::lock_guard lock(state_mutex_);
            ++stats_.malformed_frames;
            break;
        }
        if (!frame) break;
        if (frame->msg_type == MsgType::File)
            handle_file(fd, *frame);
        else
            send_ack(fd, *frame, AckStatus::BadRequest);
    }
}

void MasterUnit::broadcast_session(int fd) {
    std::optional<std::uint16_t> registered;
    while (!stopping_.load()) {
        std::optional<Frame> frame;
        try {
            frame = read_frame(fd);
        } catch (const std::exception&) {
            break;
        }
        if (!frame) break;
        if (frame->msg_type == MsgType::RegisterTu) {
            std::lock_guard lock(state_mutex_);
            broadcast_fds_[frame->unit_id] = fd;
            registered = frame->unit_id;
            state_cv_.notify_all();
        }
    }
    if (registered) {
        std::lock_guard lock(state_mutex_);
        auto it = broadcast_fds_.find(*registered);
        if (it != broadcast_fds_.end() && it->second == fd) broadcast_fds_.erase(it);
    }
}

void MasterUnit::detector_loop() {
    while (true) {
        DetectJob job;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [this] { return stopping_.load() || !detect_queue_.empty(); });
            if (detect_queue_.empty()) {
                if (stopping_.load()) return;
                continue;
            }
            job = std::move(detect_queue_.front());
            detect_queue_.pop_front();
        }

        std::vector<AnomalyReport> found;
        try {
            auto rows = read_csv(job.csv);
            found = scan_file(rows, config_.detector, job.unit_id, job.name);
        } catch (const CsvError& e) {
            std::lock_guard lock(state_mutex_);
            ++stats_.malformed_csv;
            std::cerr << "mu: rejected " << job.name << ": " << e.what() << "\n";
        }
        for (const auto& report : found) {
            {
                std::lock_guard lock(state_mutex_);
                reports_.push_back(report);
            }
            broadcast_fault(report);
        }
        {
            std::lock_guard lock(state_mutex_);
            ++jobs_done_;
        }
        state_cv_.notify_all();
    }
}

BroadcastResult MasterUnit::broadcast_fault(const AnomalyReport& report) {
    Frame frame;
    frame.msg_type = MsgType::FaultBroadcast;
    frame.unit_id = report.unit_id;
    frame.name = report.file_name;
    frame.payload = encode_fault_payload(report);
    const auto bytes = encode_frame(frame);

    BroadcastResult result;
    std::lock_guard lock(state_mutex_);
    for (auto it = broadcast_fds_.begin(); it != broadcast_fds_.end();) {
        if (write_all(it->second, bytes)) {
            ++result.delivered;
            ++it;
        } else {
            result.failed_units.push_back(it->first);
            it = broadcast_fds_.erase(it);
        }
    }
    ++stats_.broadcasts_sent;
    return result;
}

MasterUnit::Stats MasterUnit::stats() const {
    std::lock_guard lock(state_mutex_);
    return stats_;
}

std::size_t MasterUnit::registered_tu_count() const {
    std::lock_guard lock(state_mutex_);
    return broadcast_fds_.size();
}

std::vector<AnomalyReport> MasterUnit::reports() const {
    std::lock_guard lock(state_mutex_);
    return reports_;
}

bool MasterUnit::wait_files_ok(std::uint64_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(state_mutex_);
    return state_cv_.wait_for(lock, timeout, [&] { return stats_.files_ok >= n; });
}

bool MasterUnit::wait_registered(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(state_mutex_);
    return state_cv_.wait_for(lock, timeout, [&] { return broadcast_fds_.size() >= n; });
}

bool MasterUnit::wait_detector_idle(std::chrono::milliseconds timeout) {
    std::unique_lock lock(state_mutex_);
    return state_cv_.wait_for(lock, timeout, [&] { return jobs_done_ == jobs_enqueued_; });
}

TransferUnit::TransferUnit(TUConfig config) : config_(std::move(config)) {
    config_.waveform.validate();
    target_files_ = config_.n_files;
}

TransferUnit::~TransferUnit() { stop(); }

void TransferUnit::preload_files(std::vector<std::pair<std::string, std::string>> name_and_csv) {
    std::lock_guard lock(mutex_);
    preloaded_.store(true);
    target_files_ = name_and_csv.size();
    const std::uint64_t now = steady_us();
    for (auto& [name, csv] : name_and_csv) {
        std::size_t rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
        ledger_.generated[name] = TransferLedger::Generated{rows > 0 ? rows - 1 : 0, now};
        outbox_.push_back(Outgoing{std::move(name), std::move(csv)});
    }
    cv_.notify_all();
}

void TransferUnit::start() {
    if (!preloaded_.load()) generator_ = std::thread([this] { generator_loop(); });
    sender_ = std::thread([this] { sender_loop(); });
    if (config_.listen_broadcasts && config_.broadcast_port != 0)
        broadcast_listener_ = std::thread([this] { broadcast_loop(); });
}

void TransferUnit::stop() {
    if (stopping_.exchange(true)) return;
    cv_.notify_all();
    int fd = sender_fd_.load();
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    fd = broadcast_fd_.load();
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
    if (generator_.joinable()) generator_.join();
    if (sender_.joinable()) sender_.join();
    if (broadcast_listener_.joinable()) broadcast_listener_.join();
}

void TransferUnit::generator_loop() {
    for (std::size_t seq = 0; seq < config_.n_files && !stopping_.load(); ++seq) {
        DataFile file;
        file.unit_id = config_.unit_id;
        file.sequence_no = static_cast<std::uint32_t>(seq);

        WaveformConfig wf = config_.waveform;
        wf.seed = config_.waveform.seed + seq;  // distinct noise per file
        std::span<const FaultSpec> faults =
            seq == config_.faulty_file_index ? std::span<const FaultSpec>(config_.faults)
                                             : std::span<const FaultSpec>();

        if (config_.paced_generation) {
            // The stream only provides serial-feed timing; the rows themselves
            // come from the same kernel so paced and fast output are identical.
            std::mutex done_mutex;
            std::condition_variable done_cv;
            std::size_t streamed = 0;
            {
                SampleStream stream(
                    wf,
                    [&](const VoltageSample&) {
                        std::lock_guard lk(done_mutex);
                        ++streamed;
                        if (streamed >= config_.rows_per_file) done_cv.notify_all();
                    },
                    true);
                std::unique_lock lk(done_mutex);
                while (!stopping_.load() && streamed < config_.rows_per_file)
                    done_cv.wait_for(lk, std::chrono::milliseconds(50));
            }
            if (stopping_.load()) return;
        }
        file.rows = generate_samples(wf, config_.rows_per_file, faults);

        std::string csv = write_csv(file);
        {
            std::lock_guard lock(mutex_);
            ledger_.generated[file.name()] =
                TransferLedger::Generated{file.rows.size(), steady_us()};
            outbox_.push_back(Outgoing{file.name(), std::move(csv)});
        }
        cv_.notify_all();
    }
}

bool TransferUnit::backoff_wait(std::chrono::milliseconds& delay) {
    const auto deadline = std::chrono::steady_clock::now() + delay;
    while (std::chrono::steady_clock::now() < deadline) {
        if (stopping_.load()) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    delay = std::min(delay * 2, config_.retry_cap);
    return !stopping_.load();
}

void TransferUnit::sender_loop() {
    Socket sock;
    auto delay = config_.retry_initial;

    while (!stopping_.load()) {
        Outgoing item;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [this] { return stopping_.load() || !outbox_.empty(); });
            if (stopping_.load()) return;
            item = outbox_.front();
        }

        if (!sock.valid()) {
            try {
                sock = tcp_connect_loopback(config_.data_port);
                sender_fd_.store(sock.fd());
                delay = config_.retry_initial;
            } catch (const NetError&) {
                if (!backoff_wait(delay)) return;
                continue;
            }
        }

        Frame frame;
        frame.msg_type = MsgType::File;
        frame.unit_id = config_.unit_id;
        frame.name = item.name;
        {
            std::lock_guard lock(mutex_);
            frame.payload = encode_blob(
                encrypt_blob(config_.key, config_.unit_id, nonce_counter_++, item.csv));
        }

        const std::uint64_t t0 = steady_us();
        std::optional<Frame> ack;
        try {
            write_frame(sock.fd(), frame);
            ack = read_frame(sock.fd());
        } catch (const std::exception&) {
            ack = std::nullopt;
        }
        if (!ack || ack->msg_type != MsgType::Ack) {
            // connection lost: files accumulate in the outbox and are retried
            sender_fd_.store(-1);
            sock.close();
            if (!backoff_wait(delay)) return;
            continue;
        }

        const auto status = static_cast<AckStatus>(ack->payload.empty() ? 255 : ack->payload[0]);
        {
            std::lock_guard lock(mutex_);
            ledger_.sent[item.name] = TransferLedger::Sent{steady_us(), status};
            if (status == AckStatus::Ok) transfer_times_us_.push_back(steady_us() - t0);
            if (!outbox_.empty() && outbox_.front().name == item.name) outbox_.pop_front();
        }
        cv_.notify_all();
    }
}

void TransferUnit::broadcast_loop() {
    auto delay = config_.retry_initial;
    while (!stopping_.load()) {
        Socket sock;
        try {
            sock = tcp_connect_loopback(config_.broadcast_port);
        } catch (const NetError&) {
            if (!backoff_wait(delay)) return;
            continue;
        }
        broadcast_fd_.store(sock.fd());

        Frame reg;
        reg.msg_type = MsgType::RegisterTu;
        reg.unit_id = config_.unit_id;
        try {
            write_frame(sock.fd(), reg);
            while (!stopping_.load()) {
                auto frame = read_frame(sock.fd());
                if (!frame) break;
                if (frame->msg_type != MsgType::FaultBroadcast) continue;
                std::lock_guard lock(mutex_);
                broadcasts_.push_back(*frame);
                cv_.notify_all();
            }
        } catch (const std::exception&) {
        }
        broadcast_fd_.store(-1);
        if (!backoff_wait(delay)) return;
    }
}

TransferLedger TransferUnit::ledger_snapshot() const {
    std::lock_guard lock(mutex_);
    return ledger_;
}

std::size_t TransferUnit::generated_count() const {
    std::lock_guard lock(mutex_);
    return ledger_.generated.size();
}

std::size_t TransferUnit::sent_ok_count() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [name, sent] : ledger_.sent)
        if (sent.ack == AckStatus::Ok) ++n;
    return n;
}

bool TransferUnit::wait_all_sent(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout,
                        [this] { return ledger_.sent.size() >= target_files_; });
}

std::vector<std::uint64_t> TransferUnit::transfer_times_us() const {
    std::lock_guard lock(mutex_);
    return transfer_times_us_;
}

std::vector<Frame> TransferUnit::broadcasts_received() const {
    std::lock_guard lock(mutex_);
    return broadcasts_;
}

bool TransferUnit::wait_broadcasts(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return cv_.wait_for(lock, timeout, [&] { return broadcasts_.size() >= n; });
}

}  // namespace vmon

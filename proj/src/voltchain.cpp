#include "vmon/voltchain.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

namespace vmon {

namespace {

std::uint64_t steady_us() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                          std::chrono::steady_clock::now().time_since_epoch())
                                          .count());
}

}  // namespace

void RotationSchedule::validate() const {
    if (order.empty()) throw std::invalid_argument("rotation order is empty");
    if (active_count < 1 || active_count > order.size())
        throw std::invalid_argument("active_count out of range");
    if (slot_duration == 0) throw std::invalid_argument("slot_duration must be positive");
    std::vector<std::uint16_t> sorted(order);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] != i) throw std::invalid_argument("order must be a permutation of peer ids");
}

RotationSchedule RotationSchedule::round_robin(std::uint16_t n_peers, std::uint64_t slot_duration,
                                               std::uint32_t active_count) {
    RotationSchedule s;
    s.order.resize(n_peers);
    for (std::uint16_t i = 0; i < n_peers; ++i) s.order[i] = i;
    s.slot_duration = slot_duration;
    s.active_count = active_count;
    return s;
}

std::vector<PuRole> rotate_roles(const RotationSchedule& schedule, std::uint64_t tick) {
    schedule.validate();
    const std::size_t n = schedule.order.size();
    const std::size_t start = static_cast<std::size_t>((tick / schedule.slot_duration) % n);
    std::vector<PuRole> roles(n, PuRole::Dormant);
    for (std::uint32_t j = 0; j < schedule.active_count; ++j)
        roles[schedule.order[(start + j) % n]] = PuRole::Active;
    return roles;
}

void LatencyModel::apply_add(std::size_t bytes) const {
    const auto total = store_add_fixed + std::chrono::microseconds(static_cast<std::int64_t>(
                                             store_add_us_per_byte * static_cast<double>(bytes)));
    if (total.count() > 0) std::this_thread::sleep_for(total);
}

void LatencyModel::apply_submit() const {
    if (tx_submit_fixed.count() > 0) std::this_thread::sleep_for(tx_submit_fixed);
}

VoltchainNetwork::VoltchainNetwork(VoltchainConfig config)
    : config_(config),
      rotation_(RotationSchedule::round_robin(config.n_peers, config.slot_duration,
                                              config.active_count)),
      chain_(config.n_peers, config.schedule, config.difficulty, config.initial_balance) {
    config_.detector.validate();
    stores_.reserve(config_.n_peers);
    for (std::uint16_t p = 0; p < config_.n_peers; ++p) {
        stores_.push_back(std::make_unique<PeerStore>(p));
        store_net_.add_peer(*stores_.back());
    }
    pus_.reserve(config_.n_peers);
    for (std::uint16_t p = 0; p < config_.n_peers; ++p)
        pus_.push_back(std::make_unique<ProcessingUnit>(p, *this));
    apply_rotation(0);
}

VoltchainNetwork::~VoltchainNetwork() = default;

std::vector<PuRole> VoltchainNetwork::apply_rotation(std::uint64_t tick) {
    auto roles = rotate_roles(rotation_, tick);
    for (std::uint16_t p = 0; p < config_.n_peers; ++p) pus_[p]->set_role(roles[p]);
    return roles;
}

ProcessingUnit::ProcessingUnit(std::uint16_t id, VoltchainNetwork& net) : id_(id), net_(net) {}

PuRole ProcessingUnit::role() const {
    std::lock_guard lock(mutex_);
    return role_;
}

void ProcessingUnit::set_role(PuRole role) {
    std::lock_guard lock(mutex_);
    role_ = role;
}

UploadReceipt ProcessingUnit::upload_cycle(std::span<const DataFile> batch,
                                           std::uint32_t hashes_per_tx,
                                           std::optional<AccessPolicy> policy) {
    if (batch.empty()) throw std::invalid_argument("empty upload batch");
    if (hashes_per_tx < 1) throw std::invalid_argument("hashes_per_tx must be >= 1");

    const AccessPolicy effective_policy =
        policy.value_or(open_policy(net_.peer_count()));
    const auto& latency = net_.config().latency;

    UploadReceipt receipt;
    std::vector<RegisterEntry> entries;
    entries.reserve(batch.size());

    PeerStore& local = net_.store(id_);
    for (const auto& file : batch) {
        const std::string csv = write_csv(file);
        const std::uint64_t t0 = steady_us();
        latency.apply_add(csv.size());
        const ContentHash hash = local.add(csv);
        for (std::uint32_t r = 1; r <= net_.config().replication_factor; ++r) {
            const auto target = static_cast<std::uint16_t>((id_ + r) % net_.peer_count());
            if (target != id_) pin(local, net_.store(target), hash);
        }
        receipt.files.push_back({file.name(), steady_us() - t0});
        entries.push_back(RegisterEntry{file.name(), hash});
    }

    for (std::size_t begin = 0; begin < entries.size(); begin += hashes_per_tx) {
        const std::size_t end = std::min(entries.size(), begin + hashes_per_tx);
        RegisterFiles reg;
        reg.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(begin),
                           entries.begin() + static_cast<std::ptrdiff_t>(end));
        reg.policy = effective_policy;

        UploadReceipt::TxTiming timing;
        timing.entries = reg.entries.size();
        const std::uint64_t t_submit = steady_us();
        std::uint64_t nonce = 0;
        try {
            latency.apply_submit();
            nonce = net_.chain().submit_tx(id_, reg);
        } catch (const LedgerError&) {
            std::lock_guard lock(mutex_);
            for (const auto& e : reg.entries) {
                receipt.rejected.push_back(e.file_name);
                pending_files_.push_back(e.file_name);
            }
            continue;
        }
        timing.submit_us = steady_us() - t_submit;

        const std::uint64_t t_mine = steady_us();
        auto block = net_.chain().mine_block(id_);
        timing.mine_us = steady_us() - t_mine;
        if (block) {
            for (const auto& tx : block->transactions) timing.gas_used += tx.gas_used;
        }

        receipt.tx_nonces.push_back(nonce);
        receipt.txs.push_back(timing);

        std::lock_guard lock(mutex_);
        for (const auto& e : reg.entries) uploaded_[e.file_name] = e.hash;
    }
    return receipt;
}

ProcessingUnit::ScanOutcome ProcessingUnit::active_scan() {
    {
        std::lock_guard lock(mutex_);
        if (role_ != PuRole::Active)
            throw RoleViolationError("pu " + std::to_string(id_) + " is not Active");
    }

    std::uint64_t cursor;
    {
        std::lock_guard lock(mutex_);
        cursor = scan_cursor_;
    }
    const std::uint64_t height = net_.chain().height();
    const auto regs = net_.chain().registrations_between(cursor, height);

    ScanOutcome outcome;
    for (const auto& reg : regs) {
        if (!net_.chain().can_access(id_, reg.file_name)) {
            ++outcome.denied;
            continue;
        }
        std::vector<std::uint8_t> bytes;
        try {
            bytes = net_.store_network().get(reg.hash);
        } catch (const IntegrityError&) {
            ++outcome.integrity_failures;
            ++outcome.fetch_failures;
            continue;
        } catch (const NotFoundError&) {
            ++outcome.fetch_failures;
            continue;
        }
        ++outcome.fetched;

        try {
            auto rows = read_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                                  bytes.size()));
            auto reports = scan_file(rows, net_.config().detector, reg.sender, reg.file_name);
            outcome.reports.insert(outcome.reports.end(), reports.begin(), reports.end());
        } catch (const CsvError&) {
            ++outcome.fetch_failures;
        }
    }

    std::lock_guard lock(mutex_);
    scan_cursor_ = height;
    return outcome;
}

std::string ProcessingUnit::signal_key(const AnomalyReport& report) {
    return report.file_name + "#" + std::to_string(report.window_index);
}

std::string ProcessingUnit::signal_summary(const AnomalyReport& report) {
    char rms[32];
    std::snprintf(rms, sizeof(rms), "%.3f", report.rms_value);
    return signal_key(report) + ":" + to_string(report.kind) + ":rms=" + rms;
}

std::optional<std::uint64_t> ProcessingUnit::signal_anomaly(const AnomalyReport& report) {
    const std::string key = signal_key(report);
    {
        std::lock_guard lock(mutex_);
        if (role_ != PuRole::Active)
            throw RoleViolationError("pu " + std::to_string(id_) + " is not Active");
        if (signalled_keys_.contains(key)) return std::nullopt;
    }
    // Signals already on the ledger (e.g. from the previous Active) also count.
    for (const auto& sig : net_.chain().signals_since(0)) {
        if (sig.summary.starts_with(key + ":")) {
            std::lock_guard lock(mutex_);
            signalled_keys_.insert(key);
            return std::nullopt;
        }
    }

    AnomalySignal signal;
    signal.unit_id = report.unit_id;
    signal.summary = signal_summary(report);
    const std::uint64_t nonce = net_.chain().submit_tx(id_, signal);
    net_.chain().mine_block(id_);
    std::lock_guard lock(mutex_);
    signalled_keys_.insert(key);
    return nonce;
}

std::vector<ObservedSignal> ProcessingUnit::poll_signals() {
    std::uint64_t cursor;
    {
        std::lock_guard lock(mutex_);
        cursor = signal_cursor_;
    }
    const std::uint64_t height = net_.chain().height();
    auto signals = net_.chain().signals_between(cursor, height);
    std::lock_guard lock(mutex_);
    signal_cursor_ = height;
    return signals;
}

std::map<std::string, ContentHash> ProcessingUnit::uploaded() const {
    std::lock_guard lock(mutex_);
    return uploaded_;
}

std::vector<std::string> ProcessingUnit::pending_files() const {
    std::lock_guard lock(mutex_);
    return pending_files_;
}

}  // namespace vmon

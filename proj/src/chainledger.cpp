#include "vmon/chainledger.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>

namespace vmon {

namespace {

constexpr std::uint8_t kKindRegisterFiles = 1;
constexpr std::uint8_t kKindAnomalySignal = 2;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_string(std::vector<std::uint8_t>& out, std::string_view s) {
    if (s.size() > 0xffff) throw std::invalid_argument("string exceeds u16 length prefix");
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct ByteReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw LedgerError("truncated encoding");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] << 8 | bytes[pos + 1]);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | bytes[pos + i];
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | bytes[pos + i];
        pos += 8;
        return v;
    }
    std::string string() {
        std::size_t len = u16();
        need(len);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
        pos += len;
        return s;
    }
    crypto::Digest digest() {
        need(32);
        crypto::Digest d;
        std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), 32, d.begin());
        pos += 32;
        return d;
    }
};

std::uint64_t now_us() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
}

// Split ratio for calibrated intercepts: only g_base + g_hash is observable,
// the division between them follows the default schedule.
constexpr double kHashShareOfIntercept = 40'000.0 / 133'357.0;

}  // namespace

void GasSchedule::validate() const {
    if (g_base == 0 || g_hash == 0 || g_addr == 0)
        throw std::invalid_argument("gas schedule fields must be positive");
}

std::span<const std::pair<std::uint32_t, std::uint64_t>> reference_gas_observations() {
    static constexpr std::pair<std::uint32_t, std::uint64_t> kObservations[] = {
        {0, 133'357}, {1, 153'595}, {2, 174'312}, {3, 194'558}, {4, 214'848}, {5, 235'158},
        {6, 214'848}, {7, 194'558}, {8, 174'312}, {9, 153'595}, {10, 133'357},
    };
    return kObservations;
}

bool AccessPolicy::allows(std::uint16_t peer) const {
    const bool listed = std::binary_search(ids.begin(), ids.end(), peer);
    return mode == PolicyMode::AllowList ? listed : !listed;
}

AccessPolicy open_policy(std::uint16_t network_size) {
    return AccessPolicy{PolicyMode::DenyList, {}, network_size};
}

AccessPolicy canonicalize_policy(std::span<const std::uint16_t> allowed, std::uint16_t network_size) {
    std::vector<std::uint16_t> ids(allowed.begin(), allowed.end());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (std::uint16_t id : ids)
        if (id >= network_size)
            throw std::invalid_argument("policy id " + std::to_string(id) + " outside network");

    AccessPolicy policy;
    policy.network_size = network_size;
    if (ids.size() * 2 <= network_size) {
        policy.mode = PolicyMode::AllowList;
        policy.ids = std::move(ids);
    } else {
        policy.mode = PolicyMode::DenyList;
        policy.ids.reserve(network_size - ids.size());
        auto it = ids.begin();
        for (std::uint16_t id = 0; id < network_size; ++id) {
            if (it != ids.end() && *it == id)
                ++it;
            else
                policy.ids.push_back(id);
        }
    }
    return policy;
}

std::uint64_t estimate_gas(const TxPayload& payload, const GasSchedule& schedule) {
    schedule.validate();
    if (const auto* reg = std::get_if<RegisterFiles>(&payload)) {
        return schedule.g_base + reg->entries.size() * schedule.g_hash +
               reg->policy.ids.size() * schedule.g_addr;
    }
    return schedule.g_base;
}

GasSchedule calibrate_schedule(std::span<const std::pair<std::uint32_t, std::uint64_t>> observations) {
    std::vector<std::uint32_t> distinct;
    for (const auto& [k, gas] : observations) distinct.push_back(k);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2)
        throw std::invalid_argument("calibration needs at least 2 distinct policy sizes");

    double n = 0, sum_k = 0, sum_y = 0, sum_kk = 0, sum_ky = 0;
    for (const auto& [k, gas] : observations) {
        const double kd = k, yd = static_cast<double>(gas);
        n += 1;
        sum_k += kd;
        sum_y += yd;
        sum_kk += kd * kd;
        sum_ky += kd * yd;
    }
    const double denom = n * sum_kk - sum_k * sum_k;
    const double slope = (n * sum_ky - sum_k * sum_y) / denom;
    const double intercept = (sum_y - slope * sum_k) / n;
    if (!(slope > 0.0) || !(intercept > 1.0))
        throw std::invalid_argument("calibration produced a non-positive schedule");

    GasSchedule schedule;
    schedule.g_addr = static_cast<std::uint64_t>(std::llround(slope));
    const std::uint64_t total = static_cast<std::uint64_t>(std::llround(intercept));
    schedule.g_hash = static_cast<std::uint64_t>(std::llround(intercept * kHashShareOfIntercept));
    if (schedule.g_hash == 0 || schedule.g_hash >= total)
        throw std::invalid_argument("calibration intercept too small to split");
    schedule.g_base = total - schedule.g_hash;
    schedule.validate();
    return schedule;
}

std::vector<std::uint8_t> encode_tx(const Transaction& tx) {
    std::vector<std::uint8_t> out;
    out.push_back(std::holds_alternative<RegisterFiles>(tx.payload) ? kKindRegisterFiles
                                                                    : kKindAnomalySignal);
    put_u16(out, tx.sender);
    put_u64(out, tx.nonce);
    put_u64(out, tx.gas_used);
    if (const auto* reg = std::get_if<RegisterFiles>(&tx.payload)) {
        put_u32(out, static_cast<std::uint32_t>(reg->entries.size()));
        for (const auto& e : reg->entries) {
            put_string(out, e.file_name);
            out.insert(out.end(), e.hash.digest.begin(), e.hash.digest.end());
        }
        out.push_back(static_cast<std::uint8_t>(reg->policy.mode));
        put_u16(out, reg->policy.network_size);
        put_u16(out, static_cast<std::uint16_t>(reg->policy.ids.size()));
        for (std::uint16_t id : reg->policy.ids) put_u16(out, id);
    } else {
        const auto& sig = std::get<AnomalySignal>(tx.payload);
        put_u16(out, sig.unit_id);
        put_string(out, sig.summary);
    }
    return out;
}

Transaction decode_tx(std::span<const std::uint8_t> bytes, std::size_t& offset) {
    ByteReader r{bytes, offset};
    Transaction tx;
    const std::uint8_t kind = r.u8();
    tx.sender = r.u16();
    tx.nonce = r.u64();
    tx.gas_used = r.u64();
    if (kind == kKindRegisterFiles) {
        RegisterFiles reg;
        const std::uint32_t count = r.u32();
        reg.entries.reserve(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            RegisterEntry e;
            e.file_name = r.string();
            e.hash.digest = r.digest();
            reg.entries.push_back(std::move(e));
        }
        const std::uint8_t mode = r.u8();
        if (mode > 1) throw LedgerError("bad policy mode");
        reg.policy.mode = static_cast<PolicyMode>(mode);
        reg.policy.network_size = r.u16();
        const std::uint16_t id_count = r.u16();
        reg.policy.ids.reserve(id_count);
        for (std::uint16_t i = 0; i < id_count; ++i) reg.policy.ids.push_back(r.u16());
        tx.payload = std::move(reg);
    } else if (kind == kKindAnomalySignal) {
        AnomalySignal sig;
        sig.unit_id = r.u16();
        sig.summary = r.string();
        tx.payload = std::move(sig);
    } else {
        throw LedgerError("unknown transaction kind");
    }
    offset = r.pos;
    return tx;
}

crypto::Digest hash_block(const Block& block) {
    std::vector<std::uint8_t> preimage;
    put_u64(preimage, block.index);
    preimage.insert(preimage.end(), block.prev_hash.begin(), block.prev_hash.end());
    put_u64(preimage, block.timestamp_us);
    put_u32(preimage, static_cast<std::uint32_t>(block.transactions.size()));
    for (const auto& tx : block.transactions) {
        auto enc = encode_tx(tx);
        preimage.insert(preimage.end(), enc.begin(), enc.end());
    }
    put_u64(preimage, block.nonce);
    return crypto::sha256(preimage);
}

std::vector<std::uint8_t> encode_block(const Block& block) {
    std::vector<std::uint8_t> out;
    put_u64(out, block.index);
    out.insert(out.end(), block.prev_hash.begin(), block.prev_hash.end());
    put_u64(out, block.timestamp_us);
    put_u32(out, static_cast<std::uint32_t>(block.transactions.size()));
    for (const auto& tx : block.transactions) {
        auto enc = encode_tx(tx);
        out.insert(out.end(), enc.begin(), enc.end());
    }
    put_u64(out, block.nonce);
    out.insert(out.end(), block.block_hash.begin(), block.block_hash.end());
    return out;
}

Block decode_block(std::span<const std::uint8_t> bytes) {
    ByteReader r{bytes, 0};
    Block b;
    b.index = r.u64();
    b.prev_hash = r.digest();
    b.timestamp_us = r.u64();
    const std::uint32_t tx_count = r.u32();
    b.transactions.reserve(tx_count);
    for (std::uint32_t i = 0; i < tx_count; ++i) {
        std::size_t off = r.pos;
        b.transactions.push_back(decode_tx(bytes, off));
        r.pos = off;
    }
    b.nonce = r.u64();
    b.block_hash = r.digest();
    if (r.pos != bytes.size()) throw LedgerError("trailing bytes after block");
    return b;
}

unsigned leading_zero_bits(const crypto::Digest& digest) {
    unsigned bits = 0;
    for (std::uint8_t byte : digest) {
        if (byte == 0) {
            bits += 8;
            continue;
        }
        bits += static_cast<unsigned>(std::countl_zero(byte));
        break;
    }
    return bits;
}

std::optional<std::uint64_t> verify_blocks(std::span<const Block> blocks,
                                           const GasSchedule& schedule, std::uint32_t difficulty) {
    std::map<std::uint16_t, std::uint64_t> last_nonce;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Block& b = blocks[i];
        if (b.index != i) return i;
        const crypto::Digest expected_prev = i == 0 ? crypto::Digest{} : blocks[i - 1].block_hash;
        if (b.prev_hash != expected_prev) return i;
        if (hash_block(b) != b.block_hash) return i;
        if (leading_zero_bits(b.block_hash) < difficulty) return i;
        for (const auto& tx : b.transactions) {
            if (estimate_gas(tx.payload, schedule) != tx.gas_used) return i;
            auto [it, first] = last_nonce.try_emplace(tx.sender, tx.nonce);
            if (!first) {
                if (tx.nonce <= it->second) return i;
                it->second = tx.nonce;
            }
        }
    }
    return std::nullopt;
}

Chain::Chain(std::uint16_t n_peers, GasSchedule schedule, std::uint32_t difficulty,
             std::uint64_t initial_balance)
    : n_peers_(n_peers), schedule_(schedule), difficulty_(difficulty) {
    if (n_peers == 0) throw std::invalid_argument("a chain needs at least one peer");
    schedule_.validate();
    for (std::uint16_t p = 0; p < n_peers; ++p) balances_[p] = initial_balance;
    blocks_.push_back(mine_locked({}));  // genesis
}

void Chain::check_sender(std::uint16_t sender) const {
    if (sender >= n_peers_) throw std::invalid_argument("unknown peer " + std::to_string(sender));
}

std::uint64_t Chain::reserved_gas(std::uint16_t sender) const {
    std::uint64_t reserved = 0;
    for (const auto& tx : pending_)
        if (tx.sender == sender) reserved += tx.gas_used;
    return reserved;
}

std::uint64_t Chain::submit_tx(std::uint16_t sender, TxPayload payload) {
    std::unique_lock lock(mutex_);
    check_sender(sender);

    if (const auto* reg = std::get_if<RegisterFiles>(&payload)) {
        if (reg->entries.empty()) throw std::invalid_argument("no entries to register");
        if (reg->policy.network_size != n_peers_)
            throw std::invalid_argument("policy network size mismatch");
        for (const auto& e : reg->entries) {
            if (e.file_name.empty()) throw std::invalid_argument("empty file name");
            if (auto it = registry_.find(e.file_name); it != registry_.end() && it->second.sender != sender)
                throw NameOwnedError(e.file_name + " already registered by peer " +
                                     std::to_string(it->second.sender));
            for (const auto& p : pending_)
                if (const auto* preg = std::get_if<RegisterFiles>(&p.payload); preg && p.sender != sender)
                    for (const auto& pe : preg->entries)
                        if (pe.file_name == e.file_name)
                            throw NameOwnedError(e.file_name + " pending from peer " +
                                                 std::to_string(p.sender));
        }
    }

    const std::uint64_t gas = estimate_gas(payload, schedule_);
    const std::uint64_t available = balances_.at(sender) - reserved_gas(sender);
    if (available < gas)
        throw InsufficientBalanceError("peer " + std::to_string(sender) + " has " +
                                       std::to_string(available) + " gas, needs " + std::to_string(gas));

    Transaction tx;
    tx.sender = sender;
    tx.payload = std::move(payload);
    tx.gas_used = gas;
    tx.nonce = next_nonce_[sender]++;
    pending_.push_back(std::move(tx));
    return pending_.back().nonce;
}

Block Chain::mine_locked(std::vector<Transaction> txs) {
    Block block;
    block.index = blocks_.size();
    block.prev_hash = blocks_.empty() ? crypto::Digest{} : blocks_.back().block_hash;
    block.timestamp_us = now_us();
    block.transactions = std::move(txs);
    for (block.nonce = 0;; ++block.nonce) {
        block.block_hash = hash_block(block);
        if (leading_zero_bits(block.block_hash) >= difficulty_) break;
    }
    return block;
}

std::optional<Block> Chain::mine_block(std::uint16_t miner) {
    std::unique_lock lock(mutex_);
    check_sender(miner);
    if (pending_.empty()) return std::nullopt;

    Block block = mine_locked(std::move(pending_));
    pending_.clear();

    for (const auto& tx : block.transactions) {
        auto& bal = balances_.at(tx.sender);
        if (bal < tx.gas_used) throw std::logic_error("mined transaction overdraws sender");
        bal -= tx.gas_used;
        if (const auto* reg = std::get_if<RegisterFiles>(&tx.payload))
            for (const auto& e : reg->entries)
                registry_[e.file_name] =
                    RegistryEntry{e.file_name, e.hash, reg->policy, tx.sender, block.index};
    }
    blocks_.push_back(block);
    return block;
}

std::optional<std::uint64_t> Chain::verify_chain() const {
    std::shared_lock lock(mutex_);
    return verify_blocks(blocks_, schedule_, difficulty_);
}

std::optional<RegistryEntry> Chain::query_registry(std::string_view file_name) const {
    std::shared_lock lock(mutex_);
    auto it = registry_.find(file_name);
    if (it == registry_.end()) return std::nullopt;
    return it->second;
}

std::vector<RegistryEntry> Chain::query_registry_by_sender(std::uint16_t sender) const {
    std::shared_lock lock(mutex_);
    std::vector<RegistryEntry> out;
    for (const auto& [name, entry] : registry_)
        if (entry.sender == sender) out.push_back(entry);
    return out;
}

std::vector<RegistryEntry> Chain::registrations_since(std::uint64_t block_height) const {
    return registrations_between(block_height, std::numeric_limits<std::uint64_t>::max());
}

std::vector<ObservedSignal> Chain::signals_since(std::uint64_t block_height) const {
    return signals_between(block_height, std::numeric_limits<std::uint64_t>::max());
}

std::vector<RegistryEntry> Chain::registrations_between(std::uint64_t from, std::uint64_t to) const {
    std::shared_lock lock(mutex_);
    std::vector<RegistryEntry> out;
    const std::size_t end = static_cast<std::size_t>(std::min<std::uint64_t>(to, blocks_.size()));
    for (std::size_t i = from; i < end; ++i)
        for (const auto& tx : blocks_[i].transactions)
            if (const auto* reg = std::get_if<RegisterFiles>(&tx.payload))
                for (const auto& e : reg->entries)
                    out.push_back(RegistryEntry{e.file_name, e.hash, reg->policy, tx.sender, i});
    return out;
}

std::vector<ObservedSignal> Chain::signals_between(std::uint64_t from, std::uint64_t to) const {
    std::shared_lock lock(mutex_);
    std::vector<ObservedSignal> out;
    const std::size_t end = static_cast<std::size_t>(std::min<std::uint64_t>(to, blocks_.size()));
    for (std::size_t i = from; i < end; ++i)
        for (const auto& tx : blocks_[i].transactions)
            if (const auto* sig = std::get_if<AnomalySignal>(&tx.payload))
                out.push_back(ObservedSignal{tx.sender, sig->unit_id, sig->summary, i});
    return out;
}

bool Chain::can_access(std::uint16_t peer, std::string_view file_name) const {
    std::shared_lock lock(mutex_);
    auto it = registry_.find(file_name);
    if (it == registry_.end())
        throw UnregisteredNameError("no registration for " + std::string(file_name));
    if (it->second.sender == peer) return true;
    return it->second.policy.allows(peer);
}

std::uint64_t Chain::balance(std::uint16_t peer) const {
    std::shared_lock lock(mutex_);
    return balances_.at(peer);
}

std::uint64_t Chain::height() const {
    std::shared_lock lock(mutex_);
    return blocks_.size();
}

std::size_t Chain::pending_count() const {
    std::shared_lock lock(mutex_);
    return pending_.size();
}

std::size_t Chain::registry_size() const {
    std::shared_lock lock(mutex_);
    return registry_.size();
}

std::vector<Block> Chain::blocks_snapshot() const {
    std::shared_lock lock(mutex_);
    return blocks_;
}

}  // namespace vmon

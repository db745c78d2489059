#include "vmon/config.hpp"

#include <fstream>

#include "json.hpp"

namespace vmon {

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& field) {
    if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

SimConfig SimConfig::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open config " + file.string());
    json j = json::parse(in);

    SimConfig cfg;
    maybe(j, "seed", cfg.seed);
    maybe(j, "pacing", cfg.pacing);
    maybe(j, "hashes_per_tx", cfg.hashes_per_tx);

    if (j.contains("waveform")) {
        const auto& w = j.at("waveform");
        maybe(w, "frequency_hz", cfg.waveform.frequency_hz);
        maybe(w, "samples_per_cycle", cfg.waveform.samples_per_cycle);
        maybe(w, "amplitude_peak", cfg.waveform.amplitude_peak);
        maybe(w, "noise_amplitude", cfg.waveform.noise_amplitude);
        maybe(w, "baud_rate", cfg.waveform.baud_rate);
    }
    cfg.waveform.seed = cfg.seed;

    if (j.contains("detector")) {
        const auto& d = j.at("detector");
        maybe(d, "nominal_rms", cfg.detector.nominal_rms);
        maybe(d, "lower_frac", cfg.detector.lower_frac);
        maybe(d, "upper_frac", cfg.detector.upper_frac);
        maybe(d, "window_cycles", cfg.detector.window_cycles);
        maybe(d, "samples_per_cycle", cfg.detector.samples_per_cycle);
    }

    if (j.contains("voltstar")) {
        const auto& v = j.at("voltstar");
        maybe(v, "data_port", cfg.voltstar.data_port);
        maybe(v, "broadcast_port", cfg.voltstar.broadcast_port);
        maybe(v, "storage_dir", cfg.voltstar.storage_dir);
        maybe(v, "key_seed", cfg.voltstar.key_seed);
        maybe(v, "rows_per_file", cfg.voltstar.rows_per_file);
        maybe(v, "files_per_unit", cfg.voltstar.files_per_unit);
    }

    if (j.contains("voltchain")) {
        const auto& v = j.at("voltchain");
        maybe(v, "peers", cfg.voltchain.n_peers);
        maybe(v, "difficulty", cfg.voltchain.difficulty);
        maybe(v, "initial_balance", cfg.voltchain.initial_balance);
        maybe(v, "replication_factor", cfg.voltchain.replication_factor);
        maybe(v, "slot_duration", cfg.voltchain.slot_duration);
        maybe(v, "active_count", cfg.voltchain.active_count);
        if (v.contains("gas")) {
            const auto& g = v.at("gas");
            maybe(g, "g_base", cfg.voltchain.schedule.g_base);
            maybe(g, "g_hash", cfg.voltchain.schedule.g_hash);
            maybe(g, "g_addr", cfg.voltchain.schedule.g_addr);
        }
        if (v.contains("latency")) {
            const auto& l = v.at("latency");
            std::int64_t add_us = cfg.voltchain.latency.store_add_fixed.count();
            std::int64_t tx_us = cfg.voltchain.latency.tx_submit_fixed.count();
            maybe(l, "store_add_fixed_us", add_us);
            maybe(l, "store_add_us_per_byte", cfg.voltchain.latency.store_add_us_per_byte);
            maybe(l, "tx_submit_fixed_us", tx_us);
            cfg.voltchain.latency.store_add_fixed = std::chrono::microseconds(add_us);
            cfg.voltchain.latency.tx_submit_fixed = std::chrono::microseconds(tx_us);
        }
    }
    cfg.voltchain.detector = cfg.detector;

    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        maybe(b, "row_counts", cfg.bench.row_counts);
        maybe(b, "total_points", cfg.bench.total_points);
        maybe(b, "hashes_per_tx", cfg.bench.hashes_per_tx);
        maybe(b, "repetitions", cfg.bench.repetitions);
        maybe(b, "units", cfg.bench.units);
        maybe(b, "files_per_unit", cfg.bench.files_per_unit);
        maybe(b, "total_hashes", cfg.bench.total_hashes);
        maybe(b, "policy_sizes", cfg.bench.policy_sizes);
    }
    return cfg;
}

std::string SimConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["pacing"] = pacing;
    j["hashes_per_tx"] = hashes_per_tx;
    j["waveform"] = {{"frequency_hz", waveform.frequency_hz},
                     {"samples_per_cycle", waveform.samples_per_cycle},
                     {"amplitude_peak", waveform.amplitude_peak},
                     {"noise_amplitude", waveform.noise_amplitude},
                     {"baud_rate", waveform.baud_rate}};
    j["detector"] = {{"nominal_rms", detector.nominal_rms},
                     {"lower_frac", detector.lower_frac},
                     {"upper_frac", detector.upper_frac},
                     {"window_cycles", detector.window_cycles},
                     {"samples_per_cycle", detector.samples_per_cycle}};
    j["voltstar"] = {{"data_port", voltstar.data_port},
                     {"broadcast_port", voltstar.broadcast_port},
                     {"storage_dir", voltstar.storage_dir},
                     {"key_seed", voltstar.key_seed},
                     {"rows_per_file", voltstar.rows_per_file},
                     {"files_per_unit", voltstar.files_per_unit}};
    j["voltchain"] = {{"peers", voltchain.n_peers},
                      {"difficulty", voltchain.difficulty},
                      {"initial_balance", voltchain.initial_balance},
                      {"replication_factor", voltchain.replication_factor},
                      {"slot_duration", voltchain.slot_duration},
                      {"active_count", voltchain.active_count},
                      {"gas",
                       {{"g_base", voltchain.schedule.g_base},
                        {"g_hash", voltchain.schedule.g_hash},
                        {"g_addr", voltchain.schedule.g_addr}}},
                      {"latency",
                       {{"store_add_fixed_us", voltchain.latency.store_add_fixed.count()},
                        {"store_add_us_per_byte", voltchain.latency.store_add_us_per_byte},
                        {"tx_submit_fixed_us", voltchain.latency.tx_submit_fixed.count()}}}};
    j["bench"] = {{"row_counts", bench.row_counts},
                  {"total_points", bench.total_points},
                  {"hashes_per_tx", bench.hashes_per_tx},
                  {"repetitions", bench.repetitions},
                  {"units", bench.units},
                  {"files_per_unit", bench.files_per_unit},
                  {"total_hashes", bench.total_hashes},
                  {"policy_sizes", bench.policy_sizes}};
    return j.dump(2);
}

}  // namespace vmon

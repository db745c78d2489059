#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "vmon/experiments.hpp"
#include "vmon/voltchain.hpp"
#include "vmon/voltstar.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void handle_signal(int) { g_stop = 1; }

vmon::SimConfig load_config(const std::string& path) {
    if (path.empty()) return vmon::SimConfig{};
    return vmon::SimConfig::load(path);
}

int cmd_run(const std::string& id, const vmon::SimConfig& cfg, const std::string& out_dir) {
    auto result = vmon::run_experiment(id, cfg);
    vmon::emit_results(result.rows, result.verdicts, out_dir, result.id);
    for (const auto& v : result.verdicts)
        std::cout << "[" << (v.pass ? "PASS" : "FAIL") << "] " << v.name
                  << (v.detail.empty() ? "" : " (" + v.detail + ")") << "\n";
    for (const auto& [key, note] : result.notes) std::cout << key << ": " << note << "\n";
    std::cout << "wrote " << out_dir << "/" << result.id << "_metrics.csv\n";
    return result.all_pass() ? 0 : 1;
}

int cmd_calibrate(const std::string& observations_path) {
    std::vector<std::pair<std::uint32_t, std::uint64_t>> points;
    if (observations_path.empty()) {
        // Built-in reference table, reduced to distinct effective sizes.
        for (const auto& [size, gas] : vmon::reference_gas_observations()) {
            const std::uint32_t k_eff = std::min(size, 10u - size);
            if (std::none_of(points.begin(), points.end(),
                             [&](const auto& p) { return p.first == k_eff; }))
                points.push_back({k_eff, gas});
        }
    } else {
        std::ifstream in(observations_path);
        if (!in) {
            std::cerr << "cannot open " << observations_path << "\n";
            return 1;
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("policy", 0) == 0) continue;
            std::uint32_t k;
            std::uint64_t gas;
            if (std::sscanf(line.c_str(), "%u,%lu", &k, &gas) == 2) points.push_back({k, gas});
        }
    }
    auto schedule = vmon::calibrate_schedule(points);
    std::cout << "{ \"g_base\": " << schedule.g_base << ", \"g_hash\": " << schedule.g_hash
              << ", \"g_addr\": " << schedule.g_addr << " }\n";
    return 0;
}

int cmd_voltstar_serve(const vmon::SimConfig& cfg, int duration_s) {
    vmon::MUConfig mu_cfg;
    mu_cfg.data_port = cfg.voltstar.data_port;
    mu_cfg.broadcast_port = cfg.voltstar.broadcast_port;
    mu_cfg.storage_dir = cfg.voltstar.storage_dir;
    mu_cfg.detector = cfg.detector;
    mu_cfg.storage_key = vmon::crypto::derive_key(cfg.voltstar.key_seed, 0xffff);
    for (std::uint16_t u = 0; u < cfg.bench.units; ++u)
        mu_cfg.unit_keys[u] = vmon::crypto::derive_key(cfg.voltstar.key_seed, u);

    vmon::MasterUnit mu(mu_cfg);
    mu.start();
    std::cout << "mu: data port " << mu.data_port() << ", broadcast port " << mu.broadcast_port()
              << ", storage " << mu_cfg.storage_dir.string() << "\n";

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(duration_s);
    while (!g_stop && (duration_s == 0 || std::chrono::steady_clock::now() < deadline))
        std::this_thread::sleep_for(std::chrono::milliseconds(100));

    auto stats = mu.stats();
    mu.stop();
    std::cout << "mu: files_ok=" << stats.files_ok << " auth_failures=" << stats.auth_failures
              << " malformed_csv=" << stats.malformed_csv
              << " broadcasts=" << stats.broadcasts_sent << "\n";
    return 0;
}

int cmd_voltstar_tu(const vmon::SimConfig& cfg, std::uint16_t unit, bool inject_fault) {
    vmon::TUConfig tu_cfg;
    tu_cfg.unit_id = unit;
    tu_cfg.data_port = cfg.voltstar.data_port;
    tu_cfg.broadcast_port = cfg.voltstar.broadcast_port;
    tu_cfg.key = vmon::crypto::derive_key(cfg.voltstar.key_seed, unit);
    tu_cfg.waveform = cfg.waveform;
    tu_cfg.waveform.seed = cfg.seed + unit;
    tu_cfg.rows_per_file = cfg.voltstar.rows_per_file;
    tu_cfg.n_files = cfg.voltstar.files_per_unit;
    tu_cfg.paced_generation = cfg.pacing;
    if (inject_fault) {
        tu_cfg.faulty_file_index = tu_cfg.n_files - 1;
        const std::size_t w = cfg.detector.window_samples();
        const std::size_t start = tu_cfg.rows_per_file > w ? tu_cfg.rows_per_file - w : 0;
        tu_cfg.faults = {vmon::FaultSpec{vmon::FaultKind::Outage, 0.0, start,
                                         tu_cfg.rows_per_file - start}};
    }

    vmon::TransferUnit tu(tu_cfg);
    tu.start();
    std::cout << "tu" << unit << ": sending " << tu_cfg.n_files << " files of "
              << tu_cfg.rows_per_file << " rows to port " << tu_cfg.data_port << "\n";
    if (!tu.wait_all_sent(std::chrono::minutes(30))) {
        std::cerr << "tu" << unit << ": timed out\n";
        return 1;
    }
    auto ledger = tu.ledger_snapshot();
    std::cout << "tu" << unit << ": generated=" << ledger.generated.size()
              << " sent=" << ledger.sent.size() << " ok=" << tu.sent_ok_count() << "\n";
    for (const auto& frame : tu.broadcasts_received()) {
        auto report = vmon::decode_fault_frame(frame);
        std::cout << "tu" << unit << ": fault broadcast for unit " << report.unit_id << " "
                  << report.file_name << " window " << report.window_index << " "
                  << vmon::to_string(report.kind) << "\n";
    }
    tu.stop();
    return 0;
}

int cmd_voltchain_node(const vmon::SimConfig& cfg, int ticks, int fault_unit) {
    vmon::VoltchainConfig vc = cfg.voltchain;
    vmon::VoltchainNetwork net(vc);
    const std::uint16_t n = net.peer_count();
    std::cout << "voltchain: " << n << " peers, difficulty " << net.chain().difficulty()
              << ", hashes_per_tx " << cfg.hashes_per_tx << "\n";

    for (std::uint16_t p = 0; p < n; ++p) {
        std::vector<vmon::DataFile> batch;
        for (std::uint32_t f = 0; f < cfg.voltstar.files_per_unit; ++f) {
            vmon::WaveformConfig wf = cfg.waveform;
            wf.seed = cfg.seed + 1000003ULL * p + f;
            vmon::DataFile file;
            file.unit_id = p;
            file.sequence_no = f;
            const bool faulty = p == fault_unit && f + 1 == cfg.voltstar.files_per_unit;
            if (faulty) {
                const std::size_t w = cfg.detector.window_samples();
                const std::size_t start =
                    cfg.voltstar.rows_per_file > w ? cfg.voltstar.rows_per_file - w : 0;
                vmon::FaultSpec outage{vmon::FaultKind::Outage, 0.0, start,
                                       cfg.voltstar.rows_per_file - start};
                file.rows = vmon::generate_samples(wf, cfg.voltstar.rows_per_file,
                                                   std::span(&outage, 1));
            } else {
                file.rows = vmon::generate_samples(wf, cfg.voltstar.rows_per_file);
            }
            batch.push_back(std::move(file));
        }
        auto receipt = net.pu(p).upload_cycle(batch, cfg.hashes_per_tx);
        std::cout << "pu" << p << ": uploaded " << receipt.files.size() << " files in "
                  << receipt.txs.size() << " txs\n";
    }

    std::size_t total_reports = 0;
    for (int t = 0; t < ticks; ++t) {
        auto roles = net.apply_rotation(static_cast<std::uint64_t>(t) * vc.slot_duration);
        for (std::uint16_t p = 0; p < n; ++p) {
            if (roles[p] != vmon::PuRole::Active) continue;
            auto outcome = net.pu(p).active_scan();
            total_reports += outcome.reports.size();
            std::cout << "tick " << t << ": pu" << p << " active, fetched " << outcome.fetched
                      << ", denied " << outcome.denied << ", reports " << outcome.reports.size()
                      << "\n";
            for (const auto& r : outcome.reports)
                if (auto nonce = net.pu(p).signal_anomaly(r))
                    std::cout << "  signalled " << vmon::ProcessingUnit::signal_summary(r)
                              << " (nonce " << *nonce << ")\n";
        }
    }

    for (std::uint16_t p = 0; p < n; ++p) {
        auto observed = net.pu(p).poll_signals();
        std::cout << "pu" << p << ": observed " << observed.size() << " signals\n";
    }
    std::cout << "registry entries: " << net.chain().registry_size()
              << ", chain height: " << net.chain().height()
              << ", verified: " << (net.chain().verify_chain() ? "INVALID" : "ok") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-mode voltage monitoring simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "results";
    std::uint64_t seed = 0;
    bool seed_set = false, no_pacing = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "override RNG seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out_dir, "output directory for results");
    app.add_flag("--no-pacing", no_pacing, "disable serial-feed pacing");

    auto* run = app.add_subcommand("run", "run an experiment (E1-transfer, E2-detect, E3-gas-batch, E4-gas-policy)");
    std::string experiment_id;
    run->add_option("experiment", experiment_id, "experiment id")->required();

    auto* calibrate = app.add_subcommand("calibrate-gas", "fit a gas schedule from observations");
    std::string observations_path;
    calibrate->add_option("--observations", observations_path,
                          "CSV of effective_policy_size,total_gas (default: built-in table)");

    auto* voltstar = app.add_subcommand("voltstar", "centralized mode");
    auto* serve = voltstar->add_subcommand("serve", "run the master unit");
    int duration_s = 0;
    serve->add_option("--duration", duration_s, "stop after N seconds (0 = until SIGINT)");
    auto* tu_cmd = voltstar->add_subcommand("tu", "run a transfer unit");
    std::uint16_t unit_id = 0;
    bool inject_fault = false;
    tu_cmd->add_option("--unit", unit_id, "unit id")->required();
    tu_cmd->add_flag("--inject-fault", inject_fault, "inject an end-of-file outage in the last file");
    voltstar->require_subcommand(1);

    auto* voltchain = app.add_subcommand("voltchain", "decentralized mode");
    auto* node = voltchain->add_subcommand("node", "run an in-process peer network");
    int ticks = 10, fault_unit = -1;
    node->add_option("--ticks", ticks, "rotation ticks to simulate");
    node->add_option("--fault-unit", fault_unit, "unit whose last file carries an outage");
    voltchain->require_subcommand(1);

    CLI11_PARSE(app, argc, argv);

    try {
        vmon::SimConfig cfg = load_config(config_path);
        if (seed_set) {
            cfg.seed = seed;
            cfg.waveform.seed = seed;
        }
        if (no_pacing) cfg.pacing = false;

        if (run->parsed()) return cmd_run(experiment_id, cfg, out_dir);
        if (calibrate->parsed()) return cmd_calibrate(observations_path);
        if (voltstar->parsed()) {
            if (serve->parsed()) return cmd_voltstar_serve(cfg, duration_s);
            return cmd_voltstar_tu(cfg, unit_id, inject_fault);
        }
        if (voltchain->parsed()) return cmd_voltchain_node(cfg, ticks, fault_unit);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

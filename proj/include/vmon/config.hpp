#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vmon/detector.hpp"
#include "vmon/voltchain.hpp"
#include "vmon/waveform.hpp"

namespace vmon {

// Whole-simulation configuration document (JSON). Every field has a default;
// a config file only overrides what it names.
struct SimConfig {
    std::uint64_t seed = 42;
    bool pacing = false;

    WaveformConfig waveform;
    DetectorConfig detector;

    struct Voltstar {
        std::uint16_t data_port = 7501;
        std::uint16_t broadcast_port = 7502;
        std::string storage_dir = "mu_storage";
        std::uint64_t key_seed = 7;  // per-unit pre-shared keys derive from this
        std::size_t rows_per_file = 2000;
        std::size_t files_per_unit = 10;
    } voltstar;

    VoltchainConfig voltchain;
    std::uint32_t hashes_per_tx = 1;

    struct Bench {
        std::vector<std::size_t> row_counts{1'000, 5'000, 20'000, 100'000};
        std::size_t total_points = 1'000'000;
        std::vector<std::uint32_t> hashes_per_tx{1, 2, 5, 10, 20, 50, 100};
        std::uint32_t repetitions = 5;
        std::uint16_t units = 10;
        std::uint32_t files_per_unit = 10;
        std::uint32_t total_hashes = 100;
        std::vector<std::uint32_t> policy_sizes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    } bench;

    static SimConfig load(const std::filesystem::path& file);  // throws on parse errors
    std::string to_json() const;
};

}  // namespace vmon

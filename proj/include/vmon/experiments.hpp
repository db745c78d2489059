#pragma once

#include <map>
#include <string>
#include <vector>

#include "vmon/config.hpp"
#include "vmon/metrics.hpp"

namespace vmon {

struct ExperimentResult {
    std::string id;
    std::vector<MetricRow> rows;
    std::vector<TrendVerdict> verdicts;
    std::map<std::string, std::string> notes;

    bool all_pass() const;
};

// E1: 10 units × 10 files per swept row count; per-file transfer time over
// sockets (VoltStar) vs per-file store-add + transaction + mining time
// (VoltChain), medians over repetitions.
ExperimentResult run_e1_transfer(const SimConfig& config);

// E2: end-of-file fault detection latency per row count, and total latency to
// find a fault at the end of total_points points split into files of each
// swept size (the minimum is recorded, not asserted).
ExperimentResult run_e2_detect(const SimConfig& config);

// E3: fixed total hash count registered in transactions of h hashes each,
// h swept; total gas per sweep point from the transactions actually mined.
ExperimentResult run_e3_gas_batch(const SimConfig& config);

// E4: one 1-hash registration per policy size 0..10 under the schedule
// calibrated from the reference gas observations.
ExperimentResult run_e4_gas_policy(const SimConfig& config);

ExperimentResult run_experiment(const std::string& id, const SimConfig& config);

/// Builds the per-unit healthy file set used by E1 (deterministic per seed).
std::vector<std::string> experiment_ids();

}  // namespace vmon

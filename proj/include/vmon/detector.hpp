#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmon/waveform.hpp"

namespace vmon {

struct DetectorConfig {
    double nominal_rms = kNominalRmsVolts;
    double lower_frac = 0.9;
    double upper_frac = 1.1;
    std::uint32_t window_cycles = 10;
    std::uint32_t samples_per_cycle = 200;

    std::size_t window_samples() const {
        return static_cast<std::size_t>(window_cycles) * samples_per_cycle;
    }
    double lower_bound() const { return lower_frac * nominal_rms; }
    double upper_bound() const { return upper_frac * nominal_rms; }

    void validate() const;
};

enum class AnomalyKind : std::uint8_t { Undervoltage = 0, Overvoltage = 1 };

const char* to_string(AnomalyKind kind);

struct AnomalyReport {
    std::uint16_t unit_id = 0;
    std::string file_name;
    std::size_t window_index = 0;
    double rms_value = 0.0;
    AnomalyKind kind = AnomalyKind::Undervoltage;
    std::uint64_t detected_at_us = 0;  // timestamp of window end
};

/// sqrt of the mean of squares. Throws std::invalid_argument on empty input.
double rms(std::span<const double> window);
double rms(std::span<const VoltageSample> window);

// Partitions rows into consecutive non-overlapping windows of
// window_cycles × samples_per_cycle samples (a final partial window of at
// least one full cycle is evaluated, a shorter tail is skipped) and reports
// every window whose RMS falls outside [lower_frac, upper_frac] × nominal_rms.
// Window RMS values are computed by an OpenMP kernel; results are identical
// to scan_file_serial for any thread count.
std::vector<AnomalyReport> scan_file(std::span<const VoltageSample> rows,
                                     const DetectorConfig& config,
                                     std::uint16_t unit_id = 0,
                                     std::string_view file_name = {});
std::vector<AnomalyReport> scan_file(const DataFile& file, const DetectorConfig& config);

/// Serial reference implementation kept for testing the kernel above.
std::vector<AnomalyReport> scan_file_serial(std::span<const VoltageSample> rows,
                                            const DetectorConfig& config,
                                            std::uint16_t unit_id = 0,
                                            std::string_view file_name = {});

/// Scans windows in order and stops at the first out-of-band one.
std::optional<AnomalyReport> first_anomaly(std::span<const VoltageSample> rows,
                                           const DetectorConfig& config,
                                           std::uint16_t unit_id = 0,
                                           std::string_view file_name = {});

// Wall-clock duration from scan start until the first report is produced
// (monotonic clock). nullopt when the rows contain no anomaly.
std::optional<std::chrono::nanoseconds> detection_latency(std::span<const VoltageSample> rows,
                                                          const DetectorConfig& config);

}  // namespace vmon

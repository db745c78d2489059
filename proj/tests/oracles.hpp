// Test-side reference oracles, independent of the library implementations
// they check. Frozen constants were computed with external tools before the
// corresponding code was written.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vmon/detector.hpp"
#include "vmon/waveform.hpp"

namespace oracle {

// --- frozen reference values (computed externally beforehand) ---

// python hashlib: sha256(b"hello")
inline constexpr const char* kSha256Hello =
    "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824";
// FIPS 180-4 vectors
inline constexpr const char* kSha256Abc =
    "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
inline constexpr const char* kSha256Empty =
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

// python cryptography AESGCM: key=00..1f, nonce=00..0b, aad=0x0007,
// pt="timestamp_us,volts\n0,0.000000\n"
inline constexpr const char* kGcmPlain = "timestamp_us,volts\n0,0.000000\n";
inline constexpr std::uint16_t kGcmKeyId = 7;
inline constexpr const char* kGcmCiphertext =
    "336bbb7eb691a376fd1ee2f89d9f1701f7a58d04dc4b714c0857d5b52d63";
inline constexpr const char* kGcmTag = "b2eccef1f68c2d3e3249f05fd68abffe";

// Direct-summation least squares over the 6 distinct calibration points
// (effective sizes 0..5): slope 2139030/105, intercept 800252.2857/6.
inline constexpr double kFitSlope = 20371.714285714286;
inline constexpr double kFitIntercept = 133375.38095238095;

// sqrt(sum/16) of the fixed window below.
inline constexpr double kRms16 = 95.22210364950725;
inline constexpr double kRms16Window[16] = {3.25,  -1.5, 0.0,    7.75, -2.125, 230.0,
                                            -230.0, 12.5, 99.875, -64.0, 1.0,   -1.0,
                                            45.5,  -17.25, 8.0,   150.125};

// --- brute-force oracles ---

inline double brute_rms(std::span<const double> values) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[i] * values[i];
    return std::sqrt(sum / static_cast<double>(values.size()));
}

struct BruteWindow {
    std::size_t index;
    double rms;
    bool under;
    bool over;
    std::uint64_t end_ts;
};

// Re-derives the windowing and band rules directly from their definitions.
inline std::vector<BruteWindow> brute_scan(std::span<const vmon::VoltageSample> rows,
                                           const vmon::DetectorConfig& cfg) {
    std::vector<BruteWindow> out;
    const std::size_t w = static_cast<std::size_t>(cfg.window_cycles) * cfg.samples_per_cycle;
    std::size_t begin = 0, index = 0;
    while (begin < rows.size()) {
        const std::size_t len = std::min(w, rows.size() - begin);
        if (len < w && len < cfg.samples_per_cycle) break;  // tail shorter than one cycle
        std::vector<double> volts;
        for (std::size_t i = begin; i < begin + len; ++i) volts.push_back(rows[i].volts);
        const double r = brute_rms(volts);
        BruteWindow bw;
        bw.index = index;
        bw.rms = r;
        bw.under = r < cfg.lower_frac * cfg.nominal_rms;
        bw.over = r > cfg.upper_frac * cfg.nominal_rms;
        bw.end_ts = rows[begin + len - 1].timestamp_us;
        out.push_back(bw);
        begin += len;
        ++index;
    }
    return out;
}

inline std::vector<BruteWindow> brute_anomalies(std::span<const vmon::VoltageSample> rows,
                                                const vmon::DetectorConfig& cfg) {
    std::vector<BruteWindow> out;
    for (const auto& w : brute_scan(rows, cfg))
        if (w.under || w.over) out.push_back(w);
    return out;
}

}  // namespace oracle

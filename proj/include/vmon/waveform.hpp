#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vmon {

constexpr double kNominalRmsVolts = 230.0;
constexpr double kSqrt2 = 1.4142135623730950488;

/// Default peak amplitude: 230 V RMS on a 50 Hz grid, i.e. 230·√2 ≈ 325.27 V.
constexpr double kDefaultAmplitudePeak = kNominalRmsVolts * kSqrt2;

struct WaveformConfig {
    double frequency_hz = 50.0;
    std::uint32_t samples_per_cycle = 200;
    double amplitude_peak = kDefaultAmplitudePeak;
    double noise_amplitude = 2.0;  // half-width of additive uniform noise, volts
    std::uint64_t seed = 0;
    std::uint32_t baud_rate = 9600;  // pacing only

    double sample_rate_hz() const { return frequency_hz * samples_per_cycle; }

    // Throws std::invalid_argument on any violated invariant. Sample rates
    // above 1 MHz are rejected: microsecond timestamps could no longer be
    // strictly increasing.
    void validate() const;
};

struct VoltageSample {
    std::uint64_t timestamp_us = 0;  // stream-relative, not wall clock
    double volts = 0.0;

    bool operator==(const VoltageSample&) const = default;
};

enum class FaultKind : std::uint8_t { Sag, Swell, Outage };

struct FaultSpec {
    FaultKind kind = FaultKind::Outage;
    double magnitude_frac = 0.0;  // sag in (0,1), swell > 1, ignored for outage
    std::size_t start_sample = 0;
    std::size_t duration_samples = 0;

    double multiplier() const {
        return kind == FaultKind::Outage ? 0.0 : magnitude_frac;
    }
    std::size_t end_sample() const { return start_sample + duration_samples; }
};

struct DataFile {
    std::uint16_t unit_id = 0;
    std::uint32_t sequence_no = 0;
    std::vector<VoltageSample> rows;

    std::string name() const;  // "u<unit_id>_f<sequence_no>.csv"
};

// Samplewise generation: volts_i = m_i · A · sin(2π·i/samples_per_cycle) + ε_i
// with m_i the fault multiplier covering i (1 if none) and ε_i seeded uniform
// noise in [-noise_amplitude, +noise_amplitude]. Noise is a pure function of
// (seed, i), so output is byte-identical across runs and thread counts.
// Throws std::invalid_argument on overlapping faults or out-of-range windows.
std::vector<VoltageSample> generate_samples(const WaveformConfig& config,
                                            std::size_t n_samples,
                                            std::span<const FaultSpec> faults = {});

/// Serial reference for the OpenMP kernel above; must produce identical bytes.
std::vector<VoltageSample> generate_samples_serial(const WaveformConfig& config,
                                                   std::size_t n_samples,
                                                   std::span<const FaultSpec> faults = {});

struct CsvError : std::runtime_error {
    std::size_t line;  // 1-based
    CsvError(std::size_t line_no, const std::string& what)
        : std::runtime_error("csv line " + std::to_string(line_no) + ": " + what),
          line(line_no) {}
};

// CSV wire format (bit-exact): header "timestamp_us,volts", LF newlines,
// volts with 6 decimal places.
std::string write_csv(std::span<const VoltageSample> rows);
std::string write_csv(const DataFile& file);

/// Inverse of write_csv up to volts rounding (within 5e-7 V). Throws CsvError.
std::vector<VoltageSample> read_csv(std::string_view bytes);

std::string format_csv_row(const VoltageSample& s);

// Delivers generated samples to a consumer, paced so the byte rate of their
// CSV encoding approximates baud_rate/10 bytes per second (10 bits per byte
// with framing). Pacing may be disabled for fast simulation.
class SampleStream {
  public:
    using Sink = std::function<void(const VoltageSample&)>;

    SampleStream(WaveformConfig config, Sink sink, bool paced = true);
    ~SampleStream();

    SampleStream(const SampleStream&) = delete;
    SampleStream& operator=(const SampleStream&) = delete;

    /// Stops the stream and joins; no deliveries happen after this returns.
    void stop();

    std::uint64_t delivered() const { return delivered_.load(); }

  private:
    void run();

    WaveformConfig config_;
    Sink sink_;
    bool paced_;
    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> delivered_{0};
    std::thread worker_;
};

}  // namespace vmon

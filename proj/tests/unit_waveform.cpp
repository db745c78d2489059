#include <atomic>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vmon/waveform.hpp"

using namespace vmon;

namespace {

WaveformConfig noiseless(double amplitude = kDefaultAmplitudePeak) {
    WaveformConfig cfg;
    cfg.noise_amplitude = 0.0;
    cfg.amplitude_peak = amplitude;
    return cfg;
}

}  // namespace

TEST_CASE("noiseless sample values at known phases") {
    auto samples = generate_samples(noiseless(325.27), 400);
    CHECK(samples[0].volts == 0.0);
    CHECK(samples[50].volts == doctest::Approx(325.27).epsilon(1e-12));  // sin(pi/2)
    CHECK(samples[0].timestamp_us == 0);
    CHECK(samples[1].timestamp_us == 100);  // 50 Hz x 200 samples -> 100 us spacing
}

TEST_CASE("sag multiplier applies at the peak sample") {
    FaultSpec sag{FaultKind::Sag, 0.5, 50, 1};
    auto samples = generate_samples(noiseless(325.27), 400, std::span(&sag, 1));
    CHECK(samples[50].volts == doctest::Approx(162.635).epsilon(1e-12));
    CHECK(samples[49].volts == doctest::Approx(325.27 * std::sin(2 * 3.14159265358979323846 * 49 / 200.0))
                                   .epsilon(1e-9));
}

TEST_CASE("seeded determinism across runs") {
    WaveformConfig cfg;
    cfg.seed = 42;
    cfg.noise_amplitude = 5.0;
    auto a = generate_samples(cfg, 400);
    auto b = generate_samples(cfg, 400);
    CHECK(a == b);

    cfg.seed = 43;
    CHECK(generate_samples(cfg, 400) != a);
}

TEST_CASE("openmp kernel matches the serial reference bit for bit") {
    WaveformConfig cfg;
    cfg.seed = 7;
    cfg.noise_amplitude = 2.0;
    std::vector<FaultSpec> faults{{FaultKind::Sag, 0.4, 1000, 500},
                                  {FaultKind::Outage, 0.0, 5000, 700},
                                  {FaultKind::Swell, 1.8, 9000, 250}};
    auto parallel = generate_samples(cfg, 20'000, faults);
    auto serial = generate_samples_serial(cfg, 20'000, faults);
    REQUIRE(parallel.size() == serial.size());
    CHECK(parallel == serial);
}

TEST_CASE("whole-cycle rms equals peak over sqrt2") {
    for (double amplitude : {kDefaultAmplitudePeak, 325.27, 100.0}) {
        auto samples = generate_samples(noiseless(amplitude), 2000);
        std::vector<double> volts;
        for (const auto& s : samples) volts.push_back(s.volts);
        const double rms = oracle::brute_rms(volts);
        CHECK(rms == doctest::Approx(amplitude / kSqrt2).epsilon(1e-9));
    }
}

TEST_CASE("fault multiplier covers exactly its window") {
    WaveformConfig cfg = noiseless();
    FaultSpec outage{FaultKind::Outage, 0.0, 100, 50};
    auto faulted = generate_samples(cfg, 400, std::span(&outage, 1));
    auto clean = generate_samples(cfg, 400);
    for (std::size_t i = 0; i < 400; ++i) {
        if (i >= 100 && i < 150)
            CHECK(faulted[i].volts == 0.0);
        else
            CHECK(faulted[i].volts == clean[i].volts);
    }
}

TEST_CASE("fault validation") {
    WaveformConfig cfg = noiseless();
    std::vector<FaultSpec> overlapping{{FaultKind::Sag, 0.5, 10, 20}, {FaultKind::Sag, 0.5, 25, 10}};
    CHECK_THROWS_AS(generate_samples(cfg, 100, overlapping), std::invalid_argument);

    FaultSpec out_of_range{FaultKind::Outage, 0.0, 90, 20};
    CHECK_THROWS_AS(generate_samples(cfg, 100, std::span(&out_of_range, 1)), std::invalid_argument);

    FaultSpec bad_sag{FaultKind::Sag, 1.5, 0, 10};
    CHECK_THROWS_AS(generate_samples(cfg, 100, std::span(&bad_sag, 1)), std::invalid_argument);

    CHECK_THROWS_AS(generate_samples(cfg, 0), std::invalid_argument);
}

TEST_CASE("config validation") {
    WaveformConfig cfg;
    cfg.frequency_hz = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = WaveformConfig{};
    cfg.samples_per_cycle = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = WaveformConfig{};
    cfg.noise_amplitude = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = WaveformConfig{};
    cfg.frequency_hz = 10'000;  // 2 MHz sample rate
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("csv single-sample encoding is bit-exact") {
    DataFile file;
    file.unit_id = 0;
    file.sequence_no = 0;
    file.rows = {{0, 0.0}};
    CHECK(write_csv(file) == "timestamp_us,volts\n0,0.000000\n");
}

TEST_CASE("csv line count is header plus rows") {
    DataFile file;
    file.unit_id = 1;
    file.sequence_no = 2;
    file.rows = generate_samples(WaveformConfig{}, 2000);
    const std::string csv = write_csv(file);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2001);
    CHECK(file.name() == "u1_f2.csv");
}

TEST_CASE("csv round trip: timestamps exact, volts within 5e-7") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        WaveformConfig cfg;
        cfg.seed = seed;
        auto rows = generate_samples(cfg, 777);
        auto parsed = read_csv(write_csv(rows));
        REQUIRE(parsed.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(parsed[i].timestamp_us == rows[i].timestamp_us);
            CHECK(std::abs(parsed[i].volts - rows[i].volts) <= 5e-7);
        }
    }
}

TEST_CASE("csv parse errors name the line") {
    CHECK_THROWS_AS(read_csv("timestamp_us,volts\n"), CsvError);  // header only
    CHECK_THROWS_AS(read_csv("bogus\n0,1.0\n"), CsvError);

    try {
        read_csv("timestamp_us,volts\n0,1.000000\n100,abc\n");
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("unpaced stream delivers fast and stops cleanly") {
    WaveformConfig cfg;
    std::atomic<std::uint64_t> seen{0};
    SampleStream stream(cfg, [&](const VoltageSample&) { seen.fetch_add(1); }, false);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (seen.load() < 10'000 && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    CHECK(seen.load() >= 10'000);

    stream.stop();
    const auto after_stop = seen.load();
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    CHECK(seen.load() == after_stop);
}

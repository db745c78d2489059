#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "vmon/detector.hpp"

using namespace vmon;

namespace {

std::vector<VoltageSample> noiseless_sine(std::size_t n, double amplitude = kDefaultAmplitudePeak,
                                          std::span<const FaultSpec> faults = {}) {
    WaveformConfig cfg;
    cfg.noise_amplitude = 0.0;
    cfg.amplitude_peak = amplitude;
    return generate_samples(cfg, n, faults);
}

// Random fault layout within n samples; may produce sags, swells, outages.
std::vector<FaultSpec> random_faults(std::mt19937_64& rng, std::size_t n) {
    std::vector<FaultSpec> faults;
    std::uniform_int_distribution<int> count_dist(0, 3);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::size_t cursor = 0;
    const int count = count_dist(rng);
    for (int i = 0; i < count && cursor + 10 < n; ++i) {
        std::uniform_int_distribution<std::size_t> start_dist(cursor, n - 5);
        const std::size_t start = start_dist(rng);
        std::uniform_int_distribution<std::size_t> len_dist(1, n - start);
        const std::size_t len = len_dist(rng);
        const double pick = frac(rng);
        FaultSpec f;
        f.start_sample = start;
        f.duration_samples = len;
        if (pick < 0.4) {
            f.kind = FaultKind::Outage;
        } else if (pick < 0.7) {
            f.kind = FaultKind::Sag;
            f.magnitude_frac = 0.2 + 0.6 * frac(rng);
        } else {
            f.kind = FaultKind::Swell;
            f.magnitude_frac = 1.2 + frac(rng);
        }
        faults.push_back(f);
        cursor = start + len;
    }
    return faults;
}

}  // namespace

TEST_CASE("rms of a constant window is its magnitude") {
    std::vector<double> window(37, -4.5);
    CHECK(rms(window) == doctest::Approx(4.5).epsilon(1e-12));
    CHECK_THROWS_AS(rms(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("rms of ten noiseless cycles is nominal") {
    auto rows = noiseless_sine(2000);
    CHECK(rms(std::span<const VoltageSample>(rows)) ==
          doctest::Approx(230.0).epsilon(1e-9));
    // With the literal two-decimal peak the value is 325.27/sqrt(2).
    auto rounded = noiseless_sine(2000, 325.27);
    CHECK(rms(std::span<const VoltageSample>(rounded)) ==
          doctest::Approx(325.27 / kSqrt2).epsilon(1e-9));
}

TEST_CASE("rms matches the direct-summation oracle on a fixed window") {
    std::span<const double> window(oracle::kRms16Window, 16);
    CHECK(rms(window) == doctest::Approx(oracle::kRms16).epsilon(1e-12));
    CHECK(rms(window) == doctest::Approx(oracle::brute_rms(window)).epsilon(1e-12));
}

TEST_CASE("rms scale equivariance") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> value(-400.0, 400.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> window(64);
        for (auto& v : window) v = value(rng);
        for (double k : {-3.0, 0.5, 7.25}) {
            std::vector<double> scaled(window);
            for (auto& v : scaled) v *= k;
            CHECK(rms(scaled) == doctest::Approx(std::abs(k) * rms(window)).epsilon(1e-12));
        }
    }
}

TEST_CASE("healthy file produces no reports") {
    DetectorConfig cfg;
    for (std::size_t n : {200, 2000, 20'000, 20'500}) {
        auto rows = noiseless_sine(n);
        CHECK(scan_file(rows, cfg).empty());
    }
}

TEST_CASE("end-of-file outage is reported in the final window") {
    DetectorConfig cfg;
    FaultSpec outage{FaultKind::Outage, 0.0, 18'000, 2000};
    auto rows = noiseless_sine(20'000, kDefaultAmplitudePeak, std::span(&outage, 1));

    auto reports = scan_file(rows, cfg, 3, "u3_f0.csv");
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].window_index == 9);
    CHECK(reports[0].kind == AnomalyKind::Undervoltage);
    CHECK(reports[0].unit_id == 3);
    CHECK(reports[0].file_name == "u3_f0.csv");
    CHECK(reports[0].detected_at_us == rows[19'999].timestamp_us);

    auto expected = oracle::brute_anomalies(rows, cfg);
    REQUIRE(expected.size() == 1);
    CHECK(expected[0].index == 9);
    CHECK(expected[0].under);
    CHECK(reports[0].rms_value == doctest::Approx(expected[0].rms).epsilon(1e-12));
}

TEST_CASE("whole-file swell marks every window overvoltage") {
    DetectorConfig cfg;
    FaultSpec swell{FaultKind::Swell, 1.5, 0, 20'000};
    auto rows = noiseless_sine(20'000, kDefaultAmplitudePeak, std::span(&swell, 1));
    auto reports = scan_file(rows, cfg);
    REQUIRE(reports.size() == 10);
    for (std::size_t w = 0; w < reports.size(); ++w) {
        CHECK(reports[w].window_index == w);
        CHECK(reports[w].kind == AnomalyKind::Overvoltage);
        CHECK(reports[w].rms_value == doctest::Approx(1.5 * 230.0).epsilon(1e-6));
    }
}

TEST_CASE("partial tail of at least one cycle is evaluated, shorter is skipped") {
    DetectorConfig cfg;

    // 2000 + 200: tail is exactly one cycle, fully faulted -> reported.
    FaultSpec tail_fault{FaultKind::Outage, 0.0, 2000, 200};
    auto rows = noiseless_sine(2200, kDefaultAmplitudePeak, std::span(&tail_fault, 1));
    auto reports = scan_file(rows, cfg);
    REQUIRE(reports.size() == 1);
    CHECK(reports[0].window_index == 1);

    // 2000 + 199: tail shorter than a cycle, faulted but skipped.
    FaultSpec short_fault{FaultKind::Outage, 0.0, 2000, 199};
    auto short_rows = noiseless_sine(2199, kDefaultAmplitudePeak, std::span(&short_fault, 1));
    CHECK(scan_file(short_rows, cfg).empty());
}

TEST_CASE("report count is invariant under window-aligned rechunking") {
    DetectorConfig cfg;
    FaultSpec sag{FaultKind::Sag, 0.3, 6000, 2000};
    auto rows = noiseless_sine(12'000, kDefaultAmplitudePeak, std::span(&sag, 1));

    const auto whole = scan_file(rows, cfg);
    std::size_t chunked_total = 0;
    for (std::size_t chunk : {2000, 4000, 6000}) {
        std::size_t count = 0;
        for (std::size_t begin = 0; begin < rows.size(); begin += chunk)
            count += scan_file(std::span(rows).subspan(begin, chunk), cfg).size();
        if (chunk == 2000) chunked_total = count;
        CHECK(count == whole.size());
    }
    CHECK(chunked_total == whole.size());
}

TEST_CASE("randomized fault configurations match the brute-force oracle") {
    DetectorConfig cfg;
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2000 + (rng() % 8) * 1100;
        WaveformConfig wf;
        wf.seed = rng();
        wf.noise_amplitude = 2.0;
        auto rows = generate_samples(wf, n, random_faults(rng, n));

        auto got = scan_file(rows, cfg);
        auto expected = oracle::brute_anomalies(rows, cfg);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].window_index == expected[i].index);
            CHECK(got[i].rms_value == doctest::Approx(expected[i].rms).epsilon(1e-12));
            CHECK(got[i].kind ==
                  (expected[i].under ? AnomalyKind::Undervoltage : AnomalyKind::Overvoltage));
            CHECK(got[i].detected_at_us == expected[i].end_ts);
            // No report inside the band.
            CHECK((got[i].rms_value < cfg.lower_bound() || got[i].rms_value > cfg.upper_bound()));
        }
    }
}

TEST_CASE("parallel scan equals serial reference") {
    DetectorConfig cfg;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        WaveformConfig wf;
        wf.seed = rng();
        const std::size_t n = 4000 + (rng() % 20) * 1000;
        auto rows = generate_samples(wf, n, random_faults(rng, n));
        auto par = scan_file(rows, cfg);
        auto ser = scan_file_serial(rows, cfg);
        REQUIRE(par.size() == ser.size());
        for (std::size_t i = 0; i < par.size(); ++i) {
            CHECK(par[i].window_index == ser[i].window_index);
            CHECK(par[i].rms_value == ser[i].rms_value);  // bitwise
            CHECK(par[i].kind == ser[i].kind);
        }
    }
}

TEST_CASE("detection latency basics") {
    DetectorConfig cfg;

    auto healthy = noiseless_sine(20'000);
    CHECK(!detection_latency(healthy, cfg).has_value());

    FaultSpec first{FaultKind::Outage, 0.0, 0, 2000};
    auto early = noiseless_sine(200'000, kDefaultAmplitudePeak, std::span(&first, 1));
    auto early_latency = detection_latency(early, cfg);
    REQUIRE(early_latency.has_value());
    CHECK(early_latency->count() > 0);

    FaultSpec last{FaultKind::Outage, 0.0, 198'000, 2000};
    auto late = noiseless_sine(200'000, kDefaultAmplitudePeak, std::span(&last, 1));

    // Early fault terminates the measurement after one window; the end fault
    // scans the whole file. Compare medians of repeated runs.
    std::vector<double> early_ns, late_ns;
    for (int i = 0; i < 7; ++i) {
        early_ns.push_back(static_cast<double>(detection_latency(early, cfg)->count()));
        late_ns.push_back(static_cast<double>(detection_latency(late, cfg)->count()));
    }
    std::sort(early_ns.begin(), early_ns.end());
    std::sort(late_ns.begin(), late_ns.end());
    CHECK(late_ns[3] > early_ns[3]);
}

TEST_CASE("latency grows with scanned volume (end faults, median of 7)") {
    DetectorConfig cfg;
    auto make = [&](std::size_t n) {
        FaultSpec f{FaultKind::Outage, 0.0, n - 2000, 2000};
        return noiseless_sine(n, kDefaultAmplitudePeak, std::span(&f, 1));
    };
    auto small = make(100'000);
    auto large = make(200'000);

    std::vector<double> small_ns, large_ns;
    for (int i = 0; i < 7; ++i) {
        small_ns.push_back(static_cast<double>(detection_latency(small, cfg)->count()));
        large_ns.push_back(static_cast<double>(detection_latency(large, cfg)->count()));
    }
    std::sort(small_ns.begin(), small_ns.end());
    std::sort(large_ns.begin(), large_ns.end());
    CHECK(large_ns[3] > small_ns[3]);
}

TEST_CASE("detector config validation") {
    DetectorConfig cfg;
    cfg.lower_frac = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DetectorConfig{};
    cfg.upper_frac = 0.9;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = DetectorConfig{};
    cfg.window_cycles = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

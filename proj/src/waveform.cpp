#include "vmon/waveform.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace vmon {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// SplitMix64 output for counter i under a given seed; stateless so any index
// can be evaluated independently (and in parallel).
std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t i) {
    std::uint64_t z = seed + (i + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
}

void validate_faults(std::span<const FaultSpec> faults, std::size_t n_samples) {
    std::vector<FaultSpec> sorted(faults.begin(), faults.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const FaultSpec& a, const FaultSpec& b) { return a.start_sample < b.start_sample; });
    std::size_t prev_end = 0;
    for (const auto& f : sorted) {
        if (f.duration_samples == 0)
            throw std::invalid_argument("fault duration must be positive");
        if (f.kind == FaultKind::Sag && !(f.magnitude_frac > 0.0 && f.magnitude_frac < 1.0))
            throw std::invalid_argument("sag magnitude must lie in (0,1)");
        if (f.kind == FaultKind::Swell && !(f.magnitude_frac > 1.0))
            throw std::invalid_argument("swell magnitude must exceed 1");
        if (f.end_sample() > n_samples)
            throw std::invalid_argument("fault window exceeds generated range");
        if (f.start_sample < prev_end)
            throw std::invalid_argument("fault windows overlap");
        prev_end = f.end_sample();
    }
}

// Multiplier for sample i given faults sorted by start. 1.0 when uncovered.
double fault_multiplier(std::span<const FaultSpec> sorted, std::size_t i) {
    auto it = std::upper_bound(sorted.begin(), sorted.end(), i,
                               [](std::size_t idx, const FaultSpec& f) { return idx < f.start_sample; });
    if (it == sorted.begin()) return 1.0;
    --it;
    return i < it->end_sample() ? it->multiplier() : 1.0;
}

struct SampleKernel {
    const WaveformConfig& cfg;
    std::span<const FaultSpec> sorted_faults;
    double spacing_us;

    VoltageSample at(std::size_t i) const {
        const std::uint32_t spc = cfg.samples_per_cycle;
        const double phase = kTwoPi * (static_cast<double>(i % spc) / spc);
        double v = fault_multiplier(sorted_faults, i) * cfg.amplitude_peak * std::sin(phase);
        if (cfg.noise_amplitude > 0.0) {
            const double u = unit_double(splitmix64_at(cfg.seed, i));
            v += (2.0 * u - 1.0) * cfg.noise_amplitude;
        }
        return {static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * spacing_us)), v};
    }
};

}  // namespace

void WaveformConfig::validate() const {
    if (!(frequency_hz > 0.0)) throw std::invalid_argument("frequency_hz must be positive");
    if (samples_per_cycle < 2) throw std::invalid_argument("samples_per_cycle must be >= 2");
    if (!(amplitude_peak > 0.0)) throw std::invalid_argument("amplitude_peak must be positive");
    if (noise_amplitude < 0.0) throw std::invalid_argument("noise_amplitude must be >= 0");
    if (sample_rate_hz() > 1e6) throw std::invalid_argument("sample rate above 1 MHz breaks microsecond timestamps");
}

std::string DataFile::name() const {
    return "u" + std::to_string(unit_id) + "_f" + std::to_string(sequence_no) + ".csv";
}

std::vector<VoltageSample> generate_samples(const WaveformConfig& config,
                                            std::size_t n_samples,
                                            std::span<const FaultSpec> faults) {
    config.validate();
    if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    validate_faults(faults, n_samples);

    std::vector<FaultSpec> sorted(faults.begin(), faults.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const FaultSpec& a, const FaultSpec& b) { return a.start_sample < b.start_sample; });

    const SampleKernel kernel{config, sorted, 1e6 / config.sample_rate_hz()};
    std::vector<VoltageSample> out(n_samples);
    const std::int64_t n = static_cast<std::int64_t>(n_samples);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = kernel.at(static_cast<std::size_t>(i));
    }
    return out;
}

std::vector<VoltageSample> generate_samples_serial(const WaveformConfig& config,
                                                   std::size_t n_samples,
                                                   std::span<const FaultSpec> faults) {
    config.validate();
    if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    validate_faults(faults, n_samples);

    std::vector<FaultSpec> sorted(faults.begin(), faults.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const FaultSpec& a, const FaultSpec& b) { return a.start_sample < b.start_sample; });

    const SampleKernel kernel{config, sorted, 1e6 / config.sample_rate_hz()};
    std::vector<VoltageSample> out;
    out.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) out.push_back(kernel.at(i));
    return out;
}

std::string format_csv_row(const VoltageSample& s) {
    char buf[64];
    int len = std::snprintf(buf, sizeof(buf), "%llu,%.6f\n",
                            static_cast<unsigned long long>(s.timestamp_us), s.volts);
    return std::string(buf, static_cast<std::size_t>(len));
}

std::string write_csv(std::span<const VoltageSample> rows) {
    std::string out = "timestamp_us,volts\n";
    out.reserve(out.size() + rows.size() * 20);
    char buf[64];
    for (const auto& s : rows) {
        int len = std::snprintf(buf, sizeof(buf), "%llu,%.6f\n",
                                static_cast<unsigned long long>(s.timestamp_us), s.volts);
        out.append(buf, static_cast<std::size_t>(len));
    }
    return out;
}

std::string write_csv(const DataFile& file) {
    if (file.rows.empty()) throw std::invalid_argument("data file has no rows");
    return write_csv(std::span<const VoltageSample>(file.rows));
}

std::vector<VoltageSample> read_csv(std::string_view bytes) {
    std::size_t pos = 0;
    std::size_t line_no = 0;

    auto next_line = [&]() -> std::string_view {
        ++line_no;
        std::size_t nl = bytes.find('\n', pos);
        std::string_view line = (nl == std::string_view::npos) ? bytes.substr(pos)
                                                               : bytes.substr(pos, nl - pos);
        pos = (nl == std::string_view::npos) ? bytes.size() : nl + 1;
        return line;
    };

    if (bytes.empty()) throw CsvError(1, "missing header");
    std::string_view header = next_line();
    if (header != "timestamp_us,volts") throw CsvError(1, "bad header");

    std::vector<VoltageSample> rows;
    std::uint64_t prev_ts = 0;
    while (pos < bytes.size()) {
        std::string_view line = next_line();
        if (line.empty()) {
            if (pos >= bytes.size()) break;  // trailing newline
            throw CsvError(line_no, "empty row");
        }
        std::size_t comma = line.find(',');
        if (comma == std::string_view::npos) throw CsvError(line_no, "missing comma");

        VoltageSample s;
        auto ts = line.substr(0, comma);
        auto [p1, ec1] = std::from_chars(ts.data(), ts.data() + ts.size(), s.timestamp_us);
        if (ec1 != std::errc{} || p1 != ts.data() + ts.size())
            throw CsvError(line_no, "non-numeric timestamp");

        auto volts = line.substr(comma + 1);
        auto [p2, ec2] = std::from_chars(volts.data(), volts.data() + volts.size(), s.volts);
        if (ec2 != std::errc{} || p2 != volts.data() + volts.size())
            throw CsvError(line_no, "non-numeric volts");

        if (!rows.empty() && s.timestamp_us <= prev_ts)
            throw CsvError(line_no, "timestamps not strictly increasing");
        prev_ts = s.timestamp_us;
        rows.push_back(s);
    }
    if (rows.empty()) throw CsvError(line_no, "no data rows");
    return rows;
}

SampleStream::SampleStream(WaveformConfig config, Sink sink, bool paced)
    : config_(std::move(config)), sink_(std::move(sink)), paced_(paced) {
    config_.validate();
    if (config_.baud_rate == 0) throw std::invalid_argument("baud_rate must be positive");
    worker_ = std::thread([this] { run(); });
}

SampleStream::~SampleStream() { stop(); }

void SampleStream::stop() {
    stop_.store(true);
    if (worker_.joinable()) worker_.join();
}

void SampleStream::run() {
    using clock = std::chrono::steady_clock;
    const double bytes_per_sec = config_.baud_rate / 10.0;  // 8N1 framing
    const SampleKernel kernel{config_, {}, 1e6 / config_.sample_rate_hz()};
    const auto start = clock::now();
    std::uint64_t bytes_sent = 0;

    for (std::uint64_t i = 0; !stop_.load(std::memory_order_relaxed); ++i) {
        VoltageSample s = kernel.at(i);
        if (paced_) {
            bytes_sent += format_csv_row(s).size();
            const auto due = start + std::chrono::duration_cast<clock::duration>(
                                         std::chrono::duration<double>(bytes_sent / bytes_per_sec));
            while (clock::now() < due) {
                if (stop_.load(std::memory_order_relaxed)) return;
                std::this_thread::sleep_for(std::chrono::microseconds(200));
            }
        }
        sink_(s);
        delivered_.fetch_add(1, std::memory_order_relaxed);
    }
}

}  // namespace vmon

// Compares the OpenMP kernels against their serial references: sample
// generation and windowed RMS scanning. Verifies identical output, then
// reports throughput and speedup.

#include <chrono>
#include <cstdio>
#include <omp.h>

#include "vmon/detector.hpp"
#include "vmon/waveform.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

template <typename F>
double best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = clock_type::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

}  // namespace

int main() {
    const std::size_t n = 4'000'000;
    std::printf("threads: %d, samples: %zu\n\n", omp_get_max_threads(), n);

    vmon::WaveformConfig cfg;
    cfg.seed = 42;
    const vmon::FaultSpec sag{vmon::FaultKind::Sag, 0.5, n / 2, n / 8};

    // Sample generation
    auto serial_samples = vmon::generate_samples_serial(cfg, n, std::span(&sag, 1));
    auto parallel_samples = vmon::generate_samples(cfg, n, std::span(&sag, 1));
    if (serial_samples != parallel_samples) {
        std::printf("FAIL: generation kernels disagree\n");
        return 1;
    }

    const double gen_serial = best_of(3, [&] {
        auto v = vmon::generate_samples_serial(cfg, n, std::span(&sag, 1));
        if (v.size() != n) std::abort();
    });
    const double gen_parallel = best_of(3, [&] {
        auto v = vmon::generate_samples(cfg, n, std::span(&sag, 1));
        if (v.size() != n) std::abort();
    });
    std::printf("generate_samples   serial %7.1f Msamples/s   openmp %7.1f Msamples/s   speedup %.2fx\n",
                n / gen_serial / 1e6, n / gen_parallel / 1e6, gen_serial / gen_parallel);

    // Window scan
    vmon::DetectorConfig det;
    auto serial_reports = vmon::scan_file_serial(serial_samples, det);
    auto parallel_reports = vmon::scan_file(parallel_samples, det);
    if (serial_reports.size() != parallel_reports.size()) {
        std::printf("FAIL: scan kernels disagree\n");
        return 1;
    }
    for (std::size_t i = 0; i < serial_reports.size(); ++i)
        if (serial_reports[i].window_index != parallel_reports[i].window_index ||
            serial_reports[i].rms_value != parallel_reports[i].rms_value) {
            std::printf("FAIL: scan kernels disagree at report %zu\n", i);
            return 1;
        }

    const double scan_serial = best_of(5, [&] {
        auto r = vmon::scan_file_serial(serial_samples, det);
        if (r.empty()) std::abort();
    });
    const double scan_parallel = best_of(5, [&] {
        auto r = vmon::scan_file(serial_samples, det);
        if (r.empty()) std::abort();
    });
    std::printf("scan_file          serial %7.1f Msamples/s   openmp %7.1f Msamples/s   speedup %.2fx\n",
                n / scan_serial / 1e6, n / scan_parallel / 1e6, scan_serial / scan_parallel);

    std::printf("\nkernels agree; %zu anomaly windows found\n", serial_reports.size());
    return 0;
}

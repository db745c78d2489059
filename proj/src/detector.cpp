#include "vmon/detector.hpp"

#include <cmath>
#include <stdexcept>

namespace vmon {

namespace {

double sum_of_squares(std::span<const VoltageSample> window) {
    double acc = 0.0;
    for (const auto& s : window) acc += s.volts * s.volts;
    return acc;
}

struct WindowLayout {
    std::size_t count = 0;          // windows to evaluate (incl. partial tail)
    std::size_t window_samples = 0;

    std::span<const VoltageSample> window(std::span<const VoltageSample> rows, std::size_t w) const {
        const std::size_t begin = w * window_samples;
        const std::size_t len = std::min(window_samples, rows.size() - begin);
        return rows.subspan(begin, len);
    }
};

// Final partial window counts only when it holds at least one full cycle.
WindowLayout layout_windows(std::size_t n_rows, const DetectorConfig& cfg) {
    WindowLayout l;
    l.window_samples = cfg.window_samples();
    l.count = n_rows / l.window_samples;
    if (n_rows % l.window_samples >= cfg.samples_per_cycle) ++l.count;
    return l;
}

std::optional<AnomalyReport> classify(std::span<const VoltageSample> window, double rms_value,
                                      std::size_t window_index, const DetectorConfig& cfg,
                                      std::uint16_t unit_id, std::string_view file_name) {
    AnomalyKind kind;
    if (rms_value < cfg.lower_bound())
        kind = AnomalyKind::Undervoltage;
    else if (rms_value > cfg.upper_bound())
        kind = AnomalyKind::Overvoltage;
    else
        return std::nullopt;
    return AnomalyReport{unit_id, std::string(file_name), window_index, rms_value, kind,
                         window.back().timestamp_us};
}

}  // namespace

void DetectorConfig::validate() const {
    if (!(nominal_rms > 0.0)) throw std::invalid_argument("nominal_rms must be positive");
    if (!(lower_frac > 0.0 && lower_frac < 1.0)) throw std::invalid_argument("lower_frac must lie in (0,1)");
    if (!(upper_frac > 1.0)) throw std::invalid_argument("upper_frac must exceed 1");
    if (window_cycles < 1) throw std::invalid_argument("window_cycles must be >= 1");
    if (samples_per_cycle < 2) throw std::invalid_argument("samples_per_cycle must be >= 2");
}

const char* to_string(AnomalyKind kind) {
    return kind == AnomalyKind::Undervoltage ? "undervoltage" : "overvoltage";
}

double rms(std::span<const double> window) {
    if (window.empty()) throw std::invalid_argument("rms of empty window");
    double acc = 0.0;
    for (double v : window) acc += v * v;
    return std::sqrt(acc / static_cast<double>(window.size()));
}

double rms(std::span<const VoltageSample> window) {
    if (window.empty()) throw std::invalid_argument("rms of empty window");
    return std::sqrt(sum_of_squares(window) / static_cast<double>(window.size()));
}

std::vector<AnomalyReport> scan_file(std::span<const VoltageSample> rows,
                                     const DetectorConfig& config,
                                     std::uint16_t unit_id, std::string_view file_name) {
    config.validate();
    const WindowLayout l = layout_windows(rows.size(), config);
    if (l.count == 0) return {};

    std::vector<double> window_rms(l.count);
    const std::int64_t n = static_cast<std::int64_t>(l.count);
#pragma omp parallel for schedule(static)
    for (std::int64_t w = 0; w < n; ++w) {
        auto win = l.window(rows, static_cast<std::size_t>(w));
        window_rms[static_cast<std::size_t>(w)] =
            std::sqrt(sum_of_squares(win) / static_cast<double>(win.size()));
    }

    std::vector<AnomalyReport> reports;
    for (std::size_t w = 0; w < l.count; ++w) {
        if (auto r = classify(l.window(rows, w), window_rms[w], w, config, unit_id, file_name))
            reports.push_back(std::move(*r));
    }
    return reports;
}

std::vector<AnomalyReport> scan_file(const DataFile& file, const DetectorConfig& config) {
    return scan_file(file.rows, config, file.unit_id, file.name());
}

std::vector<AnomalyReport> scan_file_serial(std::span<const VoltageSample> rows,
                                            const DetectorConfig& config,
                                            std::uint16_t unit_id, std::string_view file_name) {
    config.validate();
    const WindowLayout l = layout_windows(rows.size(), config);

    std::vector<AnomalyReport> reports;
    for (std::size_t w = 0; w < l.count; ++w) {
        auto win = l.window(rows, w);
        const double r = std::sqrt(sum_of_squares(win) / static_cast<double>(win.size()));
        if (auto rep = classify(win, r, w, config, unit_id, file_name))
            reports.push_back(std::move(*rep));
    }
    return reports;
}

std::optional<AnomalyReport> first_anomaly(std::span<const VoltageSample> rows,
                                           const DetectorConfig& config,
                                           std::uint16_t unit_id, std::string_view file_name) {
    config.validate();
    const WindowLayout l = layout_windows(rows.size(), config);
    for (std::size_t w = 0; w < l.count; ++w) {
        auto win = l.window(rows, w);
        const double r = std::sqrt(sum_of_squares(win) / static_cast<double>(win.size()));
        if (auto rep = classify(win, r, w, config, unit_id, file_name)) return rep;
    }
    return std::nullopt;
}

std::optional<std::chrono::nanoseconds> detection_latency(std::span<const VoltageSample> rows,
                                                          const DetectorConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    if (first_anomaly(rows, config))
        return std::chrono::steady_clock::now() - start;
    return std::nullopt;
}

}  // namespace vmon

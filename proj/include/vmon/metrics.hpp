#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vmon {

struct MetricRow {
    std::string experiment;
    std::string param_name;
    double param_value = 0.0;
    std::string metric;
    double value = 0.0;  // gas metrics are exact integers; timings are whole µs
    std::string unit;
    std::uint32_t rep = 0;
};

struct TrendVerdict {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Schema: experiment,param_name,param_value,metric,value,unit,rep
std::string metrics_to_csv(std::span<const MetricRow> rows);

double median(std::vector<double> values);  // throws on empty

// Writes <stem>_metrics.csv and <stem>_summary.txt under out_dir. Throws
// std::invalid_argument on empty rows and std::runtime_error on an
// unwritable destination.
void emit_results(std::span<const MetricRow> rows, std::span<const TrendVerdict> verdicts,
                  const std::filesystem::path& out_dir, std::string_view stem);

}  // namespace vmon

#include "vmon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

namespace vmon {

namespace {

// Integral values print without a decimal point so gas tables stay exact and
// reruns are byte-identical.
std::string format_value(double v) {
    if (std::floor(v) == v && std::abs(v) < 9.007199254740992e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string metrics_to_csv(std::span<const MetricRow> rows) {
    std::string out = "experiment,param_name,param_value,metric,value,unit,rep\n";
    for (const auto& r : rows) {
        out += r.experiment;
        out += ',';
        out += r.param_name;
        out += ',';
        out += format_value(r.param_value);
        out += ',';
        out += r.metric;
        out += ',';
        out += format_value(r.value);
        out += ',';
        out += r.unit;
        out += ',';
        out += std::to_string(r.rep);
        out += '\n';
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void emit_results(std::span<const MetricRow> rows, std::span<const TrendVerdict> verdicts,
                  const std::filesystem::path& out_dir, std::string_view stem) {
    if (rows.empty()) throw std::invalid_argument("no metric rows to emit");
    std::filesystem::create_directories(out_dir);

    const auto csv_path = out_dir / (std::string(stem) + "_metrics.csv");
    {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
        csv << metrics_to_csv(rows);
    }

    // Summary: median per (param, metric) plus the trend verdicts.
    std::map<std::pair<std::string, std::string>, std::vector<double>> grouped;
    for (const auto& r : rows)
        grouped[{r.param_name + "=" + format_value(r.param_value), r.metric + " [" + r.unit + "]"}]
            .push_back(r.value);

    const auto txt_path = out_dir / (std::string(stem) + "_summary.txt");
    std::ofstream txt(txt_path, std::ios::trunc);
    if (!txt) throw std::runtime_error("cannot write " + txt_path.string());
    txt << stem << " summary\n\nmedians:\n";
    for (auto& [key, values] : grouped)
        txt << "  " << key.first << "  " << key.second << "  = " << format_value(median(values))
            << "  (n=" << values.size() << ")\n";
    txt << "\ntrend verdicts:\n";
    for (const auto& v : verdicts)
        txt << "  [" << (v.pass ? "PASS" : "FAIL") << "] " << v.name
            << (v.detail.empty() ? "" : ": " + v.detail) << "\n";
}

}  // namespace vmon

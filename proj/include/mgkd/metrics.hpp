#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mgkd {

/// One row of per-epoch observations.
struct MetricsRecord {
    int epoch = 0;
    double lr = 0.0;
    std::map<std::string, double> values;
};

/// Callback invoked after each epoch; may be empty.
using MetricsSink = std::function<void(const MetricsRecord&)>;

/// CSV with columns epoch, lr, then the sorted union of value keys.
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);

/// Writes to a temporary sibling and renames into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

/// Numbers formatted with round-trip precision.
std::string format_double(double v);

} // namespace mgkd

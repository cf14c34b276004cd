#include "mgkd/metrics.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace mgkd {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    std::set<std::string> keys;
    for (const auto& r : records)
        for (const auto& [k, v] : r.values) keys.insert(k);
    std::ostringstream out;
    out << "epoch,lr";
    for (const auto& k : keys) out << ',' << k;
    out << '\n';
    for (const auto& r : records) {
        out << r.epoch << ',' << format_double(r.lr);
        for (const auto& k : keys) {
            out << ',';
            if (auto it = r.values.find(k); it != r.values.end()) out << format_double(it->second);
        }
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

} // namespace mgkd

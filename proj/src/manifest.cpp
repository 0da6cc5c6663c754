#include "clickcube/manifest.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace clickcube {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::string* RunManifest::find(std::string_view key) const {
    for (const auto& [k, v] : params) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
    std::filesystem::path p = output;
    p += ".manifest";
    return p;
}

void write_manifest(std::ostream& out, const RunManifest& m) {
    out << "# clickcube run manifest\n";
    out << "manifest.subcommand=" << m.subcommand << '\n';
    out << "manifest.version=" << m.version << '\n';
    for (std::size_t i = 0; i < m.outputs.size(); ++i) {
        out << "manifest.output" << i << '=' << m.outputs[i].string() << '\n';
    }
    for (const auto& [key, value] : m.params) out << key << '=' << value << '\n';
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_manifest(out, m);
    out.flush();
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

RunManifest read_manifest(std::istream& in) {
    RunManifest m;
    std::string line;
    while (std::getline(in, line)) {
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("manifest line without '=': " + text);
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        if (key == "manifest.subcommand") {
            m.subcommand = value;
        } else if (key == "manifest.version") {
            m.version = value;
        } else if (key.starts_with("manifest.output")) {
            m.outputs.emplace_back(value);
        } else {
            m.params.emplace_back(key, value);
        }
    }
    return m;
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
    return read_manifest(in);
}

}  // namespace clickcube

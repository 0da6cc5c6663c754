#pragma once

// Run manifests: the resolved parameters of one CLI invocation, written next
// to its outputs. The body is key=value lines that `--config` accepts, so
// `clickcube --config run.manifest <subcommand>` repeats the run.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace clickcube {

struct RunManifest {
    std::string subcommand;
    std::string version;
    /// Parameters in flag order, without the leading "--".
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<std::filesystem::path> outputs;

    /// Value of `key`, or nullptr.
    const std::string* find(std::string_view key) const;
};

/// Path of the manifest written for an output file: "<output>.manifest".
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

void write_manifest(std::ostream& out, const RunManifest& manifest);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

RunManifest read_manifest(std::istream& in);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace clickcube

#pragma once

// Headered CSV for click logs and cubes. UTF-8, '.' decimal separator, LF
// line endings. Doubles are written in shortest round-trip form so output
// is byte-stable.

#include "clickcube/engine.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clickcube {

inline constexpr std::string_view kLogHeader = "click_id,user_id,query_id,country,cost";

/// Shortest representation that parses back to the same double; "NaN" for NaN.
std::string format_double(double value);

/// Parses a full field as a double; throws std::invalid_argument otherwise.
double parse_double(std::string_view field);

/// Splits one CSV line, honouring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

std::vector<ClickRecord> read_log_csv(std::istream& in);
std::vector<ClickRecord> read_log_csv(const std::filesystem::path& path);

void write_log_csv(std::ostream& out, std::span<const ClickRecord> records);
void write_log_csv(const std::filesystem::path& path, std::span<const ClickRecord> records);

/// Writes key components, n, sum, sum_sq, then b_<i>_n, b_<i>_sum for each
/// replicate when the cube carries them. `key_names` labels the components.
void write_cube_csv(std::ostream& out, const DataCube& cube, std::span<const std::string> key_names);
void write_cube_csv(const std::filesystem::path& path, const DataCube& cube,
                    std::span<const std::string> key_names);

}  // namespace clickcube

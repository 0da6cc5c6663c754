#include "clickcube/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace clickcube {

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
    return in;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

}  // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "NaN";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
    return std::string(buf, end);
}

double parse_double(std::string_view field) {
    if (field == "NaN" || field == "nan") return std::nan("");
    double value = 0.0;
    auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || end != field.data() + field.size()) {
        throw std::invalid_argument("not a number: '" + std::string(field) + "'");
    }
    return value;
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (quoted) throw std::invalid_argument("unterminated quoted field");
    fields.push_back(std::move(current));
    return fields;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<ClickRecord> read_log_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("click log is empty (missing header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kLogHeader) {
        throw std::invalid_argument("unexpected click log header '" + line + "', expected '" +
                                    std::string(kLogHeader) + "'");
    }
    std::vector<ClickRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            auto fields = split_csv_line(line);
            if (fields.size() != 5) {
                throw std::invalid_argument("expected 5 fields, got " + std::to_string(fields.size()));
            }
            ClickRecord r{std::move(fields[0]), std::move(fields[1]), std::move(fields[2]), std::move(fields[3]),
                          parse_double(fields[4])};
            validate_record(r);
            records.push_back(std::move(r));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::vector<ClickRecord> read_log_csv(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    try {
        return read_log_csv(in);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

void write_log_csv(std::ostream& out, std::span<const ClickRecord> records) {
    out << kLogHeader << '\n';
    for (const auto& r : records) {
        out << csv_escape(r.click_id) << ',' << csv_escape(r.user_id) << ',' << csv_escape(r.query_id) << ','
            << csv_escape(r.country) << ',' << format_double(r.cost) << '\n';
    }
}

void write_log_csv(const std::filesystem::path& path, std::span<const ClickRecord> records) {
    auto out = open_for_write(path);
    write_log_csv(out, records);
    finish_write(out, path);
}

void write_cube_csv(std::ostream& out, const DataCube& cube, std::span<const std::string> key_names) {
    if (!cube.empty() && key_names.size() != cube.arity()) {
        throw std::invalid_argument("write_cube_csv: " + std::to_string(key_names.size()) +
                                    " key names for a cube of arity " + std::to_string(cube.arity()));
    }
    for (const auto& name : key_names) out << csv_escape(name) << ',';
    out << "n,sum,sum_sq";
    const std::size_t B = cube.replicates();
    for (std::size_t b = 0; b < B; ++b) out << ",b_" << b << "_n,b_" << b << "_sum";
    out << '\n';
    for (const auto& [key, t] : cube) {
        for (const auto& c : key.components) out << csv_escape(c) << ',';
        out << t.n << ',' << format_double(t.sum) << ',' << format_double(t.sum_sq);
        for (std::size_t b = 0; b < B; ++b) {
            const ReplicateSum r = b < t.boot.size() ? t.boot[b] : ReplicateSum{};
            out << ',' << r.weight << ',' << format_double(r.weighted_sum);
        }
        out << '\n';
    }
}

void write_cube_csv(const std::filesystem::path& path, const DataCube& cube,
                    std::span<const std::string> key_names) {
    auto out = open_for_write(path);
    write_cube_csv(out, cube, key_names);
    finish_write(out, path);
}

}  // namespace clickcube

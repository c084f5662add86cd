#pragma once

// Small text helpers shared by the CSV readers and writers.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace orbitvae::text {

/// Full-precision rendering (17 significant digits, round-trips exactly).
std::string format_double(double value);

/// Parses the whole field as a double; throws FormatError naming `context` otherwise.
double parse_double(std::string_view field, const std::string& context);

long long parse_int(std::string_view field, const std::string& context);

std::vector<std::string_view> split(std::string_view line, char sep);

/// Splits into lines on '\n', stripping one trailing '\r' per line. A final empty
/// line after a trailing newline is dropped.
std::vector<std::string_view> lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace orbitvae::text

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fata {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// UTC timestamp, ISO-8601 with millisecond precision ("2026-01-02T03:04:05.678Z").
std::string utc_now_iso8601();
std::string format_iso8601(std::chrono::system_clock::time_point tp);
/// Inverse of format_iso8601; throws SchemaError on malformed input.
std::chrono::system_clock::time_point parse_iso8601(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a sibling temp file and renames, so readers never observe a
/// partially written file.
void write_text_file(const std::filesystem::path& path, std::string_view content);

json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline; key order is whatever the value holds.
void write_json_file(const std::filesystem::path& path, const json& value);
void write_json_file(const std::filesystem::path& path, const ordered_json& value);

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Exceptions from
/// fn are rethrown (first one wins) after every worker has stopped.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

} // namespace fata

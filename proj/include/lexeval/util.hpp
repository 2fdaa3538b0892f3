#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace lexeval {

// SHA-256 hex digest of a byte string.
std::string sha256_hex(std::string_view data);

// Lowercases ASCII letters and the German umlauts/sharp s (UTF-8 aware for
// exactly those code points; other multibyte characters pass through).
std::string case_fold(std::string_view text);

// Trims ASCII whitespace from both ends.
std::string_view trim(std::string_view text);

bool starts_with(std::string_view text, std::string_view prefix);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

// Calls fn(line_number, line) for each line of a file; line numbers are
// 1-based and the trailing newline is stripped. Blank lines are skipped.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, std::string_view)>& fn);

// Replaces characters outside [A-Za-z0-9._-] so ids can be used as file names.
std::string sanitize_for_path(std::string_view id);

// Current wall-clock time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

// Full round-trip precision for CSV output.
std::string format_full(double value);

// Paper-style two-decimal display: 0.315 -> ".32", 1.0 -> "1.00", -0.05 -> "-.05".
std::string format_2dp(double value);

}  // namespace lexeval

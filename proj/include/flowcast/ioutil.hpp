#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcast {

// Parse errors carry the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t line)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// 'YYYY-MM-DDTHH:MM:SS' (T may be a space, optional trailing Z) or integer
// epoch seconds. Timestamps are treated as UTC throughout.
std::int64_t parse_timestamp(const std::string& s);
std::string format_timestamp(std::int64_t epoch_seconds);

std::vector<std::string> split_csv_line(const std::string& line);

// round-trip-exact double formatting for CSV output
std::string format_double(double v);

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string fnv1a64_file_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// minimal portable mkdir -p
void ensure_directory(const std::string& path);

}  // namespace flowcast

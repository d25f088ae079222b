#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace semrsa::cli {

/// RFC-4180 writer: CRLF line ends, fields quoted only when needed.
class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value);
    CsvWriter& field(long long value);
    CsvWriter& field(std::size_t value) { return field(static_cast<long long>(value)); }
    CsvWriter& field(int value) { return field(static_cast<long long>(value)); }
    void end_row();
    void close();

private:
    std::ofstream out_;
    bool first_ = true;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Rows of an RFC-4180 file; quoted fields may hold commas, quotes and newlines.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace semrsa::cli

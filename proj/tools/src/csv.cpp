#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <semrsa/binary_format.hpp>
#include <semrsa/error.hpp>

namespace semrsa::cli {

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(format::open_output(path, "csv")) {}

CsvWriter& CsvWriter::field(std::string_view text) {
    if (!first_) out_ << ',';
    first_ = false;
    if (text.find_first_of(",\"\r\n") == std::string_view::npos) {
        out_ << text;
        return *this;
    }
    out_ << '"';
    for (char c : text) {
        if (c == '"') out_ << '"';
        out_ << c;
    }
    out_ << '"';
    return *this;
}

CsvWriter& CsvWriter::field(double value) { return field(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::field(long long value) { return field(std::string_view(std::to_string(value))); }

void CsvWriter::end_row() {
    out_ << "\r\n";
    first_ = true;
}

void CsvWriter::close() {
    out_.close();
    if (!out_) throw IoError("harness_cli", "failed to finish csv output");
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                rows.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += c;
            any = true;
        }
    }
    if (quoted) throw ValidationError("harness_cli", "csv: unterminated quoted field");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    auto in = format::open_input(path, "csv");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace semrsa::cli

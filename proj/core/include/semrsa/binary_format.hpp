#pragma once

// Framing shared by every on-disk format: one JSON header line (padded with
// spaces so the binary payload starts 64-byte aligned) followed by
// little-endian payloads.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrsa/error.hpp"

namespace semrsa::format {

inline constexpr std::size_t kHeaderAlignment = 64;

/// Writes `header` as a single padded line. Returns the number of bytes written.
std::size_t write_header(std::ostream& out, const nlohmann::json& header);

/// Reads the header line and checks its "magic" field.
nlohmann::json read_header(std::istream& in, std::string_view magic, const std::string& what);

void write_f32(std::ostream& out, std::span<const float> values);
void write_f32(std::ostream& out, std::span<const double> values);
void write_u32(std::ostream& out, std::uint32_t value);
void write_u64(std::ostream& out, std::uint64_t value);

std::vector<float> read_f32(std::istream& in, std::size_t count, const std::string& what);
std::uint32_t read_u32(std::istream& in, const std::string& what);
std::uint64_t read_u64(std::istream& in, const std::string& what);

/// Little-endian conversion of a raw buffer in place (no-op on LE hosts).
void f32_from_le(std::span<float> values) noexcept;

std::ofstream open_output(const std::filesystem::path& path, const std::string& what);
std::ifstream open_input(const std::filesystem::path& path, const std::string& what);

/// Fetches a required header field with a validation error naming it.
template <typename T>
T field(const nlohmann::json& header, const char* key, const std::string& what) {
    auto it = header.find(key);
    if (it == header.end()) throw ValidationError("format", what + ": header lacks field '" + key + "'");
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("format", what + ": bad header field '" + key + "': " + e.what());
    }
}

/// Read-only memory mapping of a whole file.
class MappedFile {
public:
    explicit MappedFile(const std::filesystem::path& path);
    ~MappedFile();
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;
    MappedFile(MappedFile&& other) noexcept;
    MappedFile& operator=(MappedFile&& other) noexcept;

    std::span<const std::byte> bytes() const noexcept { return {data_, size_}; }
    std::size_t size() const noexcept { return size_; }

private:
    const std::byte* data_ = nullptr;
    std::size_t size_ = 0;
};

}  // namespace semrsa::format

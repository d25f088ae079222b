#include "semrsa/binary_format.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include "semrsa/error.hpp"

namespace semrsa::format {

namespace {

template <typename T>
T byteswap_if_needed(T value) noexcept {
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
        std::memcpy(&value, bytes, sizeof(T));
        return value;
    }
}

void check_write(std::ostream& out) {
    if (!out) throw IoError("format", "write failed");
}

}  // namespace

std::size_t write_header(std::ostream& out, const nlohmann::json& header) {
    std::string line = header.dump();
    const std::size_t total = line.size() + 1;
    const std::size_t padded = (total + kHeaderAlignment - 1) / kHeaderAlignment * kHeaderAlignment;
    line.append(padded - total, ' ');
    line.push_back('\n');
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    check_write(out);
    return line.size();
}

nlohmann::json read_header(std::istream& in, std::string_view magic, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("format", what + ": missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("format", what + ": header is not JSON: " + e.what());
    }
    if (!header.is_object() || header.value("magic", std::string{}) != magic)
        throw ValidationError("format", what + ": expected magic " + std::string(magic));
    return header;
}

void write_f32(std::ostream& out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float v : values) {
            const float s = byteswap_if_needed(v);
            out.write(reinterpret_cast<const char*>(&s), sizeof s);
        }
    }
    check_write(out);
}

void write_f32(std::ostream& out, std::span<const double> values) {
    constexpr std::size_t kChunk = 1 << 14;
    std::vector<float> buffer;
    buffer.reserve(std::min(kChunk, values.size()));
    for (std::size_t start = 0; start < values.size(); start += kChunk) {
        const std::size_t end = std::min(values.size(), start + kChunk);
        buffer.clear();
        for (std::size_t i = start; i < end; ++i) buffer.push_back(static_cast<float>(values[i]));
        write_f32(out, std::span<const float>(buffer));
    }
}

void write_u32(std::ostream& out, std::uint32_t value) {
    value = byteswap_if_needed(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
    check_write(out);
}

void write_u64(std::ostream& out, std::uint64_t value) {
    value = byteswap_if_needed(value);
    out.write(reinterpret_cast<const char*>(&value), sizeof value);
    check_write(out);
}

std::vector<float> read_f32(std::istream& in, std::size_t count, const std::string& what) {
    std::vector<float> values(count);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
        throw IoError("format", what + ": truncated float32 payload");
    f32_from_le(values);
    return values;
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (in.gcount() != sizeof v) throw IoError("format", what + ": truncated u32");
    return byteswap_if_needed(v);
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (in.gcount() != sizeof v) throw IoError("format", what + ": truncated u64");
    return byteswap_if_needed(v);
}

void f32_from_le(std::span<float> values) noexcept {
    if constexpr (std::endian::native != std::endian::little) {
        for (float& v : values) v = byteswap_if_needed(v);
    }
}

std::ofstream open_output(const std::filesystem::path& path, const std::string& what) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("format", what + ": cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_input(const std::filesystem::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("format", what + ": cannot open " + path.string());
    return in;
}

MappedFile::MappedFile(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw IoError("format", "cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw IoError("format", "cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
        void* p = ::mmap(nullptr, size_, PROT_READ, MAP_SHARED, fd, 0);
        if (p == MAP_FAILED) {
            ::close(fd);
            throw IoError("format", "cannot map " + path.string());
        }
        data_ = static_cast<const std::byte*>(p);
    }
    ::close(fd);
}

MappedFile::~MappedFile() {
    if (data_ != nullptr) ::munmap(const_cast<std::byte*>(data_), size_);
}

MappedFile::MappedFile(MappedFile&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}

MappedFile& MappedFile::operator=(MappedFile&& other) noexcept {
    if (this != &other) {
        if (data_ != nullptr) ::munmap(const_cast<std::byte*>(data_), size_);
        data_ = std::exchange(other.data_, nullptr);
        size_ = std::exchange(other.size_, 0);
    }
    return *this;
}

}  // namespace semrsa::format

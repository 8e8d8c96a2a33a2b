#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wayflow::binio {

// CRC-32 (IEEE 802.3 polynomial, reflected).
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

// Little-endian append helpers.
void put_u32(std::vector<uint8_t>& out, uint32_t v);
void put_u64(std::vector<uint8_t>& out, uint64_t v);
void put_f32(std::vector<uint8_t>& out, float v);

// Bounded little-endian readers; throw DataError past the end.
class Reader {
public:
    Reader(const uint8_t* data, size_t len) : data_(data), len_(len) {}

    uint32_t u32(const char* field);
    uint64_t u64(const char* field);
    float f32(const char* field);
    void bytes(uint8_t* out, size_t n, const char* field);
    std::string str(size_t n, const char* field);
    size_t offset() const { return pos_; }
    size_t remaining() const { return len_ - pos_; }

private:
    void need(size_t n, const char* field);
    const uint8_t* data_;
    size_t len_;
    size_t pos_ = 0;
};

std::vector<uint8_t> read_file(const std::string& path);
// Writes via a temp file + atomic rename.
void write_file_atomic(const std::string& path,
                       const std::vector<uint8_t>& bytes);

}  // namespace wayflow::binio

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace blockpred {

// Little-endian append helpers for binary payload sections.
void put_u8(std::string& out, std::uint8_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

// Cursor-based readers; throw TruncatedError when the buffer runs out.
struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    void need(std::size_t n) const;
};

std::uint32_t crc32_of(const std::string& payload);

// Artifact container: a short text header of "key: value" lines between a
// magic line and a "---" separator, followed by a binary payload whose CRC32
// and length are recorded in the header.
void write_artifact(const std::string& path, const std::string& magic,
                    const std::vector<std::pair<std::string, std::string>>& header,
                    const std::string& payload);

struct Artifact {
    std::map<std::string, std::string> header;
    std::string payload;
};

// Validates magic, header shape, payload length and checksum.
Artifact read_artifact(const std::string& path, const std::string& magic);

std::string require_key(const std::map<std::string, std::string>& header,
                        const std::string& key);

} // namespace blockpred

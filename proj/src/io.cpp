#include "blockpred/io.hpp"

#include "blockpred/errors.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace blockpred {

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void ByteReader::need(std::size_t n) const {
    if (pos + n > buf.size()) {
        throw TruncatedError("payload ends prematurely");
    }
}

std::uint8_t ByteReader::u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    }
    pos += 8;
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::uint32_t crc32_of(const std::string& payload) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(payload.data()),
                  static_cast<uInt>(payload.size()));
    return static_cast<std::uint32_t>(crc);
}

void write_artifact(const std::string& path, const std::string& magic,
                    const std::vector<std::pair<std::string, std::string>>& header,
                    const std::string& payload) {
    for (const auto& [k, v] : header) {
        if (k == "payload-bytes" || k == "checksum") {
            throw ConfigError("header key '" + k + "' is reserved by the container");
        }
    }
    // write-temp then rename so a crashed writer never leaves a torn file
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp);
        }
        out << magic << "\n";
        for (const auto& [k, v] : header) {
            out << k << ": " << v << "\n";
        }
        out << "payload-bytes: " << payload.size() << "\n";
        char crcbuf[16];
        std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32_of(payload));
        out << "checksum: " << crcbuf << "\n";
        out << "---\n";
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) {
            throw IoError("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw IoError("rename failed: " + path);
    }
}

Artifact read_artifact(const std::string& path, const std::string& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("empty file: " + path);
    }
    if (line != magic) {
        // same artifact family but different version gets its own error
        const auto space = magic.rfind(' ');
        const std::string family = magic.substr(0, space);
        if (line.rfind(family, 0) == 0) {
            throw VersionError("unsupported version '" + line + "', expected '" + magic + "'");
        }
        throw FormatError("bad magic line '" + line + "' in " + path);
    }
    Artifact art;
    while (std::getline(in, line)) {
        if (line == "---") {
            break;
        }
        const auto colon = line.find(": ");
        if (colon == std::string::npos) {
            throw FormatError("malformed header line '" + line + "'");
        }
        art.header[line.substr(0, colon)] = line.substr(colon + 2);
    }
    if (line != "---") {
        throw TruncatedError("missing header terminator in " + path);
    }
    std::size_t bytes = 0;
    try {
        std::size_t used = 0;
        const std::string value = require_key(art.header, "payload-bytes");
        bytes = std::stoull(value, &used);
        if (used != value.size()) {
            throw FormatError("bad payload-bytes value in " + path);
        }
    } catch (const std::logic_error&) {
        throw FormatError("bad payload-bytes value in " + path);
    }
    art.payload.resize(bytes);
    in.read(art.payload.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
        throw TruncatedError("payload truncated in " + path);
    }
    if (in.peek() != std::ifstream::traits_type::eof()) {
        throw FormatError("trailing bytes after payload in " + path);
    }
    const std::string want = require_key(art.header, "checksum");
    char crcbuf[16];
    std::snprintf(crcbuf, sizeof(crcbuf), "%08x", crc32_of(art.payload));
    if (want != crcbuf) {
        throw ChecksumError("checksum mismatch in " + path);
    }
    return art;
}

std::string require_key(const std::map<std::string, std::string>& header,
                        const std::string& key) {
    const auto it = header.find(key);
    if (it == header.end()) {
        throw FormatError("missing header key '" + key + "'");
    }
    return it->second;
}

} // namespace blockpred

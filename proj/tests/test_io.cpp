#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "blockpred/errors.hpp"
#include "blockpred/io.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

using namespace blockpred;

namespace {

const std::string kMagic = "blockpred-test v1";

std::string temp_file(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::string sample_payload() {
    std::string payload;
    put_u8(payload, 7);
    put_u32(payload, 0xdeadbeefu);
    put_u64(payload, 0x0123456789abcdefULL);
    put_f32(payload, 1.5f);
    put_f64(payload, -2.25);
    return payload;
}

} // namespace

TEST_CASE("byte helpers are little-endian and cursor readers match") {
    const std::string payload = sample_payload();
    REQUIRE(payload.size() == 1 + 4 + 8 + 4 + 8);
    CHECK(static_cast<std::uint8_t>(payload[1]) == 0xef); // low byte first
    CHECK(static_cast<std::uint8_t>(payload[4]) == 0xde);

    ByteReader r{payload};
    CHECK(r.u8() == 7);
    CHECK(r.u32() == 0xdeadbeefu);
    CHECK(r.u64() == 0x0123456789abcdefULL);
    CHECK(r.f32() == 1.5f);
    CHECK(r.f64() == -2.25);
    CHECK(r.pos == payload.size());
    CHECK_THROWS_AS(r.u8(), TruncatedError);
}

TEST_CASE("crc32 reference values") {
    // zlib's CRC-32 of the 9-byte ASCII digit string is a published constant.
    CHECK(crc32_of("123456789") == 0xCBF43926u);
    CHECK(crc32_of("") == 0u);
}

TEST_CASE("artifact round trip preserves header and payload") {
    const std::string path = temp_file("bp_io_roundtrip.bin");
    const std::string payload = sample_payload();
    write_artifact(path, kMagic, {{"alpha", "0.01"}, {"name", "case"}}, payload);

    const Artifact art = read_artifact(path, kMagic);
    CHECK(art.payload == payload);
    CHECK(art.header.at("alpha") == "0.01");
    CHECK(art.header.at("name") == "case");
    CHECK(require_key(art.header, "alpha") == "0.01");
    CHECK_THROWS_AS(require_key(art.header, "missing"), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("binary payload bytes pass through the text container unchanged") {
    const std::string path = temp_file("bp_io_binary.bin");
    std::string payload;
    for (int i = 0; i < 256; ++i) payload.push_back(static_cast<char>(i));
    payload += "\n---\nkey: value\n";
    write_artifact(path, kMagic, {}, payload);
    CHECK(read_artifact(path, kMagic).payload == payload);
    std::filesystem::remove(path);
}

TEST_CASE("corruption is detected with the right error class") {
    const std::string path = temp_file("bp_io_corrupt.bin");
    write_artifact(path, kMagic, {{"k", "v"}}, sample_payload());
    const std::string good = slurp(path);

    SUBCASE("same family, different version is a version error") {
        std::string bad = good;
        bad[kMagic.size() - 1] = '2'; // "blockpred-test v2"
        spit(path, bad);
        CHECK_THROWS_AS(read_artifact(path, kMagic), VersionError);
    }
    SUBCASE("foreign magic is a format error") {
        std::string bad = good;
        bad[0] = 'X';
        spit(path, bad);
        CHECK_THROWS_AS(read_artifact(path, kMagic), FormatError);
    }
    SUBCASE("flipped payload byte is a checksum error") {
        std::string bad = good;
        bad[bad.size() - 3] = static_cast<char>(bad[bad.size() - 3] ^ 0x40);
        spit(path, bad);
        CHECK_THROWS_AS(read_artifact(path, kMagic), ChecksumError);
    }
    SUBCASE("shortened file is a truncation error") {
        spit(path, good.substr(0, good.size() - 4));
        CHECK_THROWS_AS(read_artifact(path, kMagic), TruncatedError);
    }
    SUBCASE("header cut before the separator is a truncation error") {
        const std::size_t sep = good.find("---");
        REQUIRE(sep != std::string::npos);
        spit(path, good.substr(0, sep));
        CHECK_THROWS_AS(read_artifact(path, kMagic), TruncatedError);
    }
    SUBCASE("malformed header line is a format error") {
        std::string bad = good;
        const std::size_t colon = bad.find("k: v");
        REQUIRE(colon != std::string::npos);
        bad.replace(colon, 4, "karv");
        spit(path, bad);
        CHECK_THROWS_AS(read_artifact(path, kMagic), FormatError);
    }
    SUBCASE("trailing garbage is a format error") {
        spit(path, good + "extra");
        CHECK_THROWS_AS(read_artifact(path, kMagic), FormatError);
    }
    SUBCASE("missing file is an io error, not a format error") {
        std::filesystem::remove(path);
        try {
            read_artifact(path, kMagic);
            FAIL("expected IoError");
        } catch (const FormatError&) {
            FAIL("missing file must not classify as FormatError");
        } catch (const IoError&) {
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("writes are atomic: failed write leaves no partial file") {
    const std::string dir = temp_file("bp_io_nodir");
    std::filesystem::remove_all(dir);
    const std::string path = dir + "/artifact.bin";
    CHECK_THROWS_AS(write_artifact(path, kMagic, {}, "abc"), IoError);
    CHECK_FALSE(std::filesystem::exists(path));
}

TEST_CASE("header keys may not collide with container bookkeeping") {
    const std::string path = temp_file("bp_io_reserved.bin");
    CHECK_THROWS_AS(write_artifact(path, kMagic, {{"checksum", "0"}}, "x"), ConfigError);
    CHECK_THROWS_AS(write_artifact(path, kMagic, {{"payload-bytes", "1"}}, "x"), ConfigError);
    std::filesystem::remove(path);
}

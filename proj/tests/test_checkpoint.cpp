#include "doctest.h"

#include "nova/checkpoint.hpp"
#include "nova/error.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <unistd.h>

using namespace nova;
using namespace nova::checkpoint;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("nova_ckpt_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir / name;
}

std::vector<TensorRecord> sample_records() {
    return {
        {"vit.patch_embed.weight", {3, 2}, {1.0f, -2.5f, 3.25f, 0.0f, 1e-30f, -7.0f}},
        {"meta.step", {4}, encode_u64(123456789)},
        {"scalar", {}, {42.0f}},
        {"empty", {0, 5}, {}},
    };
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("records round trip exactly") {
    const auto path = temp_file("round.bin");
    const auto recs = sample_records();
    save_records(path, recs);
    const auto back = load_records(path);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].name == recs[i].name);
        CHECK(back[i].dims == recs[i].dims);
        CHECK(back[i].data == recs[i].data);
    }
    CHECK(decode_u64(back[1].data) == 123456789u);

    const std::string bytes = read_bytes(path);
    CHECK(bytes.substr(0, 4) == "NOVA");
    CHECK(static_cast<unsigned char>(bytes[4]) == kFormatVersion);

    save_records(path, recs);
    CHECK(read_bytes(path) == bytes);
    CHECK(file_crc32(path) == file_crc32(path));
}

TEST_CASE("u64 encoding covers the full range") {
    for (std::uint64_t v : {std::uint64_t{0}, std::uint64_t{1}, std::uint64_t{65535}, std::uint64_t{65536},
                            std::uint64_t{0xDEADBEEFCAFEF00DULL}, std::numeric_limits<std::uint64_t>::max()}) {
        CHECK(decode_u64(encode_u64(v)) == v);
    }
    CHECK_THROWS(decode_u64({1.0f, 2.0f}));
}

TEST_CASE("damaged files are rejected") {
    const auto path = temp_file("bad.bin");
    save_records(path, sample_records());
    const std::string good = read_bytes(path);

    SUBCASE("wrong magic") {
        std::string b = good;
        b[0] = 'X';
        write_bytes(path, b);
        CHECK_THROWS_AS(load_records(path), CorruptionError);
    }
    SUBCASE("unknown version") {
        std::string b = good;
        b[4] = 9;
        write_bytes(path, b);
        CHECK_THROWS_AS(load_records(path), CorruptionError);
    }
    SUBCASE("truncated") {
        for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{9}, good.size() / 2, good.size() - 1}) {
            write_bytes(path, good.substr(0, keep));
            CHECK_THROWS_AS(load_records(path), CorruptionError);
        }
    }
    SUBCASE("trailing bytes") {
        write_bytes(path, good + "x");
        CHECK_THROWS_AS(load_records(path), CorruptionError);
    }
    SUBCASE("flipped payload bit") {
        std::string b = good;
        b[good.size() / 2] = static_cast<char>(b[good.size() / 2] ^ 0x10);
        write_bytes(path, b);
        CHECK_THROWS_AS(load_records(path), CorruptionError);
    }
    SUBCASE("missing file") { CHECK_THROWS(load_records(temp_file("absent.bin"))); }
}

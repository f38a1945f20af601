#include "nova/checkpoint.hpp"

#include "nova/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nova::checkpoint {

namespace {

constexpr char kMagic[4] = {'N', 'O', 'V', 'A'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    Reader(const std::string& buf, std::size_t begin, std::size_t end) : buf_(buf), pos_(begin), end_(end) {}

    std::uint32_t u32() {
        std::uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    const char* take(std::size_t n) {
        if (n > end_ - pos_) throw CorruptionError("checkpoint truncated");
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& buf_;
    std::size_t pos_;
    std::size_t end_;
};

std::uint32_t crc_of(const char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records) {
    std::string body;
    for (const auto& r : records) {
        std::size_t count = 1;
        for (auto d : r.dims) count *= d;
        if (count != r.data.size()) throw std::invalid_argument("checkpoint: dims do not match data for " + r.name);
        put_u32(body, static_cast<std::uint32_t>(r.name.size()));
        body += r.name;
        put_u32(body, static_cast<std::uint32_t>(r.dims.size()));
        for (auto d : r.dims) put_u32(body, d);
        body.append(reinterpret_cast<const char*>(r.data.data()), r.data.size() * sizeof(float));
    }
    std::string header(kMagic, 4);
    header.push_back(static_cast<char>(kFormatVersion));
    put_u32(header, static_cast<std::uint32_t>(records.size()));
    std::string trailer;
    put_u32(trailer, crc_of(body.data(), body.size()));

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << header << body << trailer;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<TensorRecord> load_records(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    constexpr std::size_t header = 9;
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) throw CorruptionError("checkpoint: bad magic");
    if (buf.size() < 5) throw CorruptionError("checkpoint truncated");
    if (static_cast<std::uint8_t>(buf[4]) != kFormatVersion)
        throw CorruptionError("checkpoint: unsupported version " + std::to_string(static_cast<std::uint8_t>(buf[4])));
    if (buf.size() < header + 4) throw CorruptionError("checkpoint truncated");

    Reader head(buf, 5, header);
    const std::uint32_t count = head.u32();
    Reader body(buf, header, buf.size() - 4);
    std::vector<TensorRecord> records;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorRecord r;
        const std::uint32_t name_len = body.u32();
        const char* name = body.take(name_len);
        r.name.assign(name, name_len);
        const std::uint32_t rank = body.u32();
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            r.dims.push_back(body.u32());
            n *= r.dims.back();
        }
        if (n > buf.size() / sizeof(float)) throw CorruptionError("checkpoint truncated");
        r.data.resize(n);
        std::memcpy(r.data.data(), body.take(n * sizeof(float)), n * sizeof(float));
        records.push_back(std::move(r));
    }
    if (!body.done()) throw CorruptionError("checkpoint: unexpected bytes after the last record");
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if (stored != crc_of(buf.data() + header, buf.size() - 4 - header))
        throw CorruptionError("checkpoint: checksum mismatch");
    return records;
}

std::uint32_t file_crc32(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    return crc_of(buf.data(), buf.size());
}

std::vector<float> encode_u64(std::uint64_t v) {
    std::vector<float> out;
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<float>((v >> (16 * i)) & 0xFFFF));
    return out;
}

std::uint64_t decode_u64(const std::vector<float>& parts) {
    if (parts.size() != 4) throw CorruptionError("checkpoint: malformed integer record");
    std::uint64_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint64_t>(parts[static_cast<std::size_t>(i)]) << (16 * i);
    return v;
}

}  // namespace nova::checkpoint

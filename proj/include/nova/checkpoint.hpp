#pragma once
// Binary tensor archive.
//
//   "NOVA" | version u8 | record count u32
//   per record: name length u32 | name | rank u32 | dims u32[rank] | float32[prod(dims)]
//   crc32 u32 over everything between the header and the trailer
//
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nova::checkpoint {

inline constexpr std::uint8_t kFormatVersion = 1;

struct TensorRecord {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

/// Written to a temporary file and renamed into place.
void save_records(const std::filesystem::path& path, const std::vector<TensorRecord>& records);

/// Throws CorruptionError on a bad magic, unknown version, truncation,
/// trailing bytes or checksum mismatch; nothing is returned in that case.
std::vector<TensorRecord> load_records(const std::filesystem::path& path);

/// CRC-32 of a whole file, used to identify checkpoints in reports.
std::uint32_t file_crc32(const std::filesystem::path& path);

/// 64-bit integers split into four exactly representable 16-bit floats.
std::vector<float> encode_u64(std::uint64_t v);
std::uint64_t decode_u64(const std::vector<float>& parts);

}  // namespace nova::checkpoint

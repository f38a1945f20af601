#pragma once
// Synthetic image-caption datasets built from parametric patterns, and the
// CSV manifest shared with real data.

#include "nova/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nova::synthdata {

enum class Pattern { blob, grating, ring, wedge };

Pattern parse_pattern(const std::string& name);
std::string pattern_name(Pattern p);

struct ClassSpec {
    std::string name;
    Pattern pattern = Pattern::blob;
};

struct SyntheticSpec {
    std::vector<ClassSpec> classes = default_classes();
    int samples_per_class = 128;
    int image_size = 256;
    double noise_sigma = 8.0;    // gray levels
    double cooccurrence = 0.2;   // chance of a second pattern
    std::uint64_t seed = 0;

    static std::vector<ClassSpec> default_classes();
    void validate() const;
};

struct SampleRecord {
    std::string image_path;  // as written in the manifest (relative to it)
    std::string text;
    std::vector<int> labels;  // aligned with Manifest::classes

    bool operator==(const SampleRecord&) const = default;
};

struct Manifest {
    std::vector<std::string> classes;
    std::vector<SampleRecord> records;
    std::filesystem::path base_dir;  // image paths resolve against this

    std::filesystem::path resolve(const SampleRecord& r) const { return base_dir / r.image_path; }
    int class_index(const std::string& name) const;  // -1 when absent
    bool operator==(const Manifest& o) const { return classes == o.classes && records == o.records; }
};

/// Renders one sample: patterns for every class index in `present`, then
/// additive Gaussian noise, rounded and clamped to 8 bits.
GrayImage8 render_sample(const SyntheticSpec& spec, const std::vector<int>& present, std::uint64_t sample_seed);

/// Writes images/<class>_<i>.pgm and manifest.csv under out_dir.
Manifest generate_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// Header: path,text,label_<class>... Label -1 (uncertain) is stored as 0.
/// SchemaError for a missing column, ValueError for other label values,
/// ValidationError for missing images or duplicate paths.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

/// Seeded shuffle, the first round(n * eval_fraction) indices held out.
Split split_indices(std::size_t n, std::uint64_t seed, double eval_fraction = 0.1);

}  // namespace nova::synthdata

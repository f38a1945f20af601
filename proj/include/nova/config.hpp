#pragma once
// Plain-text run configuration: "[section]" headers and "key = value" lines
// (or fully qualified "section.key = value"), '#' comments. Every key has a
// default; unknown keys are rejected.

#include "nova/synthdata.hpp"
#include "nova/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace nova::config {

class RunConfig {
public:
    RunConfig();

    /// ConfigError naming the key or line on any problem.
    void load_file(const std::filesystem::path& path);
    void parse(const std::string& text, const std::string& origin = "<string>");
    /// "section.key=value".
    void set_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma separated, trimmed

    /// Every effective value, grouped by section, in a form parse() accepts.
    std::string resolved() const;
    void write_resolved(const std::filesystem::path& path) const;

    trainer::TrainConfig train_config() const;
    synthdata::SyntheticSpec synthetic_spec() const;

    static const std::vector<std::string>& sections();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace nova::config

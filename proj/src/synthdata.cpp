#include "nova/synthdata.hpp"

#include "nova/error.hpp"
#include "nova/parallel.hpp"
#include "nova/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nova::synthdata {

namespace fs = std::filesystem;

Pattern parse_pattern(const std::string& name) {
    if (name == "blob") return Pattern::blob;
    if (name == "grating") return Pattern::grating;
    if (name == "ring") return Pattern::ring;
    if (name == "wedge") return Pattern::wedge;
    throw std::invalid_argument("unknown pattern: " + name);
}

std::string pattern_name(Pattern p) {
    switch (p) {
        case Pattern::blob: return "blob";
        case Pattern::grating: return "grating";
        case Pattern::ring: return "ring";
        case Pattern::wedge: return "wedge";
    }
    return "?";
}

std::vector<ClassSpec> SyntheticSpec::default_classes() {
    return {{"Atelectasis", Pattern::blob},
            {"Cardiomegaly", Pattern::ring},
            {"Edema", Pattern::grating},
            {"Pleural Effusion", Pattern::wedge}};
}

void SyntheticSpec::validate() const {
    if (classes.size() < 2) throw std::invalid_argument("synthetic spec: need at least 2 classes");
    if (samples_per_class < 1) throw std::invalid_argument("synthetic spec: samples_per_class must be >= 1");
    if (image_size < 16) throw std::invalid_argument("synthetic spec: image_size must be >= 16");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
    if (!(cooccurrence >= 0.0 && cooccurrence <= 1.0))
        throw std::invalid_argument("synthetic spec: cooccurrence must be in [0, 1]");
    std::set<std::string> names;
    for (const auto& c : classes)
        if (c.name.empty() || !names.insert(c.name).second)
            throw std::invalid_argument("synthetic spec: class names must be unique and non-empty");
}

int Manifest::class_index(const std::string& name) const {
    auto it = std::find(classes.begin(), classes.end(), name);
    return it == classes.end() ? -1 : static_cast<int>(it - classes.begin());
}

namespace {

constexpr double kBackground = 96.0;

const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words{"mild",   "stable", "bilateral", "unchanged", "small",   "moderate",
                                                "left",   "right",  "basal",     "apical",    "chronic", "new",
                                                "subtle", "patchy", "diffuse",   "focal"};
    return words;
}

// Adds one pattern with parameters drawn from gen into the canvas.
void draw(std::vector<double>& canvas, int S, Pattern p, Rng& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(gen); };
    const double amp = uniform(70.0, 100.0);
    const double cx = S * uniform(0.4, 0.6), cy = S * uniform(0.4, 0.6);
    switch (p) {
        case Pattern::blob: {
            const double sigma = S * uniform(0.08, 0.14);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    canvas[static_cast<std::size_t>(y) * S + x] += amp * std::exp(-r2 / (2 * sigma * sigma));
                }
            break;
        }
        case Pattern::ring: {
            const double radius = S * uniform(0.2, 0.3);
            const double w = S * uniform(0.02, 0.035);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const double r = std::hypot(x - cx, y - cy) - radius;
                    canvas[static_cast<std::size_t>(y) * S + x] += amp * std::exp(-r * r / (2 * w * w));
                }
            break;
        }
        case Pattern::grating: {
            const double period = S * uniform(0.06, 0.12);
            const double theta = uniform(0.0, std::numbers::pi);
            const double phase = uniform(0.0, 2.0 * std::numbers::pi);
            const double c = std::cos(theta), s = std::sin(theta);
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const double arg = 2.0 * std::numbers::pi * (x * c + y * s) / period + phase;
                    canvas[static_cast<std::size_t>(y) * S + x] += amp * 0.5 * std::cos(arg);
                }
            break;
        }
        case Pattern::wedge: {
            const double dir = uniform(-std::numbers::pi, std::numbers::pi);
            const double half = uniform(20.0, 35.0) * std::numbers::pi / 180.0;
            const double reach = S * 0.45;
            for (int y = 0; y < S; ++y)
                for (int x = 0; x < S; ++x) {
                    const double r = std::hypot(x - cx, y - cy);
                    double d = std::abs(std::remainder(std::atan2(y - cy, x - cx) - dir, 2.0 * std::numbers::pi));
                    // soft edges about two pixels wide, both angular and radial
                    const double angular = std::clamp((half - d) * std::max(r, 1.0) / 2.0 + 0.5, 0.0, 1.0);
                    const double radial = std::clamp((reach - r) / 2.0 + 0.5, 0.0, 1.0);
                    canvas[static_cast<std::size_t>(y) * S + x] += amp * angular * radial;
                }
            break;
        }
    }
}

std::string slug(const std::string& name) {
    std::string out;
    for (char ch : name) {
        const auto c = static_cast<unsigned char>(ch);
        out.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

// Splits CSV text into rows of fields; quoted fields may contain separators,
// doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw SchemaError("manifest: unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

GrayImage8 render_sample(const SyntheticSpec& spec, const std::vector<int>& present, std::uint64_t sample_seed) {
    const int S = spec.image_size;
    std::vector<double> canvas(static_cast<std::size_t>(S) * S, kBackground);
    for (int c : present) {
        Rng gen(derive_seed(sample_seed, static_cast<std::uint64_t>(c) + 1));
        draw(canvas, S, spec.classes.at(static_cast<std::size_t>(c)).pattern, gen);
    }
    Rng noise_gen(derive_seed(sample_seed, 0));
    std::normal_distribution<double> noise(0.0, 1.0);
    GrayImage8 img{S, S, std::vector<std::uint8_t>(canvas.size())};
    for (std::size_t i = 0; i < canvas.size(); ++i) {
        const double v = canvas[i] + (spec.noise_sigma > 0.0 ? spec.noise_sigma * noise(noise_gen) : 0.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return img;
}

Manifest generate_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
    spec.validate();
    const int K = static_cast<int>(spec.classes.size());
    const int per = spec.samples_per_class;
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec) throw std::runtime_error("cannot create " + (out_dir / "images").string() + ": " + ec.message());

    Manifest m;
    m.base_dir = out_dir;
    for (const auto& c : spec.classes) m.classes.push_back(c.name);
    m.records.resize(static_cast<std::size_t>(K) * per);

    parallel_for(m.records.size(), [&](std::size_t idx) {
        const int primary = static_cast<int>(idx) / per;
        const int i = static_cast<int>(idx) % per;
        const std::uint64_t sample_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(primary),
                                                      static_cast<std::uint64_t>(i));
        Rng gen(derive_seed(sample_seed, 0xC0FFEE));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<int> present{primary};
        if (u(gen) < spec.cooccurrence) {
            const int other = std::uniform_int_distribution<int>(0, K - 2)(gen);
            present.push_back(other >= primary ? other + 1 : other);
        }
        const auto& words = filler_words();
        std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
        std::string text = "findings consistent with " + lower(spec.classes[static_cast<std::size_t>(primary)].name);
        if (present.size() > 1) text += " and " + lower(spec.classes[static_cast<std::size_t>(present[1])].name);
        const std::string& f1 = words[pick(gen)];
        const std::string& f2 = words[pick(gen)];
        text += " " + f1 + " " + f2;

        SampleRecord& r = m.records[idx];
        char num[16];
        std::snprintf(num, sizeof num, "%04d", i);
        r.image_path = "images/" + slug(spec.classes[static_cast<std::size_t>(primary)].name) + "_" + num + ".pgm";
        r.text = text;
        r.labels.assign(static_cast<std::size_t>(K), 0);
        for (int c : present) r.labels[static_cast<std::size_t>(c)] = 1;
        write_pgm(out_dir / r.image_path, render_sample(spec, present, sample_seed));
    });
    write_manifest(m, out_dir / "manifest.csv");
    return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "path,text";
    for (const auto& c : m.classes) out << ',' << csv_field("label_" + c);
    out << '\n';
    for (const auto& r : m.records) {
        out << csv_field(r.image_path) << ',' << csv_field(r.text);
        for (int l : r.labels) out << ',' << l;
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const auto rows = parse_csv(ss.str());
    if (rows.empty()) throw SchemaError("manifest: missing header row");

    const auto& header = rows.front();
    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("manifest: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t path_col = column("path");
    const std::size_t text_col = column("text");
    Manifest m;
    m.base_dir = path.parent_path();
    std::vector<std::size_t> label_cols;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i].rfind("label_", 0) == 0) {
            m.classes.push_back(header[i].substr(6));
            label_cols.push_back(i);
        }
    if (label_cols.empty()) throw SchemaError("manifest: missing column 'label_<class>'");

    std::vector<std::string> missing;
    std::set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = "manifest row " + std::to_string(r + 1);
        if (row.size() != header.size())
            throw SchemaError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(row.size()));
        SampleRecord rec;
        rec.image_path = row[path_col];
        rec.text = row[text_col];
        for (std::size_t k = 0; k < label_cols.size(); ++k) {
            const std::string& v = row[label_cols[k]];
            if (v == "1") rec.labels.push_back(1);
            else if (v == "0" || v == "-1") rec.labels.push_back(0);
            else throw ValueError(where + ": label_" + m.classes[k] + " has non-binary value '" + v + "'");
        }
        if (!seen.insert(rec.image_path).second)
            throw ValidationError(where + ": duplicate image path " + rec.image_path);
        if (!fs::exists(m.base_dir / rec.image_path)) missing.push_back(rec.image_path);
        m.records.push_back(std::move(rec));
    }
    if (!missing.empty()) {
        std::string msg = "manifest references " + std::to_string(missing.size()) + " missing image(s):";
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
        if (missing.size() > 20) msg += " ...";
        throw ValidationError(msg);
    }
    return m;
}

Split split_indices(std::size_t n, std::uint64_t seed, double eval_fraction) {
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
        throw std::invalid_argument("split: eval_fraction must be in [0, 1)");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng gen(derive_seed(seed, fnv1a64("split")));
    std::shuffle(idx.begin(), idx.end(), gen);
    const auto held = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
    Split s;
    s.eval.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(held));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(held), idx.end());
    std::sort(s.eval.begin(), s.eval.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

}  // namespace nova::synthdata

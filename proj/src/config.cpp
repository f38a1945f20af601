#include "nova/config.hpp"

#include "nova/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nova::config {

namespace {

struct Key {
    const char* name;
    const char* value;
};

// Defaults. Model sizes marked "preset" follow model.preset.
constexpr Key kDefaults[] = {
    {"data.manifest", ""},
    {"data.seed", "0"},
    {"data.classes", "Atelectasis:blob,Cardiomegaly:ring,Edema:grating,Pleural Effusion:wedge"},
    {"data.samples_per_class", "128"},
    {"data.image_size", "256"},
    {"data.noise_sigma", "8"},
    {"data.cooccurrence", "0.2"},
    {"data.eval_fraction", "0.1"},
    {"data.split_seed", "0"},
    {"data.global_crops", "2"},
    {"data.global_size", "224"},
    {"data.global_scale_min", "0.8"},
    {"data.global_scale_max", "1.0"},
    {"data.local_crops", "6"},
    {"data.local_size", "96"},
    {"data.local_scale_min", "0.5"},
    {"data.local_scale_max", "0.7"},
    {"data.jitter", "0.15"},
    {"data.rotation_deg", "10"},
    {"model.preset", "tiny"},
    {"model.width", "preset"},
    {"model.depth", "preset"},
    {"model.heads", "preset"},
    {"model.patch_size", "16"},
    {"model.mlp_ratio", "4"},
    {"model.image_size", "224"},
    {"model.predictor_layers", "3"},
    {"model.predictor_hidden", "2048"},
    {"model.out_dim", "64"},
    {"model.bn_momentum", "0.1"},
    {"model.bn_eps", "1e-5"},
    {"model.text_dim", "128"},
    {"model.text_seed", "0"},
    {"model.head_init", "normal"},
    {"train.objective", "nova"},
    {"train.epochs", "20"},
    {"train.batch_size", "64"},
    {"train.lr_max", "1e-4"},
    {"train.lr_min", "1e-5"},
    {"train.warmup_epochs", "1"},
    {"train.clip_norm", "1.0"},
    {"train.lambda", "0.02"},
    {"train.seed", "0"},
    {"train.views", "8"},
    {"train.beta1", "0.9"},
    {"train.beta2", "0.999"},
    {"train.eps", "1e-8"},
    {"train.weight_decay", "0.05"},
    {"sigreg.directions", "64"},
    {"sigreg.mode", "grid"},
    {"sigreg.grid_points", "257"},
    {"sigreg.t_max", "8"},
    {"sigreg.resample", "true"},
    {"sigreg.scale", "samples"},
    {"eval.classes", "Atelectasis,Cardiomegaly,Edema,Pleural Effusion,Consolidation"},
    {"eval.every_epoch", "true"},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& v) {
    N out{};
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || v.empty())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
    return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::sections() {
    static const std::vector<std::string> s{"data", "model", "train", "sigreg", "eval"};
    return s;
}

RunConfig::RunConfig() {
    for (const auto& k : kDefaults) values_[k.name] = k.value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

void RunConfig::set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::parse(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
            section = trim(line.substr(1, line.size() - 2));
            if (std::find(sections().begin(), sections().end(), section) == sections().end())
                throw ConfigError(where + ": unknown config section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        if (key.find('.') == std::string::npos) {
            if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside of a section");
            key = section + "." + key;
        }
        if (!values_.count(key)) throw ConfigError(where + ": unknown config key '" + key + "'");
        values_[key] = trim(line.substr(eq + 1));
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    parse(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
long long RunConfig::get_int(const std::string& key) const { return parse_number<long long>(key, get(key)); }
std::uint64_t RunConfig::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
    const auto& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(trim(item));
    return out;
}

std::string RunConfig::resolved() const {
    std::ostringstream out;
    for (const auto& s : sections()) {
        out << '[' << s << "]\n";
        for (const auto& [k, v] : values_)
            if (k.compare(0, s.size() + 1, s + ".") == 0) out << k.substr(s.size() + 1) << " = " << v << '\n';
        out << '\n';
    }
    return out.str();
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << resolved();
}

trainer::TrainConfig RunConfig::train_config() const {
    trainer::TrainConfig c;
    c.objective = trainer::parse_objective(get("train.objective"));
    c.epochs = static_cast<int>(get_int("train.epochs"));
    c.batch_size = static_cast<int>(get_int("train.batch_size"));
    c.lr_max = get_double("train.lr_max");
    c.lr_min = get_double("train.lr_min");
    c.warmup_epochs = get_double("train.warmup_epochs");
    c.clip_norm = get_double("train.clip_norm");
    c.lambda = get_double("train.lambda");
    c.seed = get_u64("train.seed");
    c.views = static_cast<int>(get_int("train.views"));
    c.adam.beta1 = get_double("train.beta1");
    c.adam.beta2 = get_double("train.beta2");
    c.adam.eps = get_double("train.eps");
    c.adam.weight_decay = get_double("train.weight_decay");

    c.sigreg.directions = static_cast<int>(get_int("sigreg.directions"));
    const auto& mode = get("sigreg.mode");
    if (mode == "grid") c.sigreg.mode = sigreg::Mode::grid;
    else if (mode == "closed_form") c.sigreg.mode = sigreg::Mode::closed_form;
    else throw ConfigError("config key 'sigreg.mode': expected grid or closed_form, got '" + mode + "'");
    try {
        c.sigreg.grid = sigreg::make_cf_grid(static_cast<int>(get_int("sigreg.grid_points")), get_double("sigreg.t_max"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'sigreg.grid_points': ") + e.what());
    }
    c.sigreg.resample_each_step = get_bool("sigreg.resample");
    try {
        c.sigreg_scale = trainer::parse_sigreg_scale(get("sigreg.scale"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config key 'sigreg.scale': ") + e.what());
    }

    c.augment.global = {static_cast<int>(get_int("data.global_crops")), static_cast<int>(get_int("data.global_size")),
                        get_double("data.global_scale_min"), get_double("data.global_scale_max")};
    c.augment.local = {static_cast<int>(get_int("data.local_crops")), static_cast<int>(get_int("data.local_size")),
                       get_double("data.local_scale_min"), get_double("data.local_scale_max")};
    c.augment.jitter_range = get_double("data.jitter");
    c.augment.rotation_deg = get_double("data.rotation_deg");
    c.split_seed = get_u64("data.split_seed");
    c.eval_fraction = get_double("data.eval_fraction");

    try {
        c.vit = model::ViTConfig::preset(get("model.preset"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'model.preset': ") + e.what());
    }
    if (get("model.width") != "preset") c.vit.width = static_cast<int>(get_int("model.width"));
    if (get("model.depth") != "preset") c.vit.depth = static_cast<int>(get_int("model.depth"));
    if (get("model.heads") != "preset") c.vit.heads = static_cast<int>(get_int("model.heads"));
    c.vit.patch_size = static_cast<int>(get_int("model.patch_size"));
    c.vit.mlp_ratio = static_cast<int>(get_int("model.mlp_ratio"));
    c.vit.image_size = static_cast<int>(get_int("model.image_size"));
    c.predictor.layers = static_cast<int>(get_int("model.predictor_layers"));
    c.predictor.hidden = static_cast<int>(get_int("model.predictor_hidden"));
    c.predictor.out_dim = static_cast<int>(get_int("model.out_dim"));
    c.predictor.bn_momentum = get_double("model.bn_momentum");
    c.predictor.bn_eps = get_double("model.bn_eps");
    c.text_dim = static_cast<int>(get_int("model.text_dim"));
    c.text_seed = get_u64("model.text_seed");
    try {
        c.head_init = trainer::parse_head_init(get("model.head_init"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config key 'model.head_init': ") + e.what());
    }

    c.eval_classes = get_list("eval.classes");
    c.eval_each_epoch = get_bool("eval.every_epoch");
    c.validate();
    return c;
}

synthdata::SyntheticSpec RunConfig::synthetic_spec() const {
    synthdata::SyntheticSpec s;
    s.classes.clear();
    for (const auto& item : get_list("data.classes")) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos)
            throw ConfigError("config key 'data.classes': entry '" + item + "' is not name:pattern");
        try {
            s.classes.push_back({trim(item.substr(0, colon)), synthdata::parse_pattern(trim(item.substr(colon + 1)))});
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config key 'data.classes': ") + e.what());
        }
    }
    s.samples_per_class = static_cast<int>(get_int("data.samples_per_class"));
    s.image_size = static_cast<int>(get_int("data.image_size"));
    s.noise_sigma = get_double("data.noise_sigma");
    s.cooccurrence = get_double("data.cooccurrence");
    s.seed = get_u64("data.seed");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return s;
}

}  // namespace nova::config

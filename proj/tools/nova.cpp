// nova: generate | train | eval | audit | sigreg-bench

#include "nova/audit.hpp"
#include "nova/bench.hpp"
#include "nova/checkpoint.hpp"
#include "nova/config.hpp"
#include "nova/error.hpp"
#include "nova/synthdata.hpp"
#include "nova/trainer.hpp"
#include "nova/zeroshot.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace nova;

namespace {

enum Exit { ok = 0, generic = 1, config_error = 2, data_error = 3, numerical = 4, corrupt = 5, audit_failed = 6 };

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    long long seed = -1;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
    cmd->add_option("--config", c.config, "key=value config file");
    cmd->add_option("--set", c.sets, "override, section.key=value (repeatable)");
    c.out = default_out;
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--seed", c.seed, "seed");
}

config::RunConfig load_config(const Common& c, const char* seed_key) {
    config::RunConfig cfg;
    if (!c.config.empty()) cfg.load_file(c.config);
    for (const auto& s : c.sets) cfg.set_override(s);
    if (c.seed >= 0) cfg.set(seed_key, std::to_string(c.seed));
    return cfg;
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

int cmd_generate(const Common& c) {
    const auto cfg = load_config(c, "data.seed");
    const auto spec = cfg.synthetic_spec();
    fs::create_directories(c.out);
    cfg.write_resolved(fs::path(c.out) / "resolved.cfg");
    const auto m = synthdata::generate_dataset(spec, c.out);
    std::cout << "wrote " << m.records.size() << " samples to " << (fs::path(c.out) / "manifest.csv").string() << '\n';
    return ok;
}

int cmd_train(const Common& c, const std::string& manifest_flag, const std::string& resume, long long stop_after) {
    auto cfg = load_config(c, "train.seed");
    if (!manifest_flag.empty()) cfg.set("data.manifest", manifest_flag);
    const auto tc = cfg.train_config();
    if (cfg.get("data.manifest").empty()) throw ConfigError("config key 'data.manifest' is empty (or pass --manifest)");
    const auto data = synthdata::load_manifest(cfg.get("data.manifest"));
    fs::create_directories(c.out);
    cfg.write_resolved(fs::path(c.out) / "resolved.cfg");

    trainer::RunOptions opt;
    if (!resume.empty()) opt.resume = resume;
    opt.stop_after_step = stop_after;
    opt.on_eval = [](const trainer::EvalRecord& e) {
        std::cout << "epoch " << e.epoch << " macro_auc=" << e.report.macro_auc << '\n';
    };
    const auto res = trainer::run_training(tc, data, c.out, opt);
    if (!res.steps.empty()) {
        const auto& last = res.steps.back();
        std::cout << "step " << last.step << " loss_total=" << last.loss_total << '\n';
    }
    std::cout << "checkpoint " << res.checkpoint.string() << '\n';
    return ok;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest_flag, bool all_rows) {
    auto cfg = load_config(c, "train.seed");
    if (!manifest_flag.empty()) cfg.set("data.manifest", manifest_flag);
    const auto classes = cfg.get_list("eval.classes");
    const double fraction = cfg.get_double("data.eval_fraction");
    const auto split_seed = cfg.get_u64("data.split_seed");
    if (cfg.get("data.manifest").empty()) throw ConfigError("config key 'data.manifest' is empty (or pass --manifest)");

    auto loaded = trainer::load_model(checkpoint);
    const auto data = synthdata::load_manifest(cfg.get("data.manifest"));
    std::vector<std::size_t> rows;
    if (all_rows) {
        for (std::size_t i = 0; i < data.records.size(); ++i) rows.push_back(i);
    } else {
        rows = synthdata::split_indices(data.records.size(), split_seed, fraction).eval;
    }
    if (rows.empty()) throw DataError("evaluation split is empty");
    std::vector<Image> images;
    for (std::size_t r : rows) images.push_back(to_unit_image(read_gray_image(data.resolve(data.records[r]))));
    const auto report = zeroshot::evaluate(*loaded.model, images, zeroshot::label_maps(data, rows), classes);

    fs::create_directories(c.out);
    cfg.write_resolved(fs::path(c.out) / "resolved.cfg");
    zeroshot::write_report_csv(report, fs::path(c.out) / "eval_report.csv");
    zeroshot::write_report_json(report, loaded.seed, hex32(checkpoint::file_crc32(checkpoint)),
                                fs::path(c.out) / "eval_report.json");
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& cls : report.classes) {
        const auto& a = report.per_class.at(cls);
        std::cout << cls << " auc=" << (a ? std::to_string(*a) : std::string("undefined")) << '\n';
    }
    std::printf("macro_auc=%.6f\n", report.macro_auc);
    return ok;
}

int cmd_audit(const Common& c, int trials, const std::string& fault) {
    const auto seed = c.seed >= 0 ? static_cast<std::uint64_t>(c.seed) : 0;
    const auto report = audit::run_audit(seed, trials, fault);
    for (const auto& e : report.entries)
        std::printf("%-8s max_rel_error=%.3e trials=%d %s\n", e.loss.c_str(), e.max_rel_error, e.trials,
                    e.max_rel_error < report.tolerance ? "PASS" : "FAIL");
    return report.passed() ? ok : audit_failed;
}

int cmd_bench(const Common& c, const std::vector<long>& dims, const std::vector<long>& ns, int directions,
              int repeats, const std::string& csv) {
    bench::Options opt;
    opt.dims = dims;
    opt.batch_sizes = ns;
    opt.directions = directions;
    opt.repeats = repeats;
    if (c.seed >= 0) opt.seed = static_cast<std::uint64_t>(c.seed);
    const auto rows = bench::run(opt);
    if (csv.empty()) {
        bench::write_csv(std::cout, rows);
    } else {
        std::ofstream out(csv);
        if (!out) throw std::runtime_error("cannot write " + csv);
        bench::write_csv(out, rows);
        std::cout << "wrote " << csv << '\n';
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NOVA: vision-language training with text anchors and SIGReg"};
    app.require_subcommand(1);

    Common gen_c, train_c, eval_c, audit_c, bench_c;
    auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
    add_common(gen, gen_c, "data");

    auto* train = app.add_subcommand("train", "train a model");
    add_common(train, train_c, "run");
    std::string train_manifest, resume;
    long long stop_after = -1;
    train->add_option("--manifest", train_manifest, "dataset manifest (overrides data.manifest)");
    train->add_option("--resume", resume, "checkpoint to continue from");
    train->add_option("--stop-after", stop_after, "stop once this many steps are done");

    auto* eval = app.add_subcommand("eval", "zero-shot evaluation of a checkpoint");
    add_common(eval, eval_c, "eval");
    std::string checkpoint, eval_manifest;
    bool all_rows = false;
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest (overrides data.manifest)");
    eval->add_flag("--all", all_rows, "evaluate every record instead of the held-out split");

    auto* aud = app.add_subcommand("audit", "finite-difference gradient audit of every loss");
    add_common(aud, audit_c, ".");
    int trials = 10;
    std::string fault;
    aud->add_option("--trials", trials, "random trials per loss")->capture_default_str();
    aud->add_option("--fault", fault, "scale one loss's analytic gradient by 1.01")
        ->check(CLI::IsMember(audit::loss_names()));

    auto* bench = app.add_subcommand("sigreg-bench", "time the closed-form and grid statistics");
    add_common(bench, bench_c, ".");
    std::vector<long> dims{64}, ns{4096, 8192};
    int directions = 16, repeats = 3;
    std::string csv;
    bench->add_option("--dims", dims, "dimensions")->delimiter(',')->capture_default_str();
    bench->add_option("--batch-sizes", ns, "batch sizes")->delimiter(',')->capture_default_str();
    bench->add_option("--directions", directions, "projection directions")->capture_default_str();
    bench->add_option("--repeats", repeats, "timing repeats (best is kept)")->capture_default_str();
    bench->add_option("--csv", csv, "write the CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*gen) return cmd_generate(gen_c);
        if (*train) return cmd_train(train_c, train_manifest, resume, stop_after);
        if (*eval) return cmd_eval(eval_c, checkpoint, eval_manifest, all_rows);
        if (*aud) return cmd_audit(audit_c, trials, fault);
        if (*bench) return cmd_bench(bench_c, dims, ns, directions, repeats, csv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort at step " << e.step << " (" << e.term << "): " << e.what() << '\n';
        return numerical;
    } catch (const CorruptionError& e) {
        std::cerr << "checkpoint corrupt: " << e.what() << '\n';
        return corrupt;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return generic;
    }
    return generic;
}

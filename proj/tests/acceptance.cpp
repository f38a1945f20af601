// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any
// selected criterion fails.
//
//   acceptance [--work DIR] [criteria...]
//
// Criteria that train (3, 4, 5, 9, 10) share desk-scale runs in DIR.

#include "nova/audit.hpp"
#include "nova/bench.hpp"
#include "nova/config.hpp"
#include "nova/image.hpp"
#include "nova/multicrop.hpp"
#include "nova/objectives.hpp"
#include "nova/rng.hpp"
#include "nova/sigreg.hpp"
#include "nova/synthdata.hpp"
#include "nova/trainer.hpp"
#include "nova/zeroshot.hpp"

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nova;
namespace fs = std::filesystem;

namespace {

double cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

MatrixD normal_matrix(Eigen::Index r, Eigen::Index c, Rng& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    MatrixD m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(gen);
    return m;
}

int uniform_int(Rng& gen, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
double uniform(Rng& gen, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

// ---------------------------------------------------------------------------
// Desk-scale runs shared by the training criteria.

struct Run {
    fs::path dir;
    trainer::RunResult result;
    double cpu = 0.0;
    std::unique_ptr<model::NovaModel<float>> model;
};

class Desk {
public:
    explicit Desk(fs::path work) : work_(std::move(work)) {}

    const synthdata::Manifest& data() {
        if (!data_) {
            const auto dir = work_ / "data";
            fs::remove_all(dir);
            data_ = synthdata::generate_dataset(config::RunConfig().synthetic_spec(), dir);
            for (const auto& r : data_->records) images_.push_back(to_unit_image(read_gray_image(data_->resolve(r))));
        }
        return *data_;
    }

    const std::vector<Image>& images() {
        data();
        return images_;
    }

    trainer::TrainConfig config(double lambda, std::uint64_t seed) const {
        auto cfg = config::RunConfig().train_config();
        cfg.lambda = lambda;
        cfg.seed = seed;
        return cfg;
    }

    Run& run(double lambda, std::uint64_t seed) {
        const std::string name = "lambda" + fmt("%g", lambda) + "_seed" + std::to_string(seed);
        auto& slot = runs_[name];
        if (!slot) {
            slot = std::make_unique<Run>();
            slot->dir = work_ / name;
            fs::remove_all(slot->dir);
            const auto& d = data();
            std::fprintf(stderr, "training %s\n", name.c_str());
            const double t0 = cpu_seconds();
            slot->result = trainer::run_training(config(lambda, seed), d, slot->dir);
            slot->cpu = cpu_seconds() - t0;
            slot->model = trainer::load_model(slot->result.checkpoint).model;
        }
        return *slot;
    }

    const fs::path& work() const { return work_; }

private:
    fs::path work_;
    std::optional<synthdata::Manifest> data_;
    std::vector<Image> images_;
    std::map<std::string, std::unique_ptr<Run>> runs_;
};

// Eval-mode predictions of every multi-crop view of the first `count`
// images, one row per view.
MatrixD view_predictions(model::NovaModel<float>& m, const std::vector<Image>& images,
                         const multicrop::AugmentConfig& aug, std::size_t count) {
    std::vector<multicrop::ViewBatch> items(count);
    for (std::size_t i = 0; i < count; ++i) items[i] = multicrop::make_views(images[i], aug, 1000 + i);
    std::vector<MatrixD> parts;
    Eigen::Index rows = 0;
    for (int g = 0; g < 2; ++g) {
        const int first = g == 0 ? 0 : aug.global.count;
        const int n = g == 0 ? aug.global.count : aug.local.count;
        if (n == 0) continue;
        std::vector<const Image*> ptrs;
        for (int v = first; v < first + n; ++v)
            for (const auto& item : items) ptrs.push_back(&item.views[static_cast<std::size_t>(v)]);
        model::ViTCache<float> vc;
        model::PredictorCache<float> pc;
        const MatrixF e = m.vit.forward(model::ImageBatch<float>::from_images(ptrs), vc);
        parts.push_back(m.predictor.forward(e, model::Mode::eval, pc).cast<double>());
        rows += parts.back().rows();
    }
    MatrixD out(rows, parts.front().cols());
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
    }
    return out;
}

MatrixD covariance(const MatrixD& x) {
    const MatrixD c = x.rowwise() - x.colwise().mean();
    return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

struct Isotropy {
    double cond = 0.0, var_min = 0.0, var_max = 0.0;
    bool within() const { return cond <= 50.0 && var_min >= 0.2 && var_max <= 5.0; }
    std::string str() const {
        return "cond=" + fmt("%.4g", cond) + " var=[" + fmt("%.4g", var_min) + "," + fmt("%.4g", var_max) + "]";
    }
};

Isotropy isotropy(model::NovaModel<float>& m, const std::vector<Image>& images) {
    const MatrixD cov = covariance(trainer::predict_embeddings(m, images));
    Eigen::SelfAdjointEigenSolver<MatrixD> es(cov);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    Isotropy r;
    r.cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    r.var_min = cov.diagonal().minCoeff();
    r.var_max = cov.diagonal().maxCoeff();
    return r;
}

double final_auc(const Run& r) {
    return r.result.evals.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : r.result.evals.back().report.macro_auc;
}

// ---------------------------------------------------------------------------

Outcome gradient_audit() {
    const double t0 = cpu_seconds();
    const auto rep = audit::run_audit(0, 10);
    const double cpu = cpu_seconds() - t0;
    std::string detail;
    double worst = 0.0;
    for (const auto& e : rep.entries) {
        detail += e.loss + "=" + fmt("%.2e", e.max_rel_error) + " ";
        worst = std::max(worst, e.max_rel_error);
    }
    const bool complete = rep.entries.size() == audit::loss_names().size();
    return {complete && rep.passed() && worst < 1e-4 && cpu < 120.0,
            detail + "cpu=" + fmt("%.1f", cpu) + "s (need < 1e-4, < 120s)"};
}

// The CF integral evaluated by adaptive Gauss-Kronrod on [-12, 12]; the
// weight beyond is below 1e-31.
double direct_statistic(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    auto integrand = [&](double t) {
        double re = 0.0, im = 0.0;
        for (double v : x) {
            re += std::cos(t * v);
            im += std::sin(t * v);
        }
        re = re / n - std::exp(-0.5 * t * t);
        im /= n;
        return (re * re + im * im) * std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
    };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -12.0, 12.0, 20, 1e-15, &err);
}

// A batch that is Gaussian, uniform, or a two-point mixture, with random
// location and scale, so the statistic spans small and large values.
MatrixD random_batch(Rng& gen, Eigen::Index n, Eigen::Index d) {
    MatrixD x = normal_matrix(n, d, gen);
    const int kind = uniform_int(gen, 0, 2);
    if (kind == 1) x = x.unaryExpr([&](double) { return uniform(gen, -2.0, 2.0); });
    if (kind == 2)
        for (Eigen::Index i = 0; i < n; ++i) x.row(i).array() += uniform(gen, 0.0, 1.0) < 0.5 ? -1.5 : 1.5;
    x *= uniform(gen, 0.3, 2.5);
    x.array() += uniform(gen, -1.0, 1.0);
    return x;
}

Outcome sigreg_oracles() {
    Rng gen(20);
    const auto grid = sigreg::make_cf_grid();
    double worst_grid = 0.0, worst_direct = 0.0;
    for (int b = 0; b < 100; ++b) {
        const auto n = b == 0 ? 4096 : static_cast<Eigen::Index>(std::exp(uniform(gen, std::log(2.0), std::log(4096.0))));
        const auto d = b == 0 ? 128 : uniform_int(gen, 1, 128);
        const MatrixD x = random_batch(gen, n, d);
        const auto dirs = sigreg::sample_directions(d, 8, static_cast<std::uint64_t>(b));
        const double g = sigreg::sigreg_loss(x, dirs, sigreg::Mode::grid, grid, false).loss;
        const double c = sigreg::sigreg_loss(x, dirs, sigreg::Mode::closed_form, grid, false).loss;
        worst_grid = std::max(worst_grid, std::abs(g - c));
    }
    for (int b = 0; b < 20; ++b) {
        const auto n = uniform_int(gen, 2, 64);
        const auto d = uniform_int(gen, 1, 16);
        const MatrixD x = random_batch(gen, n, d);
        const auto dirs = sigreg::sample_directions(d, 4, static_cast<std::uint64_t>(500 + b));
        const double c = sigreg::sigreg_loss(x, dirs, sigreg::Mode::closed_form, grid, false).loss;
        const MatrixD proj = x * dirs.directions.transpose();
        double direct = 0.0;
        for (Eigen::Index k = 0; k < proj.cols(); ++k) {
            std::vector<double> col(static_cast<std::size_t>(proj.rows()));
            for (Eigen::Index i = 0; i < proj.rows(); ++i) col[static_cast<std::size_t>(i)] = proj(i, k);
            direct += direct_statistic(col);
        }
        direct /= static_cast<double>(proj.cols());
        worst_direct = std::max(worst_direct, std::abs(c - direct));
    }
    return {worst_grid <= 1e-6 && worst_direct <= 1e-8,
            "grid_vs_closed=" + fmt("%.2e", worst_grid) + " (need <= 1e-6) closed_vs_quadrature=" +
                fmt("%.2e", worst_direct) + " (need <= 1e-8)"};
}

Outcome collapse_control(Desk& desk) {
    auto& free = desk.run(0.0, 0);
    auto& reg = desk.run(0.02, 0);
    const auto aug = desk.config(0.02, 0).augment;
    auto total_var = [&](Run& r) { return covariance(view_predictions(*r.model, desk.images(), aug, 64)).trace(); };
    const double v0 = total_var(free), v1 = total_var(reg);
    const double ratio = v0 / v1;
    const bool fast = free.cpu < 900.0 && reg.cpu < 900.0;
    return {ratio <= 0.01 && fast,
            "var(lambda=0)=" + fmt("%.4g", v0) + " var(lambda=0.02)=" + fmt("%.4g", v1) + " ratio=" + fmt("%.3g", ratio) +
                " (need <= 0.01) cpu=" + fmt("%.0f", free.cpu) + "s," + fmt("%.0f", reg.cpu) + "s (need < 900s)"};
}

Outcome isotropy_check(Desk& desk) {
    const auto reg = isotropy(*desk.run(0.02, 0).model, desk.images());
    const auto free = isotropy(*desk.run(0.0, 0).model, desk.images());
    return {reg.within() && !free.within(), "lambda=0.02: " + reg.str() + "; lambda=0: " + free.str() +
                                                " (need cond <= 50, var in [0.2, 5] for 0.02 only)"};
}

Outcome zero_shot(Desk& desk) {
    const double trained = final_auc(desk.run(0.02, 0));
    const auto dir = desk.work() / "random_init";
    fs::remove_all(dir);
    auto cfg = desk.config(0.02, 0);
    cfg.epochs = 0;
    const auto res = trainer::run_training(cfg, desk.data(), dir);
    auto m = trainer::load_model(res.checkpoint).model;
    const auto& data = desk.data();
    const auto split = synthdata::split_indices(data.records.size(), cfg.split_seed, cfg.eval_fraction);
    std::vector<Image> imgs;
    for (auto i : split.eval) imgs.push_back(desk.images()[i]);
    const double random = zeroshot::evaluate(*m, imgs, zeroshot::label_maps(data, split.eval), cfg.eval_classes).macro_auc;
    return {trained >= 0.95 && std::abs(random - 0.5) <= 0.05,
            "trained=" + fmt("%.4f", trained) + " (need >= 0.95) random_init=" + fmt("%.4f", random) +
                " (need 0.5 +- 0.05)"};
}

Outcome auc_oracle() {
    Rng gen(60);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const int n = uniform_int(gen, 2, 300);
        const int levels = t % 2 == 0 ? uniform_int(gen, 1, 5) : 0;  // tie-heavy half
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (int i = 0; i < n; ++i) {
            s[i] = levels > 0 ? static_cast<double>(uniform_int(gen, 0, levels)) : uniform(gen, -1.0, 1.0);
            y[i] = uniform(gen, 0.0, 1.0) < 0.4;
        }
        y[0] = 1;
        y[1] = 0;
        double wins = 0.0, pairs = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (y[i] == 1 && y[j] == 0) {
                    pairs += 1.0;
                    wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
                }
        worst = std::max(worst, std::abs(zeroshot::roc_auc(s, y) - wins / pairs));
    }
    return {worst <= 1e-12, "max_abs_error=" + fmt("%.2e", worst) + " over 1000 instances (need <= 1e-12)"};
}

double infonce_direct(const MatrixD& v, const MatrixD& t, double tau) {
    const auto n = v.rows();
    double i2t = 0.0, t2i = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double row = 0.0, col = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            row += std::exp(v.row(i).dot(t.row(j)) / tau);
            col += std::exp(t.row(i).dot(v.row(j)) / tau);
        }
        const double pos = std::exp(v.row(i).dot(t.row(i)) / tau);
        i2t -= std::log(pos / row);
        t2i -= std::log(pos / col);
    }
    return 0.5 * (i2t + t2i) / static_cast<double>(n);
}

double siglip_direct(const MatrixD& v, const MatrixD& t, double tau, double bias) {
    const auto n = v.rows();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double y = i == j ? 1.0 : -1.0;
            sum += std::log(1.0 / (1.0 + std::exp(-(y * v.row(i).dot(t.row(j)) * tau + bias))));
        }
    return -sum / static_cast<double>(n * n);
}

Outcome loss_oracles() {
    Rng gen(70);
    double worst_nce = 0.0, worst_sig = 0.0;
    for (int b = 0; b < 100; ++b) {
        const int n = uniform_int(gen, 2, 16), d = uniform_int(gen, 2, 64);
        const MatrixD v = objectives::normalize_rows(normal_matrix(n, d, gen));
        const MatrixD t = objectives::normalize_rows(normal_matrix(n, d, gen));
        const double tau = std::exp(uniform(gen, std::log(0.02), std::log(1.0)));
        worst_nce = std::max(worst_nce, std::abs(objectives::infonce_loss(v, t, {tau, 0.0}).loss - infonce_direct(v, t, tau)));
        const double scale = uniform(gen, 1.0, 20.0), bias = uniform(gen, -15.0, 5.0);
        worst_sig = std::max(worst_sig, std::abs(objectives::siglip_loss(v, t, {scale, bias}).loss -
                                                 siglip_direct(v, t, scale, bias)));
    }
    return {worst_nce <= 1e-10 && worst_sig <= 1e-10,
            "infonce=" + fmt("%.2e", worst_nce) + " siglip=" + fmt("%.2e", worst_sig) + " (need <= 1e-10)"};
}

// Grid growth is judged against the linear expectation: a doubling of n may
// cost at most 1.35 times the ideal factor of two.
Outcome complexity() {
    bench::Options opt;
    opt.batch_sizes = {4096, 8192};
    opt.dims = {64};
    opt.directions = 16;
    opt.repeats = 5;
    const auto rows = bench::run(opt);
    std::map<std::pair<sigreg::Mode, long>, const bench::Row*> at;
    for (const auto& r : rows) at[{r.mode, r.n}] = &r;
    const auto* g1 = at.at({sigreg::Mode::grid, 4096});
    const auto* g2 = at.at({sigreg::Mode::grid, 8192});
    const auto* c1 = at.at({sigreg::Mode::closed_form, 4096});
    const auto* c2 = at.at({sigreg::Mode::closed_form, 8192});
    const double grid_ratio = g2->wall_time / g1->wall_time;
    const double closed_ratio = c2->wall_time / c1->wall_time;
    const double agree = std::max(std::abs(g1->statistic - c1->statistic), std::abs(g2->statistic - c2->statistic));
    const bool pass = grid_ratio / 2.0 <= 1.35 && closed_ratio >= 3.0 && closed_ratio <= 5.5 && agree <= 1e-6;
    return {pass, "grid_ratio=" + fmt("%.3f", grid_ratio) + " (per-doubling growth over linear " +
                      fmt("%.3f", grid_ratio / 2.0) + ", need <= 1.35) closed_ratio=" + fmt("%.3f", closed_ratio) +
                      " (need in [3.0, 5.5]) statistic_gap=" + fmt("%.1e", agree)};
}

Outcome stability(Desk& desk) {
    std::vector<double> finals;
    double worst_fraction = 1.0;
    std::string curves;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto& r = desk.run(0.02, seed);
        std::vector<double> auc;
        for (const auto& e : r.result.evals) auc.push_back(e.report.macro_auc);
        finals.push_back(auc.empty() ? std::numeric_limits<double>::quiet_NaN() : auc.back());
        // Centered 3-epoch moving average, truncated at the ends.
        std::vector<double> smooth(auc.size());
        for (std::size_t e = 0; e < auc.size(); ++e) {
            const std::size_t lo = e == 0 ? 0 : e - 1, hi = std::min(auc.size() - 1, e + 1);
            smooth[e] = std::accumulate(auc.begin() + lo, auc.begin() + hi + 1, 0.0) / static_cast<double>(hi - lo + 1);
        }
        int up = 0;
        for (std::size_t e = 1; e < smooth.size(); ++e) up += smooth[e] >= smooth[e - 1];
        const double fraction = smooth.size() > 1 ? up / static_cast<double>(smooth.size() - 1) : 0.0;
        worst_fraction = std::min(worst_fraction, fraction);
        curves += " seed" + std::to_string(seed) + ":final=" + fmt("%.4f", finals.back()) + ",monotone=" + fmt("%.2f", fraction);
    }
    const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / 3.0;
    double ss = 0.0;
    for (double f : finals) ss += (f - mean) * (f - mean);
    const double sd_points = 100.0 * std::sqrt(ss / 2.0);
    return {sd_points <= 2.0 && worst_fraction >= 0.9,
            "std=" + fmt("%.3f", sd_points) + " points (need <= 2.0)" + curves + " (need monotone >= 0.90)"};
}

Outcome determinism(Desk& desk) {
    const auto& full = desk.run(0.02, 0);
    const auto dir = desk.work() / "resumed";
    fs::remove_all(dir);
    const auto cfg = desk.config(0.02, 0);
    trainer::RunOptions stop;
    stop.stop_after_step = full.result.final_step / 2;
    trainer::run_training(cfg, desk.data(), dir, stop);
    trainer::RunOptions resume;
    resume.resume = dir / "checkpoint.bin";
    trainer::run_training(cfg, desk.data(), dir, resume);
    const bool metrics = slurp(dir / "metrics.csv") == slurp(full.dir / "metrics.csv");
    const bool evals = slurp(dir / "eval.csv") == slurp(full.dir / "eval.csv");
    const bool ckpt = slurp(dir / "checkpoint.bin") == slurp(full.dir / "checkpoint.bin");
    return {metrics && evals && ckpt, std::string("stop at step ") + std::to_string(stop.stop_after_step) +
                                          " then resume: metrics " + (metrics ? "identical" : "differ") + ", eval " +
                                          (evals ? "identical" : "differ") + ", checkpoint " +
                                          (ckpt ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::string work = (fs::temp_directory_path() / "nova_acceptance").string();
    std::vector<int> selected;
    app.add_option("--work", work, "directory for datasets and runs");
    app.add_option("criteria", selected, "criteria to run (default: all)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);
    if (selected.empty())
        for (int i = 1; i <= 10; ++i) selected.push_back(i);
    std::set<int> order(selected.begin(), selected.end());

    fs::create_directories(work);
    Desk desk(work);
    const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
        {1, {"gradient audit", gradient_audit}},
        {2, {"sigreg oracle equivalence", sigreg_oracles}},
        {3, {"collapse control", [&] { return collapse_control(desk); }}},
        {4, {"isotropy", [&] { return isotropy_check(desk); }}},
        {5, {"zero-shot learning signal", [&] { return zero_shot(desk); }}},
        {6, {"auc correctness", auc_oracle}},
        {7, {"loss formula oracles", loss_oracles}},
        {8, {"complexity", complexity}},
        {9, {"seed stability", [&] { return stability(desk); }}},
        {10, {"determinism", [&] { return determinism(desk); }}},
    };
    int failed = 0;
    for (int id : order) {
        const auto& [name, check] = criteria.at(id);
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %d %s: %s | %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}

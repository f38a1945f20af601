#include "nova/bench.hpp"

#include "nova/rng.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <new>

namespace {

std::atomic<std::size_t> g_live{0};
std::atomic<std::size_t> g_peak{0};

// Each block carries its size in a header so delete can account for it.
constexpr std::size_t kHeader = alignof(std::max_align_t);

void* counted_alloc(std::size_t size) {
    void* p = std::malloc(size + kHeader);
    if (!p) throw std::bad_alloc();
    *static_cast<std::size_t*>(p) = size;
    const std::size_t now = g_live.fetch_add(size) + size;
    std::size_t peak = g_peak.load();
    while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
    }
    return static_cast<char*>(p) + kHeader;
}

void counted_free(void* p) noexcept {
    if (!p) return;
    void* base = static_cast<char*>(p) - kHeader;
    g_live.fetch_sub(*static_cast<std::size_t*>(base));
    std::free(base);
}

}  // namespace

void* operator new(std::size_t size) { return counted_alloc(size); }
void* operator new[](std::size_t size) { return counted_alloc(size); }
void operator delete(void* p) noexcept { counted_free(p); }
void operator delete[](void* p) noexcept { counted_free(p); }
void operator delete(void* p, std::size_t) noexcept { counted_free(p); }
void operator delete[](void* p, std::size_t) noexcept { counted_free(p); }

namespace nova::bench {

std::size_t live_bytes() { return g_live.load(); }
std::size_t peak_bytes() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_live.load()); }

std::vector<Row> run(const Options& opt) {
    std::vector<Row> rows;
    for (long d : opt.dims)
        for (long n : opt.batch_sizes) {
            if (d < 1 || n < 2) throw std::invalid_argument("sigreg-bench: sizes must be positive (n >= 2)");
            Rng gen(derive_seed(opt.seed, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(n)));
            std::normal_distribution<double> normal;
            MatrixD x(n, d);
            for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(gen);
            const auto dirs = sigreg::sample_directions(d, opt.directions, derive_seed(opt.seed, 1));
            const Eigen::MatrixXd proj = x * dirs.directions.transpose();

            for (auto mode : {sigreg::Mode::closed_form, sigreg::Mode::grid}) {
                Row row{n, d, mode, 1e300, 0, 0.0};
                for (int r = 0; r < std::max(opt.repeats, 1); ++r) {
                    reset_peak();
                    const std::size_t before = live_bytes();
                    const auto t0 = std::chrono::steady_clock::now();
                    double total = 0.0;
                    for (Eigen::Index i = 0; i < proj.cols(); ++i) {
                        std::span<const double> col(proj.col(i).data(), static_cast<std::size_t>(n));
                        total += mode == sigreg::Mode::closed_form ? sigreg::epps_pulley_closed(col)
                                                                   : sigreg::epps_pulley_grid(col, opt.grid);
                    }
                    const auto t1 = std::chrono::steady_clock::now();
                    row.wall_time = std::min(row.wall_time, std::chrono::duration<double>(t1 - t0).count());
                    row.peak_extra_memory = std::max(row.peak_extra_memory, peak_bytes() - before);
                    row.statistic = total / static_cast<double>(proj.cols());
                }
                rows.push_back(row);
            }
        }
    return rows;
}

void write_csv(std::ostream& out, const std::vector<Row>& rows) {
    out << "n,d,mode,wall_time,peak_extra_memory,statistic\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.n << ',' << r.d << ',' << (r.mode == sigreg::Mode::grid ? "grid" : "closed_form") << ','
            << r.wall_time << ',' << r.peak_extra_memory << ',' << r.statistic << '\n';
}

}  // namespace nova::bench

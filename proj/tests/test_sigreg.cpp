#include "doctest.h"

#include "nova/gradcheck.hpp"
#include "nova/rng.hpp"
#include "nova/sigreg.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

using namespace nova;
using namespace nova::sigreg;

namespace {

std::vector<double> normal_samples(std::size_t n, double sd, std::uint64_t seed) {
    Rng gen(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> x(n);
    for (auto& v : x) v = d(gen);
    return x;
}

MatrixD normal_matrix(Eigen::Index r, Eigen::Index c, double sd, std::uint64_t seed) {
    const auto v = normal_samples(static_cast<std::size_t>(r * c), sd, seed);
    MatrixD m(r, c);
    std::copy(v.begin(), v.end(), m.data());
    return m;
}

// Direct quadrature of the defining integral with complex arithmetic and a
// composite Simpson rule on [-12, 12]; shares no code with the library.
double cf_integral_oracle(const std::vector<double>& x) {
    const int intervals = 24000;
    const double a = -12.0, b = 12.0, h = (b - a) / intervals;
    auto f = [&](double t) {
        std::complex<double> phi = 0.0;
        for (double v : x) phi += std::polar(1.0, t * v);
        phi /= static_cast<double>(x.size());
        const double diff = std::norm(phi - std::exp(-t * t / 2));
        return diff * std::exp(-t * t / 2) / std::sqrt(2 * std::numbers::pi);
    };
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

}  // namespace

TEST_CASE("sample_directions gives deterministic unit rows") {
    const auto a = sample_directions(4, 8, 7);
    const auto b = sample_directions(4, 8, 7);
    CHECK(a.count() == 8);
    CHECK(a.dim() == 4);
    for (Eigen::Index i = 0; i < 8; ++i) CHECK(std::abs(a.directions.row(i).norm() - 1.0) < 1e-6);
    CHECK(a.directions == b.directions);
    const auto one = sample_directions(1, 3, 1);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(std::abs(one.directions(i, 0)) == 1.0);
    CHECK_THROWS_AS(sample_directions(0, 3, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_directions(3, 0, 1), std::invalid_argument);
}

TEST_CASE("closed form matches hand evaluations") {
    const double zero[] = {0.0};
    CHECK(epps_pulley_closed(zero) == doctest::Approx(1.0 - std::sqrt(2.0) + 1.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(std::abs(epps_pulley_closed(zero) - 0.16314) < 5e-6);
    const double pair[] = {-1.0, 1.0};
    CHECK(std::abs(epps_pulley_closed(pair) - 0.043624) < 1e-5);
    CHECK_THROWS_AS(epps_pulley_closed(std::span<const double>{}), std::invalid_argument);
    const double bad[] = {0.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(epps_pulley_closed(bad), std::invalid_argument);
    const double inf[] = {std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(epps_pulley_closed(inf), std::invalid_argument);
}

TEST_CASE("standard normal scores below a point mass") {
    const std::vector<double> zeros(10000, 0.0);
    const double t_const = epps_pulley_closed(zeros);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = normal_samples(10000, 1.0, seed);
        CHECK(epps_pulley_grid(x, make_cf_grid()) < t_const);
    }
    // The closed form agrees on a subset of seeds (it is quadratic in n).
    for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(epps_pulley_closed(normal_samples(10000, 1.0, seed)) < t_const);
}

TEST_CASE("grid path") {
    SUBCASE("single point at zero gives zero") {
        CFGridSpec g{{0.0}, {3.7}};
        CHECK(epps_pulley_grid(normal_samples(50, 1.0, 3), g) == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("pair example matches the closed form") {
        const double pair[] = {-1.0, 1.0};
        CHECK(std::abs(epps_pulley_grid(pair, make_cf_grid()) - epps_pulley_closed(pair)) < 1e-6);
    }
    SUBCASE("errors") {
        const double one[] = {1.0};
        CHECK_THROWS_AS(epps_pulley_grid(std::span<const double>{}, make_cf_grid()), std::invalid_argument);
        CHECK_THROWS_AS(epps_pulley_grid(one, CFGridSpec{}), std::invalid_argument);
    }
    SUBCASE("non-uniform grids use the general path") {
        auto g = make_cf_grid(257, 8.0);
        auto skew = g;
        skew.t_points[100] += 1e-3;  // breaks uniformity, keeps monotonicity
        const auto x = normal_samples(40, 1.3, 9);
        CHECK(std::abs(epps_pulley_grid(x, skew) - epps_pulley_grid(x, g)) < 1e-3);
    }
}

TEST_CASE("grid validation") {
    CHECK_NOTHROW(validate_grid(make_cf_grid()));
    auto g = make_cf_grid(9, 4.0);
    auto bad = g;
    bad.t_weights[2] = 0.0;
    CHECK_THROWS_AS(validate_grid(bad), std::invalid_argument);
    bad = g;
    std::swap(bad.t_points[1], bad.t_points[2]);
    CHECK_THROWS_AS(validate_grid(bad), std::invalid_argument);
    bad = g;
    bad.t_points[0] -= 0.5;
    CHECK_THROWS_AS(validate_grid(bad), std::invalid_argument);
    CHECK_THROWS_AS(make_cf_grid(256), std::invalid_argument);
}

TEST_CASE("closed form and grid agree with an independent quadrature") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng gen(seed);
        const auto n = std::uniform_int_distribution<std::size_t>(1, 64)(gen);
        const double sd = std::uniform_real_distribution<double>(0.1, 2.5)(gen);
        auto x = normal_samples(n, sd, seed + 100);
        const double oracle = cf_integral_oracle(x);
        CHECK(std::abs(epps_pulley_closed(x) - oracle) < 1e-8);
        CHECK(std::abs(epps_pulley_grid(x, make_cf_grid()) - oracle) < 1e-6);
    }
}

TEST_CASE("statistic is invariant to permutation and negation") {
    auto x = normal_samples(300, 1.4, 5);
    const double base = epps_pulley_closed(x);
    auto y = x;
    std::reverse(y.begin(), y.end());
    std::rotate(y.begin(), y.begin() + 17, y.end());
    CHECK(std::abs(epps_pulley_closed(y) - base) < 1e-12);
    for (auto& v : y) v = -v;
    CHECK(std::abs(epps_pulley_closed(y) - base) < 1e-12);
    CHECK(std::abs(epps_pulley_grid(y, make_cf_grid()) - epps_pulley_grid(x, make_cf_grid())) < 1e-12);
}

TEST_CASE("1-D gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = normal_samples(30, 0.5 + 0.1 * static_cast<double>(seed), seed);
        std::vector<double> gc(x.size()), gg(x.size());
        epps_pulley_closed(x, gc);
        epps_pulley_grid(x, make_cf_grid(), gg);
        const auto rc = gradcheck::finite_difference_check([&] { return epps_pulley_closed(x); },
                                                           {{"closed", x, gc}}, 1e-5, 200, seed);
        const auto rg = gradcheck::finite_difference_check([&] { return epps_pulley_grid(x, make_cf_grid()); },
                                                           {{"grid", x, gg}}, 1e-5, 200, seed);
        CHECK_MESSAGE(rc.max_rel_error < 1e-4, rc.groups[0].worst_analytic << " " << rc.groups[0].worst_numeric);
        CHECK_MESSAGE(rg.max_rel_error < 1e-4, rg.groups[0].worst_analytic << " " << rg.groups[0].worst_numeric);
    }
}

TEST_CASE("sigreg_loss gradient matches finite differences in both modes") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        MatrixD e = normal_matrix(24, 5, 1.2, seed);
        const auto dirs = sample_directions(5, 7, seed + 1);
        for (auto mode : {Mode::closed_form, Mode::grid}) {
            const auto res = sigreg_loss(e, dirs, mode, make_cf_grid());
            const auto rep = gradcheck::finite_difference_check(
                [&] { return sigreg_loss(e, dirs, mode, make_cf_grid(), false).loss; },
                {{"emb", {e.data(), static_cast<std::size_t>(e.size())}, {res.grad.data(), static_cast<std::size_t>(res.grad.size())}}},
                1e-5, 200, seed);
            CHECK(rep.max_rel_error < 1e-4);
        }
    }
}

TEST_CASE("sigreg_loss properties") {
    SigregConfig cfg;
    cfg.seed = 3;
    SUBCASE("standard normal batch beats an all-zeros batch") {
        const MatrixD zeros = MatrixD::Zero(4096, 64);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const MatrixD x = normal_matrix(4096, 64, 1.0, seed);
            const auto dirs = sample_directions(64, 64, seed);
            CHECK(sigreg_loss(x, dirs, Mode::grid, cfg.grid, false).loss <
                  sigreg_loss(zeros, dirs, Mode::grid, cfg.grid, false).loss);
        }
    }
    SUBCASE("identical embeddings score above a standard normal batch") {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const MatrixD x = normal_matrix(256, 16, 1.0, seed);
            MatrixD same = MatrixD::Zero(256, 16);
            same.rowwise() = x.row(0);
            CHECK(sigreg_loss(same, cfg, 0, false).loss > sigreg_loss(x, cfg, 0, false).loss);
        }
    }
    SUBCASE("row permutation leaves the loss unchanged") {
        const MatrixD x = normal_matrix(100, 8, 1.0, 4);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(100);
        perm.setIdentity();
        Rng gen(1);
        std::shuffle(perm.indices().data(), perm.indices().data() + 100, gen);
        const MatrixD y = perm * x;
        for (auto mode : {Mode::closed_form, Mode::grid}) {
            cfg.mode = mode;
            CHECK(std::abs(sigreg_loss(x, cfg, 5, false).loss - sigreg_loss(y, cfg, 5, false).loss) < 1e-12);
        }
    }
    SUBCASE("flipping directions leaves the loss unchanged") {
        const MatrixD x = normal_matrix(80, 6, 0.7, 8);
        auto dirs = sample_directions(6, 10, 2);
        const double a = sigreg_loss(x, dirs, Mode::closed_form, cfg.grid, false).loss;
        dirs.directions.topRows(5) *= -1.0;
        CHECK(std::abs(sigreg_loss(x, dirs, Mode::closed_form, cfg.grid, false).loss - a) < 1e-12);
    }
    SUBCASE("scale collapse ordering over seeds") {
        double unit = 0.0, small = 0.0, point = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            unit += epps_pulley_closed(normal_samples(500, 1.0, seed));
            small += epps_pulley_closed(normal_samples(500, 0.1, seed));
            point += epps_pulley_closed(std::vector<double>(500, 0.0));
        }
        CHECK(unit < small);
        CHECK(small < point);
    }
    SUBCASE("needs two embeddings") {
        CHECK_THROWS_AS(sigreg_loss(MatrixD::Zero(1, 4), cfg, 0), std::invalid_argument);
    }
    SUBCASE("directions resample per step unless fixed") {
        CHECK(directions_for_step(cfg, 8, 1).directions != directions_for_step(cfg, 8, 2).directions);
        CHECK(directions_for_step(cfg, 8, 1).directions == directions_for_step(cfg, 8, 1).directions);
        cfg.resample_each_step = false;
        CHECK(directions_for_step(cfg, 8, 1).directions == directions_for_step(cfg, 8, 2).directions);
    }
}

TEST_CASE("grid and closed form agree on random batches") {
    Rng gen(11);
    for (int trial = 0; trial < 10; ++trial) {
        const auto n = std::uniform_int_distribution<Eigen::Index>(2, 512)(gen);
        const auto d = std::uniform_int_distribution<Eigen::Index>(1, 32)(gen);
        const double sd = std::uniform_real_distribution<double>(0.2, 3.0)(gen);
        const MatrixD x = normal_matrix(n, d, sd, static_cast<std::uint64_t>(trial));
        const auto dirs = sample_directions(d, 8, static_cast<std::uint64_t>(trial));
        const double a = sigreg_loss(x, dirs, Mode::closed_form, make_cf_grid(), false).loss;
        const double b = sigreg_loss(x, dirs, Mode::grid, make_cf_grid(), false).loss;
        CHECK(std::abs(a - b) < 1e-6);
    }
}

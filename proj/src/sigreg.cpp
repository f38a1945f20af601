#include "nova/sigreg.hpp"

#include "nova/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace nova::sigreg {

namespace {

void check_samples(std::span<const double> samples, std::span<double> grad) {
    if (samples.empty()) throw std::invalid_argument("epps_pulley: empty sample");
    for (double x : samples)
        if (!std::isfinite(x)) throw std::invalid_argument("epps_pulley: non-finite sample");
    if (!grad.empty() && grad.size() != samples.size())
        throw std::invalid_argument("epps_pulley: gradient buffer size mismatch");
}

}  // namespace

DirectionSet sample_directions(Eigen::Index d, Eigen::Index m, std::uint64_t seed) {
    if (d < 1 || m < 1) throw std::invalid_argument("sample_directions: d and m must be >= 1");
    DirectionSet out;
    out.seed = seed;
    out.directions.resize(m, d);
    Rng gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < m; ++i) {
        double norm = 0.0;
        do {
            for (Eigen::Index j = 0; j < d; ++j) out.directions(i, j) = normal(gen);
            norm = out.directions.row(i).norm();
        } while (norm < 1e-12);
        out.directions.row(i) /= norm;
    }
    return out;
}

CFGridSpec make_cf_grid(int points, double t_max) {
    if (points < 1 || points % 2 == 0)
        throw std::invalid_argument("make_cf_grid: point count must be odd and positive");
    if (!(t_max > 0.0)) throw std::invalid_argument("make_cf_grid: t_max must be positive");
    CFGridSpec grid;
    if (points == 1) {
        grid.t_points = {0.0};
        grid.t_weights = {1.0};
        return grid;
    }
    const int half = points / 2;
    const double h = t_max / half;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    grid.t_points.reserve(points);
    grid.t_weights.reserve(points);
    for (int i = -half; i <= half; ++i) {
        double t = i * h;
        double end = (i == -half || i == half) ? 0.5 : 1.0;
        grid.t_points.push_back(t);
        grid.t_weights.push_back(end * h * inv_sqrt_2pi * std::exp(-0.5 * t * t));
    }
    return grid;
}

void validate_grid(const CFGridSpec& grid) {
    const auto& t = grid.t_points;
    const auto& w = grid.t_weights;
    if (t.empty()) throw std::invalid_argument("cf grid: empty");
    if (t.size() != w.size()) throw std::invalid_argument("cf grid: points/weights size mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(w[i] > 0.0)) throw std::invalid_argument("cf grid: weights must be positive");
        if (i > 0 && !(t[i] > t[i - 1]))
            throw std::invalid_argument("cf grid: points must be strictly increasing");
        std::size_t mirror = t.size() - 1 - i;
        if (std::abs(t[i] + t[mirror]) > 1e-12 * (1.0 + std::abs(t[i])))
            throw std::invalid_argument("cf grid: points must be symmetric about 0");
    }
}

double epps_pulley_closed(std::span<const double> x, std::span<double> grad) {
    check_samples(x, grad);
    const std::size_t n = x.size();
    const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    const double sqrt2_n = std::numbers::sqrt2 / static_cast<double>(n);
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

    double pair_sum = static_cast<double>(n);  // diagonal terms
    for (std::size_t j = 0; j < n; ++j) {
        const double xj = x[j];
        double row = 0.0;
        double row_grad = 0.0;
        for (std::size_t k = j + 1; k < n; ++k) {
            const double d = xj - x[k];
            const double e = std::exp(-0.5 * d * d);
            row += e;
            if (want_grad) {
                const double g = 2.0 * d * e * inv_n2;
                row_grad -= g;
                grad[k] += g;
            }
        }
        pair_sum += 2.0 * row;
        if (want_grad) grad[j] += row_grad;
    }

    double target_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(-0.25 * x[j] * x[j]);
        target_sum += e;
        if (want_grad) grad[j] += 0.5 * sqrt2_n * x[j] * e;
    }
    const double t = inv_n2 * pair_sum - sqrt2_n * target_sum + 1.0 / std::sqrt(3.0);
    return std::max(t, 0.0);
}

namespace {

// Spacing h when the grid is t_i = (i - half) * h, else 0.
double uniform_spacing(const CFGridSpec& grid) {
    const auto& t = grid.t_points;
    const std::size_t g = t.size();
    if (g < 3 || g % 2 == 0) return 0.0;
    const std::size_t half = g / 2;
    const double h = t[g - 1] / static_cast<double>(half);
    if (!(h > 0.0)) return 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        const double expect = (static_cast<double>(i) - static_cast<double>(half)) * h;
        if (std::abs(t[i] - expect) > 1e-12 * (1.0 + std::abs(expect))) return 0.0;
        if (std::abs(grid.t_weights[i] - grid.t_weights[g - 1 - i]) > 1e-15 * grid.t_weights[i]) return 0.0;
    }
    return h;
}

// Uniform symmetric grid: cos/sin at t = k h follow from rotating by e^{i h x},
// and the negative half mirrors the positive one (cos even, sin odd).
double grid_uniform(std::span<const double> x, const CFGridSpec& grid, double h, std::span<double> grad) {
    const std::size_t n = x.size();
    const std::size_t half = grid.t_points.size() / 2;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> re(half + 1, 0.0), im(half + 1, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double wc = std::cos(h * x[j]), ws = std::sin(h * x[j]);
        double c = 1.0, s = 0.0;
        re[0] += 1.0;
        for (std::size_t k = 1; k <= half; ++k) {
            const double c2 = c * wc - s * ws;
            s = s * wc + c * ws;
            c = c2;
            re[k] += c;
            im[k] += s;
        }
    }
    // Weighted residuals; both halves contribute identically.
    double total = 0.0;
    std::vector<double> wre(half + 1), wim(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        const double t = static_cast<double>(k) * h;
        const double w = grid.t_weights[half + k] * (k == 0 ? 1.0 : 2.0);
        const double r = re[k] * inv_n - std::exp(-0.5 * t * t);
        const double i = im[k] * inv_n;
        total += w * (r * r + i * i);
        wre[k] = w * t * r;
        wim[k] = w * t * i;
    }
    if (!grad.empty()) {
        for (std::size_t j = 0; j < n; ++j) {
            const double wc = std::cos(h * x[j]), ws = std::sin(h * x[j]);
            double c = 1.0, s = 0.0, acc = 0.0;
            for (std::size_t k = 1; k <= half; ++k) {
                const double c2 = c * wc - s * ws;
                s = s * wc + c * ws;
                c = c2;
                acc += wim[k] * c - wre[k] * s;
            }
            grad[j] = 2.0 * inv_n * acc;
        }
    }
    return total;
}

}  // namespace

double epps_pulley_grid(std::span<const double> x, const CFGridSpec& grid, std::span<double> grad) {
    check_samples(x, grad);
    if (grid.t_points.empty()) throw std::invalid_argument("epps_pulley_grid: empty grid");
    if (grid.t_points.size() != grid.t_weights.size())
        throw std::invalid_argument("epps_pulley_grid: points/weights size mismatch");
    if (const double h = uniform_spacing(grid); h > 0.0) return grid_uniform(x, grid, h, grad);

    const std::size_t n = x.size();
    const std::size_t g = grid.t_points.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    // Real and imaginary parts of the empirical characteristic function.
    std::vector<double> re(g, 0.0), im(g, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < g; ++i) {
            const double a = grid.t_points[i] * x[j];
            re[i] += std::cos(a);
            im[i] += std::sin(a);
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
        const double t = grid.t_points[i];
        re[i] = re[i] * inv_n - std::exp(-0.5 * t * t);
        im[i] *= inv_n;
        total += grid.t_weights[i] * (re[i] * re[i] + im[i] * im[i]);
    }
    if (!grad.empty()) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g; ++i) {
                const double t = grid.t_points[i];
                const double a = t * x[j];
                acc += grid.t_weights[i] * t * (im[i] * std::cos(a) - re[i] * std::sin(a));
            }
            grad[j] = 2.0 * inv_n * acc;
        }
    }
    return total;
}

std::uint64_t step_seed(const SigregConfig& config, std::int64_t step) {
    if (!config.resample_each_step) return config.seed;
    return derive_seed(config.seed, static_cast<std::uint64_t>(step));
}

DirectionSet directions_for_step(const SigregConfig& config, Eigen::Index d, std::int64_t step) {
    if (config.directions < 1) throw std::invalid_argument("sigreg: direction count must be >= 1");
    return sample_directions(d, config.directions, step_seed(config, step));
}

SigregResult sigreg_loss(const MatrixD& embeddings, const DirectionSet& directions, Mode mode,
                         const CFGridSpec& grid, bool with_grad) {
    const Eigen::Index k = embeddings.rows();
    if (k < 2) throw std::invalid_argument("sigreg_loss: need at least 2 embeddings");
    if (embeddings.cols() < 1) throw std::invalid_argument("sigreg_loss: dimension must be >= 1");
    if (directions.dim() != embeddings.cols())
        throw std::invalid_argument("sigreg_loss: direction dimension mismatch");
    if (!embeddings.allFinite()) throw std::invalid_argument("sigreg_loss: non-finite embedding");

    const Eigen::Index m = directions.count();
    // Column-major so each direction's projections are contiguous.
    const Eigen::MatrixXd proj = embeddings * directions.directions.transpose();
    Eigen::MatrixXd proj_grad;
    if (with_grad) proj_grad.resize(k, m);

    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        std::span<const double> col(proj.col(i).data(), static_cast<std::size_t>(k));
        std::span<double> gcol;
        if (with_grad) gcol = std::span<double>(proj_grad.col(i).data(), static_cast<std::size_t>(k));
        total += mode == Mode::closed_form ? epps_pulley_closed(col, gcol)
                                           : epps_pulley_grid(col, grid, gcol);
    }
    SigregResult result;
    result.loss = total / static_cast<double>(m);
    if (with_grad) result.grad = (proj_grad * directions.directions) / static_cast<double>(m);
    return result;
}

SigregResult sigreg_loss(const MatrixD& embeddings, const SigregConfig& config, std::int64_t step,
                         bool with_grad) {
    const DirectionSet dirs = directions_for_step(config, embeddings.cols(), step);
    return sigreg_loss(embeddings, dirs, config.mode, config.grid, with_grad);
}

}  // namespace nova::sigreg

#pragma once

// Sketched isotropic Gaussian regularization.
//
// An embedding batch is projected onto random unit directions and each 1-D
// projection is scored against N(0, 1) with the Epps-Pulley characteristic
// function statistic
//
//   T = integral |phi_n(t) - exp(-t^2/2)|^2 w(t) dt,   w = N(0, 1) density,
//
// which has the closed form
//
//   T = 1/n^2 sum_jk exp(-(x_j - x_k)^2 / 2) - sqrt(2)/n sum_j exp(-x_j^2 / 4) + 1/sqrt(3).
//
// The closed form costs O(n^2); the grid path evaluates the integral by
// quadrature in O(n * |grid|).

#include "nova/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace nova::sigreg {

struct DirectionSet {
    MatrixD directions;  // m x d, unit rows
    std::uint64_t seed = 0;

    Eigen::Index count() const { return directions.rows(); }
    Eigen::Index dim() const { return directions.cols(); }
};

/// m isotropic unit vectors in R^d (normal components, then normalized).
DirectionSet sample_directions(Eigen::Index d, Eigen::Index m, std::uint64_t seed);

struct CFGridSpec {
    std::vector<double> t_points;
    std::vector<double> t_weights;  // quadrature weight times N(0, 1) density
};

/// Uniform symmetric trapezoid grid on [-t_max, t_max]. For integrands with
/// Gaussian decay the trapezoid rule converges geometrically in the spacing.
CFGridSpec make_cf_grid(int points = 257, double t_max = 8.0);

/// Throws std::invalid_argument unless weights are positive, points strictly
/// increasing and the grid symmetric about zero.
void validate_grid(const CFGridSpec& grid);

enum class Mode { closed_form, grid };

struct SigregConfig {
    int directions = 64;
    Mode mode = Mode::grid;
    CFGridSpec grid = make_cf_grid();
    bool resample_each_step = true;
    std::uint64_t seed = 0;
};

/// Closed-form statistic. Writes dT/dx_j into `grad` when non-empty.
double epps_pulley_closed(std::span<const double> samples, std::span<double> grad = {});

/// Quadrature statistic. Writes dT/dx_j into `grad` when non-empty.
double epps_pulley_grid(std::span<const double> samples, const CFGridSpec& grid,
                        std::span<double> grad = {});

/// Seed used for the directions at a training step.
std::uint64_t step_seed(const SigregConfig& config, std::int64_t step);

/// Directions for a training step: resampled from (seed, step) when
/// resample_each_step is set, otherwise fixed by the base seed.
DirectionSet directions_for_step(const SigregConfig& config, Eigen::Index d, std::int64_t step);

struct SigregResult {
    double loss = 0.0;
    MatrixD grad;  // k x d, empty unless requested
};

/// Mean of the 1-D statistic over the directions, applied jointly to all k
/// rows of `embeddings`.
SigregResult sigreg_loss(const MatrixD& embeddings, const DirectionSet& directions,
                         Mode mode, const CFGridSpec& grid, bool with_grad = true);

SigregResult sigreg_loss(const MatrixD& embeddings, const SigregConfig& config,
                         std::int64_t step, bool with_grad = true);

}  // namespace nova::sigreg

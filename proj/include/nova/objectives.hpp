#pragma once

// Training objectives. All losses evaluate in double precision and return the
// analytic gradient alongside the value.

#include "nova/tensor.hpp"

namespace nova::objectives {

/// Predictions for n views of a batch of B items, stacked view-major:
/// row v * B + b holds view v of item b.
struct ViewPredictions {
    MatrixD rows;  // (n * B) x D
    Eigen::Index views = 0;

    Eigen::Index batch() const { return views > 0 ? rows.rows() / views : 0; }
    Eigen::Index dim() const { return rows.cols(); }
};

struct LossWeights {
    double lambda = 0.02;
};

struct TemperatureBias {
    double tau = 1.0;
    double bias = 0.0;
};

struct MseResult {
    double loss = 0.0;
    MatrixD grad_preds;   // same shape as ViewPredictions::rows
    MatrixD grad_anchor;  // B x D
};

/// Element mean of (P - E_T)^2 with the B x D anchor broadcast over views.
MseResult alignment_mse(const ViewPredictions& preds, const MatrixD& anchor);

/// (1 - lambda) * mse + lambda * sig.
double nova_loss(double mse, double sig, LossWeights weights);

struct ContrastiveResult {
    double loss = 0.0;
    MatrixD grad_v;
    MatrixD grad_t;
    double grad_tau = 0.0;
    double grad_bias = 0.0;
};

/// Symmetric InfoNCE with logits v_i . t_j / tau; the mean of the
/// image-to-text and text-to-image terms.
ContrastiveResult infonce_loss(const MatrixD& v, const MatrixD& t, TemperatureBias tb);

/// -1/B^2 sum_ij log sigmoid(y_ij * (v_i . t_j) * tau + b), y_ij = +1 iff i == j.
ContrastiveResult siglip_loss(const MatrixD& v, const MatrixD& t, TemperatureBias tb);

/// Row-wise l2 normalization and its backward pass.
MatrixD normalize_rows(const MatrixD& x);
MatrixD normalize_rows_backward(const MatrixD& x, const MatrixD& grad_out);

}  // namespace nova::objectives

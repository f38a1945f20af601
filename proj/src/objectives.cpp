#include "nova/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace nova::objectives {

namespace {

void check_normalized_pairs(const MatrixD& v, const MatrixD& t, const char* who) {
    if (v.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
    if (v.rows() != t.rows() || v.cols() != t.cols())
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        if (std::abs(v.row(i).norm() - 1.0) > 1e-6 || std::abs(t.row(i).norm() - 1.0) > 1e-6)
            throw std::invalid_argument(std::string(who) + ": rows must be l2-normalized");
    }
}

// log(sigmoid(z)) and its derivative, stable for large |z|.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

MseResult alignment_mse(const ViewPredictions& preds, const MatrixD& anchor) {
    if (preds.views < 1) throw std::invalid_argument("alignment_mse: need at least one view");
    if (preds.rows.rows() != preds.views * anchor.rows() || preds.dim() != anchor.cols())
        throw std::invalid_argument("alignment_mse: prediction/anchor shape mismatch");
    if (!preds.rows.allFinite() || !anchor.allFinite())
        throw std::invalid_argument("alignment_mse: non-finite input");

    const Eigen::Index B = anchor.rows();
    const double count = static_cast<double>(preds.rows.size());
    MseResult r;
    r.grad_preds.resize(preds.rows.rows(), preds.rows.cols());
    r.grad_anchor = MatrixD::Zero(B, anchor.cols());
    double sum = 0.0;
    for (Eigen::Index v = 0; v < preds.views; ++v) {
        const MatrixD diff = preds.rows.middleRows(v * B, B) - anchor;
        sum += diff.squaredNorm();
        r.grad_preds.middleRows(v * B, B) = (2.0 / count) * diff;
        r.grad_anchor -= (2.0 / count) * diff;
    }
    r.loss = sum / count;
    return r;
}

double nova_loss(double mse, double sig, LossWeights weights) {
    if (!(weights.lambda >= 0.0 && weights.lambda <= 1.0))
        throw std::invalid_argument("nova_loss: lambda must lie in [0, 1]");
    if (!std::isfinite(mse) || !std::isfinite(sig))
        throw std::invalid_argument("nova_loss: non-finite input");
    return (1.0 - weights.lambda) * mse + weights.lambda * sig;
}

ContrastiveResult infonce_loss(const MatrixD& v, const MatrixD& t, TemperatureBias tb) {
    check_normalized_pairs(v, t, "infonce_loss");
    if (!(tb.tau > 0.0)) throw std::invalid_argument("infonce_loss: tau must be positive");
    const Eigen::Index B = v.rows();
    const MatrixD sim = v * t.transpose();
    const MatrixD logits = sim / tb.tau;

    // Softmax over each row (image->text) and each column (text->image).
    MatrixD p_row(B, B), p_col(B, B);
    double loss_i2t = 0.0, loss_t2i = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        p_row.row(i) = (logits.row(i).array() - lse).exp();
        loss_i2t += lse - logits(i, i);
    }
    for (Eigen::Index j = 0; j < B; ++j) {
        const double mx = logits.col(j).maxCoeff();
        const double lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
        p_col.col(j) = (logits.col(j).array() - lse).exp();
        loss_t2i += lse - logits(j, j);
    }
    ContrastiveResult r;
    r.loss = 0.5 * (loss_i2t + loss_t2i) / static_cast<double>(B);

    // dL/dlogits = (p_row + p_col - 2 I) / (2B)
    MatrixD g = (p_row + p_col) / (2.0 * static_cast<double>(B));
    g.diagonal().array() -= 1.0 / static_cast<double>(B);
    const MatrixD g_sim = g / tb.tau;
    r.grad_v = g_sim * t;
    r.grad_t = g_sim.transpose() * v;
    r.grad_tau = -(g.cwiseProduct(sim)).sum() / (tb.tau * tb.tau);
    return r;
}

ContrastiveResult siglip_loss(const MatrixD& v, const MatrixD& t, TemperatureBias tb) {
    check_normalized_pairs(v, t, "siglip_loss");
    const Eigen::Index B = v.rows();
    const double inv = 1.0 / static_cast<double>(B * B);
    const MatrixD sim = v * t.transpose();
    MatrixD g_sim(B, B);
    ContrastiveResult r;
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        for (Eigen::Index j = 0; j < B; ++j) {
            const double y = i == j ? 1.0 : -1.0;
            const double z = y * sim(i, j) * tb.tau + tb.bias;
            total -= log_sigmoid(z);
            // d(-log sigmoid(z))/dz = sigmoid(z) - 1
            const double dz = (sigmoid(z) - 1.0) * inv;
            g_sim(i, j) = dz * y * tb.tau;
            r.grad_tau += dz * y * sim(i, j);
            r.grad_bias += dz;
        }
    }
    r.loss = total * inv;
    r.grad_v = g_sim * t;
    r.grad_t = g_sim.transpose() * v;
    return r;
}

MatrixD normalize_rows(const MatrixD& x) {
    MatrixD out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (!(n > 0.0)) throw std::invalid_argument("normalize_rows: zero-norm row");
        out.row(i) = x.row(i) / n;
    }
    return out;
}

MatrixD normalize_rows_backward(const MatrixD& x, const MatrixD& grad_out) {
    MatrixD out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        const RowVector<double> y = x.row(i) / n;
        out.row(i) = (grad_out.row(i) - grad_out.row(i).dot(y) * y) / n;
    }
    return out;
}

}  // namespace nova::objectives

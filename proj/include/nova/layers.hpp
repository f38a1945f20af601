#pragma once

// Differentiable building blocks. Each layer keeps only parameters; forward
// passes write what the backward pass needs into an explicit cache so the
// same layer can run on several batches before backpropagation.

#include "nova/rng.hpp"
#include "nova/tensor.hpp"

#include <unsupported/Eigen/SpecialFunctions>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace nova::layers {

template <typename T>
void init_truncated_normal(Parameter<T>& p, std::uint64_t seed, double stddev = 0.02) {
    Rng gen(derive_seed(seed, fnv1a64(p.name)));
    for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = static_cast<T>(truncated_normal(gen, stddev));
}

/// y = x W + b with W stored in x out; the bias is optional.
template <typename T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;
    bool has_bias = true;

    Linear() = default;
    Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::uint64_t seed, bool with_bias = true)
        : weight(name + ".weight", in, out), bias(name + ".bias", 1, with_bias ? out : 0), has_bias(with_bias) {
        init_truncated_normal(weight, seed);
    }

    Matrix<T> forward(const Matrix<T>& x) const {
        Matrix<T> y(x.rows(), weight.value.cols());
        y.noalias() = x * weight.value;
        if (has_bias) y.rowwise() += bias.value.row(0);
        return y;
    }

    /// Accumulates parameter gradients; returns dL/dx unless need_input_grad is false.
    Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy, bool need_input_grad = true) {
        weight.grad.noalias() += x.transpose() * dy;
        if (has_bias) bias.grad.row(0) += dy.colwise().sum();
        if (!need_input_grad) return {};
        Matrix<T> dx(dy.rows(), weight.value.rows());
        dx.noalias() = dy * weight.value.transpose();
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&weight);
        if (has_bias) out.push_back(&bias);
    }
};

template <typename T>
struct LayerNormCache {
    Matrix<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
};

/// Normalizes each row over its features; the shift is optional.
template <typename T>
struct LayerNorm {
    Parameter<T> gamma;
    Parameter<T> beta;
    bool has_bias = true;
    T eps = static_cast<T>(1e-6);

    LayerNorm() = default;
    LayerNorm(const std::string& name, Eigen::Index dim, bool with_bias = true)
        : gamma(name + ".gamma", 1, dim), beta(name + ".beta", 1, with_bias ? dim : 0), has_bias(with_bias) {
        gamma.value.setOnes();
    }

    Matrix<T> forward(const Matrix<T>& x, LayerNormCache<T>& cache) const {
        const Eigen::Index n = x.rows(), c = x.cols();
        cache.xhat.resize(n, c);
        cache.rstd.resize(n);
        Matrix<T> y(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
            const T mean = x.row(i).mean();
            const T var = (x.row(i).array() - mean).square().mean();
            const T rstd = T(1) / std::sqrt(var + eps);
            cache.rstd(i) = rstd;
            cache.xhat.row(i) = (x.row(i).array() - mean) * rstd;
            y.row(i) = cache.xhat.row(i).cwiseProduct(gamma.value.row(0));
            if (has_bias) y.row(i) += beta.value.row(0);
        }
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy, const LayerNormCache<T>& cache) {
        const Eigen::Index n = dy.rows(), c = dy.cols();
        gamma.grad.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
        if (has_bias) beta.grad.row(0) += dy.colwise().sum();
        Matrix<T> dx(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto dxhat = (dy.row(i).cwiseProduct(gamma.value.row(0))).eval();
            const T m1 = dxhat.mean();
            const T m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
            dx.row(i) = cache.rstd(i) * (dxhat.array() - m1 - cache.xhat.row(i).array() * m2).matrix();
        }
        return dx;
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        if (has_bias) out.push_back(&beta);
    }
};

/// Exact GELU, x * Phi(x).
template <typename T>
Matrix<T> gelu(const Matrix<T>& x) {
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    return (x.array() * (T(0.5) * (T(1) + (x.array() * inv_sqrt2).erf()))).matrix();
}

template <typename T>
Matrix<T> gelu_backward(const Matrix<T>& x, const Matrix<T>& dy) {
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    const T inv_sqrt_2pi = static_cast<T>(1.0 / std::sqrt(2.0 * std::numbers::pi));
    const auto cdf = T(0.5) * (T(1) + (x.array() * inv_sqrt2).erf());
    const auto pdf = inv_sqrt_2pi * (T(-0.5) * x.array().square()).exp();
    return (dy.array() * (cdf + x.array() * pdf)).matrix();
}

template <typename T>
struct BatchNormCache {
    Matrix<T> xhat;
    RowVector<T> inv_std;
    bool train = true;
};

/// Batch normalization over rows. Train mode normalizes with batch statistics
/// and updates the running estimates; eval mode uses the running estimates.
template <typename T>
struct BatchNorm {
    Parameter<T> gamma;
    Parameter<T> beta;
    Matrix<T> running_mean;  // 1 x dim
    Matrix<T> running_var;   // 1 x dim
    std::string name;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm() = default;
    BatchNorm(const std::string& n, Eigen::Index dim, double mom, double e)
        : gamma(n + ".gamma", 1, dim),
          beta(n + ".beta", 1, dim),
          running_mean(Matrix<T>::Zero(1, dim)),
          running_var(Matrix<T>::Ones(1, dim)),
          name(n),
          momentum(mom),
          eps(e) {
        gamma.value.setOnes();
    }

    Matrix<T> forward(const Matrix<T>& x, BatchNormCache<T>& cache, bool train) {
        const Eigen::Index n = x.rows();
        cache.train = train;
        RowVector<T> mean, var;
        if (train) {
            mean = x.colwise().mean();
            var = (x.rowwise() - mean).array().square().colwise().mean().matrix();
            const T unbiased = n > 1 ? static_cast<T>(n) / static_cast<T>(n - 1) : T(1);
            const T mom = static_cast<T>(momentum);
            running_mean = (T(1) - mom) * running_mean + mom * mean;
            running_var = (T(1) - mom) * running_var + mom * unbiased * var;
        } else {
            mean = running_mean.row(0);
            var = running_var.row(0);
        }
        cache.inv_std = (var.array() + static_cast<T>(eps)).rsqrt().matrix();
        cache.xhat = ((x.rowwise() - mean).array().rowwise() * cache.inv_std.array()).matrix();
        Matrix<T> y = (cache.xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
        y.rowwise() += beta.value.row(0);
        return y;
    }

    Matrix<T> backward(const Matrix<T>& dy, const BatchNormCache<T>& cache) {
        const Eigen::Index n = dy.rows();
        gamma.grad.row(0) += dy.cwiseProduct(cache.xhat).colwise().sum();
        beta.grad.row(0) += dy.colwise().sum();
        const RowVector<T> scale = gamma.value.row(0).cwiseProduct(cache.inv_std);
        if (!cache.train) return (dy.array().rowwise() * scale.array()).matrix();
        const RowVector<T> sum_dy = dy.colwise().sum();
        const RowVector<T> sum_dy_xhat = dy.cwiseProduct(cache.xhat).colwise().sum();
        const T inv_n = T(1) / static_cast<T>(n);
        Matrix<T> dx = dy;
        dx.rowwise() -= sum_dy * inv_n;
        dx -= (cache.xhat.array().rowwise() * (sum_dy_xhat * inv_n).array()).matrix();
        return (dx.array().rowwise() * scale.array()).matrix();
    }

    void collect(std::vector<Parameter<T>*>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

template <typename T>
struct AttentionCache {
    Matrix<T> input;  // (N * L) x C
    Matrix<T> qkv;    // (N * L) x 3C
    Matrix<T> probs;  // (N * H * L) x L
    Matrix<T> mixed;  // (N * L) x C, heads concatenated before the output projection
};

/// Multi-head self-attention over sequences of length `tokens` stacked in rows.
/// Queries and values carry a bias; a key bias would not change the softmax.
template <typename T>
struct MultiHeadAttention {
    Linear<T> qkv;
    Parameter<T> q_bias;
    Parameter<T> v_bias;
    Linear<T> proj;
    int heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, Eigen::Index width, int h, std::uint64_t seed)
        : qkv(name + ".qkv", width, 3 * width, seed, false),
          q_bias(name + ".q_bias", 1, width),
          v_bias(name + ".v_bias", 1, width),
          proj(name + ".proj", width, width, seed),
          heads(h) {}

    Matrix<T> forward(const Matrix<T>& x, Eigen::Index tokens, AttentionCache<T>& cache) const {
        const Eigen::Index C = x.cols();
        const Eigen::Index N = x.rows() / tokens;
        const Eigen::Index dh = C / heads;
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        cache.input = x;
        cache.qkv = qkv.forward(x);
        cache.qkv.leftCols(C).rowwise() += q_bias.value.row(0);
        cache.qkv.rightCols(C).rowwise() += v_bias.value.row(0);
        cache.probs.resize(N * heads * tokens, tokens);
        cache.mixed.resize(x.rows(), C);
        Matrix<T> scores(tokens, tokens);
        for (Eigen::Index n = 0; n < N; ++n) {
            for (int h = 0; h < heads; ++h) {
                const auto q = cache.qkv.block(n * tokens, h * dh, tokens, dh);
                const auto k = cache.qkv.block(n * tokens, C + h * dh, tokens, dh);
                const auto v = cache.qkv.block(n * tokens, 2 * C + h * dh, tokens, dh);
                scores.noalias() = scale * (q * k.transpose());
                auto p = cache.probs.block((n * heads + h) * tokens, 0, tokens, tokens);
                for (Eigen::Index i = 0; i < tokens; ++i) {
                    const T mx = scores.row(i).maxCoeff();
                    p.row(i) = (scores.row(i).array() - mx).exp().matrix();
                    p.row(i) /= p.row(i).sum();
                }
                cache.mixed.block(n * tokens, h * dh, tokens, dh).noalias() = p * v;
            }
        }
        return proj.forward(cache.mixed);
    }

    Matrix<T> backward(const Matrix<T>& dy, Eigen::Index tokens, const AttentionCache<T>& cache) {
        const Eigen::Index C = dy.cols();
        const Eigen::Index N = dy.rows() / tokens;
        const Eigen::Index dh = C / heads;
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        const Matrix<T> dmixed = proj.backward(cache.mixed, dy);
        Matrix<T> dqkv(dy.rows(), 3 * C);
        Matrix<T> dp(tokens, tokens);
        for (Eigen::Index n = 0; n < N; ++n) {
            for (int h = 0; h < heads; ++h) {
                const auto q = cache.qkv.block(n * tokens, h * dh, tokens, dh);
                const auto k = cache.qkv.block(n * tokens, C + h * dh, tokens, dh);
                const auto v = cache.qkv.block(n * tokens, 2 * C + h * dh, tokens, dh);
                const auto p = cache.probs.block((n * heads + h) * tokens, 0, tokens, tokens);
                const auto dout = dmixed.block(n * tokens, h * dh, tokens, dh);
                dqkv.block(n * tokens, 2 * C + h * dh, tokens, dh).noalias() = p.transpose() * dout;
                dp.noalias() = dout * v.transpose();
                // softmax backward: ds = p * (dp - rowsum(dp * p))
                for (Eigen::Index i = 0; i < tokens; ++i) {
                    const T dot = dp.row(i).dot(p.row(i));
                    dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
                }
                dqkv.block(n * tokens, h * dh, tokens, dh).noalias() = scale * (dp * k);
                dqkv.block(n * tokens, C + h * dh, tokens, dh).noalias() = scale * (dp.transpose() * q);
            }
        }
        q_bias.grad.row(0) += dqkv.leftCols(C).colwise().sum();
        v_bias.grad.row(0) += dqkv.rightCols(C).colwise().sum();
        return qkv.backward(cache.input, dqkv);
    }

    void collect(std::vector<Parameter<T>*>& out) {
        qkv.collect(out);
        out.push_back(&q_bias);
        out.push_back(&v_bias);
        proj.collect(out);
    }
};

}  // namespace nova::layers

#pragma once
// Decoupled-weight-decay Adam, the warmup + cosine schedule and global-norm
// gradient clipping.

#include "nova/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nova::optim {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

/// Only matrices named "*.weight" are decayed; biases, normalization gains,
/// positional embeddings and loss scalars are not.
bool decays(const std::string& name);

template <typename T>
class AdamW {
public:
    AdamW() = default;
    AdamW(const std::vector<Parameter<T>*>& params, AdamWConfig cfg) : cfg_(cfg) {
        for (auto* p : params) {
            m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    /// One update of every trainable parameter in `params` (same order as at
    /// construction) at learning rate lr.
    void step(const std::vector<Parameter<T>*>& params, double lr) {
        if (params.size() != m_.size()) throw std::invalid_argument("AdamW: parameter list changed");
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
        const T step_size = static_cast<T>(lr);
        const T eps = static_cast<T>(cfg_.eps);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter<T>& p = *params[i];
            if (!p.trainable) continue;
            if (cfg_.weight_decay != 0.0 && decays(p.name))
                p.value *= static_cast<T>(1.0 - lr * cfg_.weight_decay);
            m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
            v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseAbs2();
            p.value.array() -= step_size * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
        }
    }

    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    std::vector<Matrix<T>>& first_moments() { return m_; }
    std::vector<Matrix<T>>& second_moments() { return v_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::vector<Matrix<T>> m_, v_;
    std::int64_t t_ = 0;
};

/// Global l2 norm of the trainable gradients, accumulated in double.
template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
    double s = 0.0;
    for (auto* p : params)
        if (p->trainable) s += p->grad.template cast<double>().squaredNorm();
    return std::sqrt(s);
}

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping. Gradients already within the bound are untouched.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max_norm must be > 0");
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        // The small margin keeps the clipped norm at or below the bound after rounding.
        const T scale = static_cast<T>(max_norm / norm * (1.0 - 1e-6));
        for (auto* p : params)
            if (p->trainable) p->grad *= scale;
    }
    return norm;
}

struct Schedule {
    double lr_max = 1e-4;
    double lr_min = 1e-5;
    double warmup_epochs = 1.0;
    int epochs = 20;
};

/// Linear ramp from 0 to lr_max over the warmup steps, then cosine decay to
/// lr_min at the final step.
double cosine_lr(std::int64_t step, const Schedule& s, std::int64_t steps_per_epoch);

}  // namespace nova::optim

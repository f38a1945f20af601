#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace nova {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatrixD = Matrix<double>;
using MatrixF = Matrix<float>;

/// A named tensor with its accumulated gradient. Shapes beyond two dimensions
/// are flattened into rows; `dims` keeps the logical shape for serialization.
template <typename T>
struct Parameter {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols, bool train = true)
        : name(std::move(n)),
          value(Matrix<T>::Zero(rows, cols)),
          grad(Matrix<T>::Zero(rows, cols)),
          trainable(train) {}

    void zero_grad() { grad.setZero(); }
    Eigen::Index size() const { return value.size(); }
};

template <typename To, typename From>
Matrix<To> cast_matrix(const Matrix<From>& m) {
    return m.template cast<To>();
}

}  // namespace nova

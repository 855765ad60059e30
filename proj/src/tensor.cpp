// SPDX-License-Identifier: Apache-2.0
#include "layerlab/tensor.hpp"

#include <cmath>
#include <sstream>

#include "layerlab/common.hpp"

namespace layerlab {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw NumericError("tensor shape must have rank >= 1");
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw NumericError("tensor extents must be positive");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw NumericError("tensor data length does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

int Tensor::rows() const {
    if (rank() != 2) throw NumericError("rows(): tensor is not rank 2");
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw NumericError("cols(): tensor is not rank 2");
    return shape[1];
}

double Tensor::item() const {
    if (!is_scalar()) throw NumericError("item(): tensor is not scalar");
    return data[0];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols() + c];
}

double Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols() + c];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void Tensor::check_finite(const std::string& what) const {
    for (double v : data) {
        if (!std::isfinite(v))
            throw NumericError("non-finite value in " + what);
    }
}

}  // namespace layerlab

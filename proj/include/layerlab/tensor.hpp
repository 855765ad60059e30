// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace layerlab {

// Dense row-major tensor of 64-bit reals. Rank 1 and 2 are what the lab
// actually uses; a scalar is shape {1}. Invariants: extents positive,
// numel == data.size(), and values stay finite across public operations
// (check_finite is called at op boundaries).
class Tensor {
  public:
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(int rows, int cols, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const;
    int cols() const;
    double item() const;  // scalar access, errors on non-scalar

    double& at(int r, int c);
    double at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;

    // Throws NumericError naming `what` if any value is NaN/Inf.
    void check_finite(const std::string& what) const;
};

}  // namespace layerlab

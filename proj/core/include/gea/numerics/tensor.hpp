#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace gea::num {

/// Dense row-major tensor of doubles. Rank is dynamic but everything in this
/// project is rank 1 or 2.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> v);

    std::size_t numel() const { return data.size(); }
    int rows() const;
    int cols() const;

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }

    double item() const;
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

// C = A(MxK) * B(KxN), accumulated in f64.
void mat_mul(const double* a, const double* b, double* c, int m, int k, int n);
// C += A^T(KxM)^T... i.e. C(MxN) = A(KxM)^T * B(KxN).
void mat_mul_at_b(const double* a, const double* b, double* c, int m, int k, int n);
// C(MxK) = A(MxN) * B(KxN)^T.
void mat_mul_a_bt(const double* a, const double* b, double* c, int m, int n, int k);

}  // namespace gea::num

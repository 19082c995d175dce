#include "gea/numerics/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gea::num {

static std::size_t shape_numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int e : s) {
        if (e < 0) throw std::runtime_error("tensor: negative extent");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw std::runtime_error("tensor: shape/data length mismatch (" + shape_str() + " vs " +
                                 std::to_string(data.size()) + " values)");
    }
}

Tensor Tensor::row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
}

int Tensor::rows() const {
    if (shape.size() == 2) return shape[0];
    if (shape.size() == 1) return 1;
    throw std::runtime_error("tensor: rows() on rank-" + std::to_string(shape.size()));
}

int Tensor::cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    throw std::runtime_error("tensor: cols() on rank-" + std::to_string(shape.size()));
}

double Tensor::item() const {
    if (numel() != 1) throw std::runtime_error("tensor: item() on non-scalar " + shape_str());
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void mat_mul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) ci[j] = 0.0;
        const double* ai = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void mat_mul_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i) c[i] = 0.0;
    for (int p = 0; p < k; ++p) {
        const double* ap = a + static_cast<std::size_t>(p) * m;
        const double* bp = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void mat_mul_a_bt(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<std::size_t>(i) * n;
        double* ci = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* bj = b + static_cast<std::size_t>(j) * n;
            double acc = 0.0;
            for (int p = 0; p < n; ++p) acc += ai[p] * bj[p];
            ci[j] = acc;
        }
    }
}

}  // namespace gea::num

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <random>
#include <vector>

#include "stare/types.hpp"

namespace stare {

// Dense row-major 2-D matrix of doubles. Vectors are 1xN rows. All model
// parameters, activations and gradients use this one shape class; summation
// loops are written plainly so accumulation order is fixed and reproducible.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Tensor from(std::initializer_list<std::initializer_list<double>> vals) {
        Tensor t(vals.size(), vals.size() ? vals.begin()->size() : 0);
        std::size_t i = 0;
        for (const auto& row : vals) {
            std::size_t j = 0;
            for (double v : row) t.at(i, j++) = v;
            ++i;
        }
        return t;
    }

    static Tensor row_vector(std::initializer_list<double> vals) {
        Tensor t(1, vals.size());
        std::size_t j = 0;
        for (double v : vals) t.data[j++] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

// Glorot/Xavier uniform init, the convention of the encoder lineage.
inline Tensor xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Tensor t(rows, cols);
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data) v = dist(rng);
    return t;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Tensor out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* or_ = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            double av = ar[k];
            const double* br = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) or_[j] += av * br[j];
        }
    }
    return out;
}

}  // namespace stare

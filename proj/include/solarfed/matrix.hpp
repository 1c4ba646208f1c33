#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace solarfed {

// Row-major dense matrix of doubles. Rows index the slow axis.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

struct BoolMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> v;

    BoolMatrix() = default;
    BoolMatrix(int r, int c, bool fill = false)
        : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill ? 1 : 0) {}

    std::uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t count() const {
        size_t n = 0;
        for (auto b : v) n += b ? 1 : 0;
        return n;
    }
};

}  // namespace solarfed

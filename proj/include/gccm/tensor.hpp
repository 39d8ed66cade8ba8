#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace gccm {

// Dense row-major matrix of doubles. Shape is fixed at construction; this is
// the value type behind every matrix in the artifact (features, adjacency
// operators, labels, weights, latents).
class Tensor {
  public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (!std::isfinite(fill)) throw std::invalid_argument("Tensor: non-finite fill value");
    }

    // External data entry point; rejects NaN/Inf.
    static Tensor from_values(std::size_t rows, std::size_t cols, std::vector<double> values) {
        if (values.size() != rows * cols)
            throw std::invalid_argument("Tensor::from_values: " + std::to_string(values.size()) +
                                        " values for shape " + shape_str(rows, cols));
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("Tensor::from_values: non-finite entry");
        Tensor t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.data_ = std::move(values);
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        if (r == 0) throw std::invalid_argument("Tensor::from_rows: empty");
        const std::size_t c = rows.begin()->size();
        std::vector<double> values;
        values.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw std::invalid_argument("Tensor::from_rows: ragged rows");
            for (double v : row) values.push_back(v);
        }
        return from_values(r, c, std::move(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const double& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator[](std::size_t k) { return data_[k]; }
    const double& operator[](std::size_t k) const { return data_[k]; }

    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    std::string shape() const { return shape_str(rows_, cols_); }

    static std::string shape_str(std::size_t r, std::size_t c) {
        return std::to_string(r) + "x" + std::to_string(c);
    }

    Tensor row(std::size_t i) const {
        Tensor r(1, cols_);
        for (std::size_t j = 0; j < cols_; ++j) r(0, j) = (*this)(i, j);
        return r;
    }

    void set_row(std::size_t i, const Tensor& r) {
        if (r.rows() != 1 || r.cols() != cols_)
            throw std::invalid_argument("Tensor::set_row: shape " + r.shape() + " into " + shape());
        for (std::size_t j = 0; j < cols_; ++j) (*this)(i, j) = r(0, j);
    }

    std::size_t argmax_row(std::size_t i) const {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols_; ++j)
            if ((*this)(i, j) > (*this)(i, best)) best = j;
        return best;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions mismatch (" + a.shape() + " vs " + b.shape() + ")");
    Tensor c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add: shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
    Tensor c = a;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += b[k];
    return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("sub: shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
    Tensor c = a;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] -= b[k];
    return c;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= c;
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("hadamard: shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
    Tensor c = a;
    for (std::size_t k = 0; k < c.size(); ++k) c[k] *= b[k];
    return c;
}

inline double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * a[k];
    return std::sqrt(s);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: shape mismatch (" + a.shape() + " vs " + b.shape() + ")");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

// Exact elementwise equality, used by determinism and round-trip checks.
inline bool same_values(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
        if (a[k] != b[k]) return false;
    return true;
}

// n copies of a 1xC row stacked into an nxC matrix.
inline Tensor tile_rows(const Tensor& row, std::size_t n) {
    if (row.rows() != 1) throw std::invalid_argument("tile_rows: expected 1xC row, got " + row.shape());
    Tensor t(n, row.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < row.cols(); ++j) t(i, j) = row(0, j);
    return t;
}

}  // namespace gccm

#include "kvevict/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kvevict {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
    Matrix m;
    for (const auto& r : rows) m.append_row(r);
    return m;
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && data_.empty()) {
        cols_ = values.size();
    } else if (values.size() != cols_) {
        throw std::invalid_argument("append_row: row of length " + std::to_string(values.size()) +
                                    " into matrix " + shape_string());
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

void Matrix::keep_rows(std::span<const std::size_t> indices) {
    std::vector<double> kept;
    kept.reserve(indices.size() * cols_);
    for (std::size_t idx : indices) {
        if (idx >= rows_) throw std::out_of_range("keep_rows: index out of range");
        auto r = row(idx);
        kept.insert(kept.end(), r.begin(), r.end());
    }
    data_ = std::move(kept);
    rows_ = indices.size();
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_string() + " * " +
                                    b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
    if (m.cols() != x.size()) {
        throw std::invalid_argument("matvec shape mismatch: " + m.shape_string() + " * " +
                                    std::to_string(x.size()));
    }
    Vector out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), x);
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

double l2_norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

Vector add(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("add: length mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector subtract(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("subtract: length mismatch");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector scaled(std::span<const double> v, double s) {
    Vector out(v.begin(), v.end());
    for (double& x : out) x *= s;
    return out;
}

Vector weighted_row_sum(std::span<const double> weights, const Matrix& rows) {
    if (weights.size() != rows.rows()) {
        throw std::invalid_argument("weighted_row_sum: " + std::to_string(weights.size()) +
                                    " weights for matrix " + rows.shape_string());
    }
    Vector out(rows.cols(), 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto r = rows.row(i);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += weights[i] * r[c];
    }
    return out;
}

Vector column_mean(const Matrix& rows) {
    Vector out(rows.cols(), 0.0);
    if (rows.rows() == 0) return out;
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto r = rows.row(i);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += r[c];
    }
    const double inv = 1.0 / static_cast<double>(rows.rows());
    for (double& x : out) x *= inv;
    return out;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace kvevict

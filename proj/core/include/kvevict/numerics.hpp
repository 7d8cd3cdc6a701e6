#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace kvevict {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Rows can be appended and removed so the
// same type backs both projection weights and growing key/value caches.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(const std::vector<Vector>& rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    // Appends one row; on an empty 0x0 matrix this fixes the column count.
    void append_row(std::span<const double> values);
    // Keeps only the listed rows, in the given order.
    void keep_rows(std::span<const std::size_t> indices);

    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Max-subtracted softmax. Throws std::invalid_argument("empty logits") on
// empty input.
Vector softmax(std::span<const double> logits);

// a * b with a fixed accumulation order (k innermost, ascending).
Matrix matmul(const Matrix& a, const Matrix& b);

// m * x for a column vector x.
Vector matvec(const Matrix& m, std::span<const double> x);

Matrix transpose(const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
double squared_norm(std::span<const double> v);

Vector add(std::span<const double> a, std::span<const double> b);
Vector subtract(std::span<const double> a, std::span<const double> b);
Vector scaled(std::span<const double> v, double s);

// Sum_i weights[i] * rows(i) over a matrix with weights.size() rows.
Vector weighted_row_sum(std::span<const double> weights, const Matrix& rows);
Vector column_mean(const Matrix& rows);

bool all_finite(std::span<const double> v);

}  // namespace kvevict

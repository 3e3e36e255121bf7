#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace oacl {

/// Dense row-major matrix of doubles. Vectors are stored as 1×n rows.
class Matrix2D {
public:
    Matrix2D() = default;
    Matrix2D(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix2D(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix2D row_vector(std::span<const double> values);
    static Matrix2D column_vector(std::span<const double> values);
    static Matrix2D identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> column(std::size_t c) const;

    void fill(double v);
    bool all_finite() const;
    std::string shape_string() const;

    bool operator==(const Matrix2D& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b);
/// a · bᵀ
Matrix2D matmul_nt(const Matrix2D& a, const Matrix2D& b);
/// aᵀ · b
Matrix2D matmul_tn(const Matrix2D& a, const Matrix2D& b);
Matrix2D transpose(const Matrix2D& a);

Matrix2D add(const Matrix2D& a, const Matrix2D& b);
Matrix2D sub(const Matrix2D& a, const Matrix2D& b);
Matrix2D scale(const Matrix2D& a, double s);
Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b);
void add_inplace(Matrix2D& dst, const Matrix2D& src);
void axpy_inplace(Matrix2D& dst, double alpha, const Matrix2D& src);

double sum(const Matrix2D& a);
double frobenius_sq(const Matrix2D& a);
double frobenius(const Matrix2D& a);
double max_abs_diff(const Matrix2D& a, const Matrix2D& b);

/// Throws DimensionError unless both shapes are equal.
void require_same_shape(const Matrix2D& a, const Matrix2D& b, const char* op);

} // namespace oacl

#include "oacl/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "oacl/errors.hpp"

namespace oacl {

Matrix2D::Matrix2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix2D::Matrix2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("Matrix2D: data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix2D::Matrix2D(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("Matrix2D: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix2D Matrix2D::row_vector(std::span<const double> values) {
    return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Matrix2D Matrix2D::column_vector(std::span<const double> values) {
    return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

Matrix2D Matrix2D::identity(std::size_t n) {
    Matrix2D m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix2D::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix2D::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix2D::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix2D& a, const Matrix2D& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

Matrix2D matmul(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
    }
    Matrix2D out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix2D matmul_nt(const Matrix2D& a, const Matrix2D& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: cannot multiply " + a.shape_string() + " by transpose of " +
                             b.shape_string());
    }
    Matrix2D out(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix2D matmul_tn(const Matrix2D& a, const Matrix2D& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: cannot multiply transpose of " + a.shape_string() + " by " +
                             b.shape_string());
    }
    Matrix2D out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* arow = a.row(k).data();
        const double* brow = b.row(k).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* o = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += aki * brow[j];
        }
    }
    return out;
}

Matrix2D transpose(const Matrix2D& a) {
    Matrix2D out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix2D add(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "add");
    Matrix2D out = a;
    add_inplace(out, b);
    return out;
}

Matrix2D sub(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "sub");
    Matrix2D out = a;
    axpy_inplace(out, -1.0, b);
    return out;
}

Matrix2D scale(const Matrix2D& a, double s) {
    Matrix2D out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Matrix2D hadamard(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "hadamard");
    Matrix2D out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

void add_inplace(Matrix2D& dst, const Matrix2D& src) {
    require_same_shape(dst, src, "add_inplace");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void axpy_inplace(Matrix2D& dst, double alpha, const Matrix2D& src) {
    require_same_shape(dst, src, "axpy_inplace");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

double sum(const Matrix2D& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

double frobenius_sq(const Matrix2D& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

double frobenius(const Matrix2D& a) { return std::sqrt(frobenius_sq(a)); }

double max_abs_diff(const Matrix2D& a, const Matrix2D& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace oacl

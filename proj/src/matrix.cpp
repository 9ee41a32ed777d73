#include "afalab/matrix.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace afalab {

namespace {

using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstEigenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstEigenMap map(const Matrix& m) { return {m.data().data(), m.rows(), m.cols()}; }
EigenMap map(Matrix& m) { return {m.data().data(), m.rows(), m.cols()}; }

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows <= 0 || cols < 0) throw std::invalid_argument("Matrix: dimensions must be positive, got " + shape_str());
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows <= 0 || cols < 0) throw std::invalid_argument("Matrix: dimensions must be positive, got " + shape_str());
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) + " does not match shape " + shape_str());
}

Matrix Matrix::constant(int rows, int cols, double v) {
    Matrix m(rows, cols);
    m.fill(v);
    return m;
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix Matrix::row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Matrix(1, n, std::move(v));
}

Matrix Matrix::column(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Matrix(n, 1, std::move(v));
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    Matrix c(a.rows(), b.cols());
    map(c).noalias() = map(a) * map(b);
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    map(t) = map(a).transpose();
    return t;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
        auto in = x.row_span(r);
        auto out = y.row_span(r);
        double mx = in[0];
        for (double v : in) mx = std::max(mx, v);
        double total = 0.0;
        for (int c = 0; c < x.cols(); ++c) {
            out[c] = std::exp(in[c] - mx);
            total += out[c];
        }
        for (int c = 0; c < x.cols(); ++c) out[c] /= total;
    }
    return y;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
    Matrix c(a.rows(), a.cols() + b.cols());
    for (int r = 0; r < a.rows(); ++r) {
        auto out = c.row_span(r);
        auto ra = a.row_span(r);
        auto rb = b.row_span(r);
        std::copy(ra.begin(), ra.end(), out.begin());
        std::copy(rb.begin(), rb.end(), out.begin() + a.cols());
    }
    return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace afalab

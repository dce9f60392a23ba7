#pragma once

#include <cstddef>
#include <vector>

namespace abcsmc {

using Vector = std::vector<double>;

// Dense row-major matrix. Parameter/summary dimensions in this project are
// tiny (<= 10), so everything below is plain loops.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    Vector row(std::size_t i) const {
        return Vector(data.begin() + static_cast<long>(i * cols),
                      data.begin() + static_cast<long>((i + 1) * cols));
    }
    void set_row(std::size_t i, const Vector& v) {
        for (std::size_t j = 0; j < cols; ++j) (*this)(i, j) = v[j];
    }
};

// Lower-triangular Cholesky factor; throws Error("degenerate-covariance") if
// the matrix is not numerically positive definite.
Matrix cholesky(const Matrix& a);

// y = L z for lower-triangular L.
Vector lower_times(const Matrix& chol_l, const Vector& z);

// Solve L x = b.
Vector solve_lower(const Matrix& chol_l, const Vector& b);

double dot(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);

double log_sum_exp(const Vector& xs);

// log N(x; mean, Sigma) with Sigma given by its Cholesky factor.
double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& chol_l);

double normal_logpdf(double x, double mean, double sd);

// Sample mean and covariance (M-1 denominator) of the rows of x.
Vector column_mean(const Matrix& x);
Matrix sample_covariance(const Matrix& x, const Vector& mean);

// Percentile with linear interpolation between order statistics (p in [0,100]).
double percentile(Vector sorted_values, double p);

}  // namespace abcsmc

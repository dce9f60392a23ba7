#include "abcsmc/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "abcsmc/error.hpp"

namespace abcsmc {

Matrix cholesky(const Matrix& a) {
    const std::size_t n = a.rows;
    Matrix l(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s))
                    throw Error("degenerate-covariance",
                                "matrix not positive definite in cholesky");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

Vector lower_times(const Matrix& l, const Vector& z) {
    const std::size_t n = l.rows;
    Vector y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += l(i, j) * z[j];
        y[i] = s;
    }
    return y;
}

Vector solve_lower(const Matrix& l, const Vector& b) {
    const std::size_t n = l.rows;
    Vector x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t j = 0; j < i; ++j) s -= l(i, j) * x[j];
        x[i] = s / l(i, i);
    }
    return x;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Vector sub(const Vector& a, const Vector& b) {
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

double log_sum_exp(const Vector& xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& l) {
    const std::size_t d = x.size();
    Vector z = solve_lower(l, sub(x, mean));
    double log_det_half = 0.0;
    for (std::size_t i = 0; i < d; ++i) log_det_half += std::log(l(i, i));
    return -0.5 * static_cast<double>(d) * std::log(2.0 * M_PI) - log_det_half -
           0.5 * dot(z, z);
}

double normal_logpdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * std::log(2.0 * M_PI) - std::log(sd) - 0.5 * z * z;
}

Vector column_mean(const Matrix& x) {
    Vector m(x.cols, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) m[j] += x(i, j);
    for (double& v : m) v /= static_cast<double>(x.rows);
    return m;
}

Matrix sample_covariance(const Matrix& x, const Vector& mean) {
    const std::size_t n = x.rows, d = x.cols;
    Matrix c(d, d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b)
                c(a, b) += (x(i, a) - mean[a]) * (x(i, b) - mean[b]);
    const double denom = static_cast<double>(n > 1 ? n - 1 : 1);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            c(a, b) /= denom;
            c(b, a) = c(a, b);
        }
    return c;
}

double percentile(Vector v, double p) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 1) return v[0];
    const double h = p / 100.0 * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(h);
    if (i + 1 >= n) return v[n - 1];
    return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

}  // namespace abcsmc

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "common.hpp"

namespace warpfield {

// Dense 2-D row-major double tensor. Scalars are [1,1], vectors [1,n] or [n,1].
// Rank above 2 is never needed by the field networks.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols) : rows_(rows), cols_(cols), v_(std::size_t(rows) * cols, 0.0) {}

    static Tensor full(int rows, int cols, double value) {
        Tensor t(rows, cols);
        std::fill(t.v_.begin(), t.v_.end(), value);
        return t;
    }
    static Tensor scalar(double value) { return full(1, 1, value); }
    static Tensor from_rows(int rows, int cols, std::initializer_list<double> values) {
        Tensor t(rows, cols);
        std::copy(values.begin(), values.end(), t.v_.begin());
        return t;
    }
    static Tensor from_vector(int rows, int cols, const std::vector<double>& values) {
        Tensor t(rows, cols);
        std::copy(values.begin(), values.end(), t.v_.begin());
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(int r, int c) { return v_[std::size_t(r) * cols_ + c]; }
    double at(int r, int c) const { return v_[std::size_t(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double item() const {
        if (size() != 1) throw NumericError("item() on non-scalar tensor");
        return v_[0];
    }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstEigenMap =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    EigenMap map() { return EigenMap(v_.data(), rows_, cols_); }
    ConstEigenMap map() const { return ConstEigenMap(v_.data(), rows_, cols_); }

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

namespace detail {
inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw NumericError(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()) + "]");
}
} // namespace detail

template <class F> Tensor map_unary(const Tensor& a, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}
template <class F> Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
    detail::check_same_shape(a, b, "map_binary");
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    return map_binary(a, b, [](double x, double y) { return x + y; });
}
inline Tensor operator-(const Tensor& a, const Tensor& b) {
    return map_binary(a, b, [](double x, double y) { return x - y; });
}
inline Tensor operator*(const Tensor& a, const Tensor& b) {
    return map_binary(a, b, [](double x, double y) { return x * y; });
}
inline Tensor operator/(const Tensor& a, const Tensor& b) {
    return map_binary(a, b, [](double x, double y) { return x / y; });
}
inline Tensor operator*(const Tensor& a, double s) {
    return map_unary(a, [s](double x) { return x * s; });
}
inline Tensor operator*(double s, const Tensor& a) { return a * s; }
inline Tensor operator+(const Tensor& a, double s) {
    return map_unary(a, [s](double x) { return x + s; });
}
inline Tensor operator-(const Tensor& a) {
    return map_unary(a, [](double x) { return -x; });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw NumericError("matmul: inner dimensions disagree (" + std::to_string(a.cols()) + " vs " +
                           std::to_string(b.rows()) + ")");
    Tensor out(a.rows(), b.cols());
    out.map().noalias() = a.map() * b.map();
    return out;
}

inline Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    out.map() = a.map().transpose();
    return out;
}

inline double sum(const Tensor& a) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}
inline double mean(const Tensor& a) { return sum(a) / double(a.size()); }

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw NumericError("concat_cols: row counts disagree");
    Tensor out(a.rows(), a.cols() + b.cols());
    for (int r = 0; r < a.rows(); ++r) {
        for (int c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c);
        for (int c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.at(r, c);
    }
    return out;
}
inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw NumericError("concat_rows: column counts disagree");
    Tensor out(a.rows() + b.rows(), a.cols());
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}
inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw NumericError("slice_cols: bad range");
    Tensor out(a.rows(), c1 - c0);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = a.at(r, c);
    return out;
}
inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw NumericError("slice_rows: bad range");
    Tensor out(r1 - r0, a.cols());
    std::copy(a.data() + std::size_t(r0) * a.cols(), a.data() + std::size_t(r1) * a.cols(), out.data());
    return out;
}
inline Tensor reshape(const Tensor& a, int rows, int cols) {
    if (std::size_t(rows) * cols != a.size()) throw NumericError("reshape: size mismatch");
    Tensor out(rows, cols);
    std::copy(a.data(), a.data() + a.size(), out.data());
    return out;
}
// [n,1] -> [n,c] or [1,n] -> [r,n]
inline Tensor broadcast_cols(const Tensor& a, int cols) {
    if (a.cols() != 1) throw NumericError("broadcast_cols: source must have one column");
    Tensor out(a.rows(), cols);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = a.at(r, 0);
    return out;
}
inline Tensor broadcast_rows(const Tensor& a, int rows) {
    if (a.rows() != 1) throw NumericError("broadcast_rows: source must have one row");
    Tensor out(rows, a.cols());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(0, c);
    return out;
}
inline Tensor row_sums(const Tensor& a) {
    Tensor out(a.rows(), 1);
    for (int r = 0; r < a.rows(); ++r) {
        double s = 0;
        for (int c = 0; c < a.cols(); ++c) s += a.at(r, c);
        out.at(r, 0) = s;
    }
    return out;
}

inline Tensor relu(const Tensor& a) {
    return map_unary(a, [](double x) { return x > 0 ? x : 0.0; });
}
inline Tensor tanh_t(const Tensor& a) {
    return map_unary(a, [](double x) { return std::tanh(x); });
}
inline double softplus_s(double x) {
    return std::log1p(std::exp(-std::abs(x))) + (x > 0 ? x : 0.0);
}
inline double logistic_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline Tensor softplus(const Tensor& a) {
    return map_unary(a, [](double x) { return softplus_s(x); });
}
inline Tensor sigmoid(const Tensor& a) {
    return map_unary(a, [](double x) { return logistic_s(x); });
}
inline Tensor exp_t(const Tensor& a) {
    return map_unary(a, [](double x) { return std::exp(x); });
}
inline Tensor sqrt_t(const Tensor& a) {
    return map_unary(a, [](double x) { return std::sqrt(x); });
}
inline Tensor abs_t(const Tensor& a) {
    return map_unary(a, [](double x) { return std::abs(x); });
}

inline Tensor random_uniform(int rows, int cols, double lo, double hi, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * rng.uniform();
    return t;
}
inline Tensor random_normal(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "max_abs_diff");
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i] || std::signbit(a[i]) != std::signbit(b[i])) return false;
    return true;
}

} // namespace warpfield

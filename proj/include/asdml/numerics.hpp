#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asdml/core.hpp"

namespace asdml {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                                  " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw InvalidArgument("Matrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    /// Rows selected by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    Matrix select_cols(std::span<const std::size_t> idx) const {
        Matrix out(rows_, idx.size());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t j = 0; j < idx.size(); ++j) out(r, j) = (*this)(r, idx[j]);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix mat_mul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw InvalidArgument("mat_mul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " * " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct SymEigen {
    std::vector<double> values;  ///< ascending
    Matrix vectors;              ///< column j pairs with values[j]
};

namespace detail {

inline void require_symmetric(const Matrix& a, const char* who) {
    if (a.rows() != a.cols()) throw InvalidArgument(std::string(who) + ": matrix is not square");
    double scale = 1.0;
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-9 * scale)
                throw InvalidArgument(std::string(who) + ": matrix is not symmetric");
}

inline void sort_eigenpairs(SymEigen& eig) {
    const std::size_t n = eig.values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return eig.values[x] < eig.values[y]; });
    SymEigen sorted{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        sorted.values[j] = eig.values[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted.vectors(i, j) = eig.vectors(i, order[j]);
    }
    eig = std::move(sorted);
}

}  // namespace detail

/// Symmetric eigendecomposition by Householder tridiagonalisation followed by
/// implicit QL iterations. Eigenvalues are returned in ascending order.
inline SymEigen sym_eig(const Matrix& a, int max_iter_per_value = 60) {
    detail::require_symmetric(a, "sym_eig");
    const std::size_t n = a.rows();
    SymEigen out{std::vector<double>(n), a};
    if (n == 0) return out;
    Matrix& v = out.vectors;
    std::vector<double>& d = out.values;
    std::vector<double> e(n, 0.0);

    // Householder reduction to tridiagonal form.
    for (std::size_t j = 0; j < n; ++j) d[j] = v(n - 1, j);
    for (std::size_t i = n - 1; i > 0; --i) {
        double scale = 0.0, h = 0.0;
        for (std::size_t k = 0; k < i; ++k) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (std::size_t j = 0; j < i; ++j) {
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
                v(j, i) = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < i; ++k) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for (std::size_t j = 0; j < i; ++j) e[j] = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                v(j, i) = f;
                g = e[j] + v(j, j) * f;
                for (std::size_t k = j + 1; k <= i - 1; ++k) {
                    g += v(k, j) * d[k];
                    e[k] += v(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (std::size_t j = 0; j < i; ++j) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            const double hh = f / (h + h);
            for (std::size_t j = 0; j < i; ++j) e[j] -= hh * d[j];
            for (std::size_t j = 0; j < i; ++j) {
                f = d[j];
                g = e[j];
                for (std::size_t k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
                d[j] = v(i - 1, j);
                v(i, j) = 0.0;
            }
        }
        d[i] = h;
    }
    // Accumulate transformations.
    for (std::size_t i = 0; i + 1 < n; ++i) {
        v(n - 1, i) = v(i, i);
        v(i, i) = 1.0;
        const double h = d[i + 1];
        if (h != 0.0) {
            for (std::size_t k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
            for (std::size_t j = 0; j <= i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
                for (std::size_t k = 0; k <= i; ++k) v(k, j) -= g * d[k];
            }
        }
        for (std::size_t k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        d[j] = v(n - 1, j);
        v(n - 1, j) = 0.0;
    }
    v(n - 1, n - 1) = 1.0;
    e[0] = 0.0;

    // Implicit QL on the tridiagonal (d, e).
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    double f = 0.0, tst1 = 0.0;
    const double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > max_iter_per_value)
                    throw NumericError("sym_eig: QL iteration did not converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;
                p = d[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    const std::size_t i = ii;
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for (std::size_t k = 0; k < n; ++k) {
                        h = v(k, i + 1);
                        v(k, i + 1) = s * v(k, i) + c * h;
                        v(k, i) = c * v(k, i) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] += f;
        e[l] = 0.0;
    }
    detail::sort_eigenpairs(out);
    return out;
}

/// Cyclic Jacobi rotations. Slower than sym_eig but structurally independent,
/// which makes it a useful cross-check.
inline SymEigen sym_eig_jacobi(const Matrix& a, int max_sweeps = 100) {
    detail::require_symmetric(a, "sym_eig_jacobi");
    const std::size_t n = a.rows();
    Matrix m = a;
    Matrix v = Matrix::identity(n);
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += m(i, j) * m(i, j);
        return s;
    };
    double total = 0.0;
    for (double x : m.data()) total += x * x;
    int sweep = 0;
    while (off_norm() > 1e-30 * std::max(total, 1e-300)) {
        if (++sweep > max_sweeps) throw NumericError("sym_eig_jacobi: no convergence");
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymEigen out{std::vector<double>(n), std::move(v)};
    for (std::size_t i = 0; i < n; ++i) out.values[i] = m(i, i);
    detail::sort_eigenpairs(out);
    return out;
}

/// Lower-triangular L with L Lᵀ = A. Throws NumericError when A is not
/// positive definite; callers regularise the diagonal and retry.
inline Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("cholesky: matrix is not square");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0))
            throw NumericError("cholesky: matrix is not positive definite (pivot " +
                               std::to_string(j) + ")");
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

/// Counter-based generator: output k is splitmix64(seed + k * golden). The
/// stream is fully determined by (seed, counter), so it is reproducible across
/// platforms and trivially splittable.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept { return mix(seed_ + (++counter_) * kGolden); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased integer in [0, n). Requires n >= 1.
    std::uint64_t uniform_int(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Independent child stream keyed by `stream`; does not advance this one.
    SeededRng split(std::uint64_t stream) const noexcept {
        return SeededRng(mix(seed_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
    }

    static std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, SeededRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(v[i - 1], v[j]);
    }
}

/// Random permutation of 0..n-1 (Fisher-Yates).
inline std::vector<std::size_t> rng_shuffle(SeededRng& rng, std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle_in_place(p, rng);
    return p;
}

inline double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Median of a copy of `v` (average of the two middle values for even sizes).
inline double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of empty range");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace asdml

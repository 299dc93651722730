#include "vicc/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vicc/error.hpp"

namespace vicc {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                              " does not match shape " + std::to_string(rows) + "x" +
                              std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw InvalidArgument("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) throw InvalidArgument("set_col: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

std::string Matrix::shape() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) {
        throw InvalidArgument("matrix add: shape mismatch " + shape() + " vs " + other.shape());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) {
        throw InvalidArgument("matrix sub: shape mismatch " + shape() + " vs " + other.shape());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw InvalidArgument("matmul: inner dimensions differ, " + a.shape() + " * " + b.shape());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto src = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += aik * src[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw InvalidArgument("matmul_tn: row counts differ, " + a.shape() + "^T * " + b.shape());
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto arow = a.row(r);
        auto brow = b.row(r);
        for (std::size_t i = 0; i < arow.size(); ++i) {
            const double ari = arow[i];
            if (ari == 0.0) continue;
            auto dst = out.row(i);
            for (std::size_t j = 0; j < brow.size(); ++j) dst[j] += ari * brow[j];
        }
    }
    require_finite(out, "matmul_tn");
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw InvalidArgument("matmul_nt: column counts differ, " + a.shape() + " * " + b.shape() +
                              "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < arow.size(); ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    require_finite(out, "matmul_nt");
    return out;
}

namespace {

void check_temperature(double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidArgument("softmax: temperature must be positive, got " +
                              std::to_string(temperature));
    }
}

// Per-column max of m / t and log of the shifted partition sum.
void column_log_partition(const Matrix& m, double t, std::vector<double>& col_max,
                          std::vector<double>& log_sum) {
    col_max.assign(m.cols(), -INFINITY);
    log_sum.assign(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) col_max[c] = std::max(col_max[c], m(r, c) / t);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) log_sum[c] += std::exp(m(r, c) / t - col_max[c]);
    for (double& s : log_sum) s = std::log(s);
}

}  // namespace

Matrix softmax_cols(const Matrix& m, double temperature) {
    check_temperature(temperature);
    require_finite(m, "softmax_cols input");
    std::vector<double> col_max, log_sum;
    column_log_partition(m, temperature, col_max, log_sum);
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(r, c) = std::exp(m(r, c) / temperature - col_max[c] - log_sum[c]);
    return out;
}

Matrix log_softmax_cols(const Matrix& m, double temperature) {
    check_temperature(temperature);
    require_finite(m, "log_softmax_cols input");
    std::vector<double> col_max, log_sum;
    column_log_partition(m, temperature, col_max, log_sum);
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            out(r, c) = m(r, c) / temperature - col_max[c] - log_sum[c];
    return out;
}

std::vector<double> col_norms(const Matrix& m) {
    std::vector<double> sq(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) sq[c] += row[c] * row[c];
    }
    for (double& v : sq) v = std::sqrt(v);
    return sq;
}

Matrix l2_normalize_cols(const Matrix& m) {
    require_finite(m, "l2_normalize_cols input");
    const auto norms = col_norms(m);
    for (std::size_t c = 0; c < norms.size(); ++c) {
        if (norms[c] == 0.0) {
            throw InvalidArgument("l2_normalize_cols: column " + std::to_string(c) +
                                  " is the zero vector");
        }
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c) / norms[c];
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.empty() && a.rows() == 0) return b;
    if (b.empty() && b.rows() == 0) return a;
    if (a.rows() != b.rows()) {
        throw InvalidArgument("hcat: row counts differ, " + a.shape() + " | " + b.shape());
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<long>(a.cols()));
    }
    return out;
}

Matrix col_range(const Matrix& m, std::size_t begin, std::size_t count) {
    if (begin + count > m.cols()) {
        throw InvalidArgument("col_range: [" + std::to_string(begin) + ", " +
                              std::to_string(begin + count) + ") out of " + m.shape());
    }
    Matrix out(m.rows(), count);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = m(r, begin + c);
    return out;
}

Matrix select_cols(const Matrix& m, std::span<const std::size_t> indices) {
    Matrix out(m.rows(), indices.size());
    for (std::size_t c = 0; c < indices.size(); ++c) {
        if (indices[c] >= m.cols()) throw InvalidArgument("select_cols: index out of range");
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto src = m.row(r);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < indices.size(); ++c) dst[c] = src[indices[c]];
    }
    return out;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const char* what) {
    if (!all_finite(m)) throw InvalidArgument(std::string(what) + ": non-finite entry");
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidArgument("frobenius_dot: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.values()) best = std::max(best, std::abs(v));
    return best;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {
constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t state = seed;
    for (auto& s : s_) s = splitmix64(state);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    // Fisher-Yates
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(i)]);
    return p;
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double sd) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = sd * normal();
    return m;
}

Rng Rng::fork(std::uint64_t stream) const {
    std::uint64_t state = seed_ ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return Rng(splitmix64(state));
}

}  // namespace vicc

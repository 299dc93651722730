#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vicc {

// Dense row-major matrix of doubles. Samples are stored as columns, so a
// d x B feature matrix holds B embeddings of dimension d.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double> col(std::size_t c) const;
    void set_col(std::size_t c, std::span<const double> values);

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    const std::vector<double>& storage() const { return data_; }

    std::string shape() const;
    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

Matrix transpose(const Matrix& m);

// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Column-wise softmax of m / temperature, computed with max subtraction.
Matrix softmax_cols(const Matrix& m, double temperature);
Matrix log_softmax_cols(const Matrix& m, double temperature);

// Scales every column to unit Euclidean norm. Throws on a zero column.
Matrix l2_normalize_cols(const Matrix& m);
std::vector<double> col_norms(const Matrix& m);

// [a | b] along columns.
Matrix hcat(const Matrix& a, const Matrix& b);
Matrix col_range(const Matrix& m, std::size_t begin, std::size_t count);
Matrix select_cols(const Matrix& m, std::span<const std::size_t> indices);

bool all_finite(const Matrix& m);
void require_finite(const Matrix& m, const char* what);

double frobenius_dot(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);

// Deterministic generator: xoshiro256** (Blackman and Vigna) seeded through
// splitmix64. Both use their published constants, so a seed reproduces the
// same stream of integers on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Standard normal via the Marsaglia polar method.
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    // Uniform integer in [0, n), rejection sampled.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    std::vector<std::size_t> permutation(std::size_t n);
    Matrix normal_matrix(std::size_t rows, std::size_t cols, double sd = 1.0);

    // Independent generator derived from this seed and a stream id; does not
    // advance this generator.
    Rng fork(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace vicc

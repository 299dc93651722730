#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "vicc/checkpoint.hpp"
#include "vicc/error.hpp"
#include "vicc/gradcheck.hpp"
#include "vicc/model.hpp"

using namespace vicc;

namespace {
// Per-neuron forward pass written as scalar loops.
Matrix naive_forward(const EncoderParams& enc, const Matrix& x) {
    Matrix h = x;
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const auto& L = enc.layers[l];
        Matrix next(L.weight.rows(), h.cols());
        for (std::size_t b = 0; b < h.cols(); ++b)
            for (std::size_t o = 0; o < L.weight.rows(); ++o) {
                long double s = L.bias[o];
                for (std::size_t i = 0; i < L.weight.cols(); ++i) s += static_cast<long double>(L.weight(o, i)) * h(i, b);
                const bool last = l + 1 == enc.layers.size();
                next(o, b) = static_cast<double>(last ? s : std::max<long double>(s, 0.0L));
            }
        h = next;
    }
    return oracle::normalize_cols(h);
}
}  // namespace

TEST_SUITE("model") {

TEST_CASE("identity encoder returns unit input unchanged") {
    Rng rng(1);
    const Matrix x = l2_normalize_cols(rng.normal_matrix(5, 4));
    const auto f = forward(EncoderParams::identity(5), x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(f.z.values()[i] - x.values()[i]) <= 1e-15);
}

TEST_CASE("forward matches the per-neuron oracle and is normalized") {
    Rng rng(2);
    auto enc = EncoderParams::init(9, {7, 6}, 4, rng);
    for (auto& L : enc.layers)
        for (double& b : L.bias) b = 0.1 * rng.normal();
    CHECK(enc.input_dim() == 9);
    CHECK(enc.output_dim() == 4);
    const Matrix x = rng.normal_matrix(9, 11);
    const auto f = forward(enc, x);
    const Matrix ref = naive_forward(enc, x);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(f.z.values()[i] - ref.values()[i]) <= 1e-12);
    for (double n : oracle::col_norms(f.z)) CHECK(std::abs(n - 1.0) <= 1e-10);
    CHECK(forward(enc, x).z == f.z);
    CHECK_THROWS_AS(forward(enc, rng.normal_matrix(8, 2)), InvalidArgument);
}

TEST_CASE("backward removes the radial component") {
    Rng rng(3);
    const auto enc = EncoderParams::identity(6);
    const Matrix x = rng.normal_matrix(6, 5, 2.0);
    const auto f = forward(enc, x);
    const auto g = backward(enc, f.tape, rng.normal_matrix(6, 5));
    for (std::size_t b = 0; b < 5; ++b) {
        double dot = 0.0;
        for (std::size_t r = 0; r < 6; ++r) dot += f.z(r, b) * g.input(r, b);
        CHECK(std::abs(dot) <= 1e-12);
    }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
    Rng rng(4);
    auto enc = EncoderParams::init(5, {16}, 3, rng);
    for (double& b : enc.layers[0].bias) b = 0.5;
    const auto f = forward(enc, rng.normal_matrix(5, 6));
    const auto g = backward(enc, f.tape, Matrix(3, 6));
    for (const auto& w : g.weight) CHECK(max_abs(w) == 0.0);
    for (const auto& b : g.bias)
        for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("encoder gradients match finite differences") {
    GradCheckOptions opts;
    opts.modes = {LossMode::single_stream};
    opts.seeds = 3;
    const auto rep = run_grad_check(opts);
    CHECK(rep.passed());
    CHECK(rep.max_rel_error() <= 1e-4);
}

TEST_CASE("prototype scores") {
    Rng rng(5);
    auto bank = PrototypeBank::init(4, 3, rng);
    for (double n : oracle::col_norms(bank.c)) CHECK(std::abs(n - 1.0) <= 1e-12);
    Matrix z(4, 1);
    for (std::size_t r = 0; r < 4; ++r) z(r, 0) = bank.c(r, 1);
    CHECK(prototype_scores(z, bank)(1, 0) == doctest::Approx(1.0).epsilon(1e-12));

    PrototypeBank ortho;
    ortho.c = Matrix{{1.0}, {0.0}};
    CHECK(prototype_scores(Matrix{{0.0}, {1.0}}, ortho)(0, 0) == 0.0);

    const Matrix zz = l2_normalize_cols(rng.normal_matrix(4, 7));
    const Matrix ref = oracle::matmul(oracle::transpose(bank.c), zz);
    const Matrix got = prototype_scores(zz, bank);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(got.values()[i] - ref.values()[i]) <= 1e-12);
}

TEST_CASE("renormalization restores unit columns and keeps score signs") {
    Rng rng(6);
    auto bank = PrototypeBank::init(5, 8, rng);
    const Matrix z = l2_normalize_cols(rng.normal_matrix(5, 9));
    bank.c = bank.c + rng.normal_matrix(5, 8, 0.3);
    const Matrix before = prototype_scores(z, bank);
    bank.renormalize();
    for (double n : oracle::col_norms(bank.c)) CHECK(std::abs(n - 1.0) <= 1e-12);
    const Matrix after = prototype_scores(z, bank);
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK((before.values()[i] > 0) == (after.values()[i] > 0));
        CHECK((before.values()[i] == 0) == (after.values()[i] == 0));
    }
}

TEST_CASE("tensor archive round trip and format errors") {
    Rng rng(7);
    TensorArchive ar;
    ar.add(Tensor::from_matrix("w", rng.normal_matrix(3, 2)));
    ar.add(Tensor::from_vector("b", {1.5, -2.0}));
    ar.add(Tensor::scalar("s", 3.25));
    std::stringstream ss;
    ar.write(ss);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "VCC1");
    std::stringstream in(bytes);
    const auto back = TensorArchive::read(in);
    CHECK(back.get("w").to_matrix() == ar.get("w").to_matrix());
    CHECK(back.get("b").values == ar.get("b").values);
    CHECK(back.get("s").values.at(0) == 3.25);
    CHECK_FALSE(back.contains("missing"));

    std::string bad = bytes;
    bad[0] = 'X';
    std::stringstream b1(bad);
    CHECK_THROWS_AS(TensorArchive::read(b1), BadMagicError);
    std::stringstream b2(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(TensorArchive::read(b2), TruncatedError);
}

TEST_CASE("parameter checksum is order sensitive") {
    Rng rng(8);
    const auto enc = EncoderParams::init(4, {3}, 2, rng);
    auto other = enc;
    CHECK(checksum(enc) == checksum(other));
    std::swap(other.layers[0].weight(0, 0), other.layers[0].weight(0, 1));
    CHECK(checksum(enc) != checksum(other));
}

}

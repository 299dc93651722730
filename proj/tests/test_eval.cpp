#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vicc/error.hpp"
#include "vicc/eval.hpp"

using namespace vicc;

namespace {
// Sorting every train item by similarity, ties to the lower index.
double exhaustive_recall(const Matrix& train, const Labels& tl, const Matrix& test, const Labels& ql, int k) {
    int hits = 0;
    for (std::size_t q = 0; q < test.cols(); ++q) {
        std::vector<std::pair<double, std::size_t>> all;
        for (std::size_t t = 0; t < train.cols(); ++t) {
            double s = 0.0;
            for (std::size_t r = 0; r < train.rows(); ++r) s += train(r, t) * test(r, q);
            all.push_back({-s, t});
        }
        std::sort(all.begin(), all.end());
        bool hit = false;
        for (int i = 0; i < k && i < static_cast<int>(all.size()); ++i) hit |= tl[all[i].second] == ql[q];
        hits += hit;
    }
    return static_cast<double>(hits) / test.cols();
}
}  // namespace

TEST_SUITE("eval") {

TEST_CASE("retrieval: exact duplicates") {
    Rng rng(1);
    const Matrix train = l2_normalize_cols(rng.normal_matrix(6, 12));
    Labels tl(12);
    for (std::size_t i = 0; i < 12; ++i) tl[i] = static_cast<std::uint32_t>(i % 4);
    const std::size_t pick[] = {0, 5, 7};
    const Matrix test = select_cols(train, pick);
    const auto rep = knn_retrieval(train, tl, test, {0, 1, 3}, {1});
    CHECK(rep.at(1) == 1.0);
}

TEST_CASE("retrieval: hand fixture against the exhaustive sort") {
    // Five unit vectors on the circle with a known cosine ordering.
    Matrix train(2, 5);
    const double ang[] = {0.0, 0.4, 1.2, 2.0, 3.0};
    for (int i = 0; i < 5; ++i) {
        train(0, i) = std::cos(ang[i]);
        train(1, i) = std::sin(ang[i]);
    }
    const Labels tl{0, 1, 1, 0, 2};
    Matrix test(2, 3);
    const double q[] = {0.3, 1.7, 2.8};
    for (int i = 0; i < 3; ++i) {
        test(0, i) = std::cos(q[i]);
        test(1, i) = std::sin(q[i]);
    }
    const Labels ql{0, 0, 1};
    const auto rep = knn_retrieval(train, tl, test, ql, {1, 2, 3, 5});
    for (int k : {1, 2, 3, 5}) CHECK(rep.at(k) == exhaustive_recall(train, tl, test, ql, k));
    // Nearest neighbours: 1 (miss), 3 (hit), 4 (miss); second ones 0, 2, 3.
    CHECK(rep.at(1) == doctest::Approx(1.0 / 3.0));
    CHECK(rep.at(2) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("retrieval: random fixture, monotone in k") {
    Rng rng(2);
    const Matrix train = l2_normalize_cols(rng.normal_matrix(8, 60));
    const Matrix test = l2_normalize_cols(rng.normal_matrix(8, 20));
    Labels tl(60), ql(20);
    for (auto& l : tl) l = static_cast<std::uint32_t>(rng.below(5));
    for (auto& l : ql) l = static_cast<std::uint32_t>(rng.below(5));
    const auto rep = knn_retrieval(train, tl, test, ql, {1, 5, 10, 20, 60});
    double prev = 0.0;
    for (int k : {1, 5, 10, 20, 60}) {
        CHECK(rep.at(k) >= prev);
        CHECK(rep.at(k) == exhaustive_recall(train, tl, test, ql, k));
        prev = rep.at(k);
    }
    CHECK(rep.at(60) == 1.0);
}

TEST_CASE("combine streams") {
    Rng rng(3);
    const Matrix a = rng.normal_matrix(4, 6);
    const Matrix c = combine_streams(a, a);
    CHECK(c == a);
    const Matrix half = combine_streams(a, Matrix(4, 6, 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(half.values()[i] == doctest::Approx(0.5 * a.values()[i]));
    CHECK_THROWS_AS(combine_streams(a, Matrix(3, 6)), InvalidArgument);
}

TEST_CASE("linear probe") {
    Rng rng(4);
    Matrix x(2, 40);
    Labels y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        y[i] = static_cast<std::uint32_t>(i % 2);
        x(0, i) = (y[i] ? 2.0 : -2.0) + 0.3 * rng.normal();
        x(1, i) = rng.normal();
    }
    CHECK(linear_probe(x, y, x, y) == 1.0);

    // Shuffled labels: chance level.
    const std::size_t n = 2000;
    const Matrix xr = rng.normal_matrix(5, n);
    Labels yr(n), yt(n);
    for (auto& l : yr) l = static_cast<std::uint32_t>(rng.below(4));
    for (auto& l : yt) l = static_cast<std::uint32_t>(rng.below(4));
    const double acc = linear_probe(xr, yr, rng.normal_matrix(5, n), yt);
    CHECK(std::abs(acc - 0.25) < 0.05);
}

TEST_CASE("linear probe matches a tightly converged full-batch oracle") {
    // 20-point, 3-class fixture. The oracle is plain gradient descent on the
    // same penalized objective run far past convergence.
    Rng rng(5);
    const std::size_t n = 20, d = 2, K = 3;
    Matrix x(d, n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<std::uint32_t>(i % K);
        x(0, i) = std::cos(2.1 * y[i]) * 1.5 + 0.8 * rng.normal();
        x(1, i) = std::sin(2.1 * y[i]) * 1.5 + 0.8 * rng.normal();
    }
    const double reg = 1e-2;
    const auto model = fit_logistic(x, y, K, ProbeOptions{reg, 20000, 1e-10});
    // Oracle on standardized features with the library's statistics.
    Matrix xs(d + 1, n, 1.0);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t i = 0; i < n; ++i) xs(r, i) = (x(r, i) - model.mean[r]) * model.inv_std[r];
    Matrix w(K, d + 1);
    for (int it = 0; it < 200000; ++it) {
        const Matrix p = oracle::softmax_cols(oracle::matmul(w, xs), 1.0);
        Matrix g(K, d + 1);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j <= d; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += (p(k, i) - (y[i] == k ? 1.0 : 0.0)) * xs(j, i);
                g(k, j) = s / n + (j < d ? reg * w(k, j) : 0.0);
            }
        w -= g * 0.5;
    }
    const Matrix po = oracle::softmax_cols(oracle::matmul(w, xs), 1.0);
    const Matrix pl = predict_proba(model, x);
    CHECK(top1_accuracy(pl, y) == top1_accuracy(po, y));
    for (std::size_t i = 0; i < po.size(); ++i) CHECK(std::abs(pl.values()[i] - po.values()[i]) < 1e-6);
}

TEST_CASE("hungarian") {
    Matrix diag(4, 4, 1.0);
    for (int i = 0; i < 4; ++i) diag(i, i) = 0.0;
    CHECK(hungarian(diag) == std::vector<std::size_t>{0, 1, 2, 3});

    const std::vector<std::size_t> perm{2, 0, 3, 1};
    Matrix pc(4, 4, 1.0);
    for (int i = 0; i < 4; ++i) pc(i, perm[i]) = 0.0;
    CHECK(hungarian(pc) == perm);

    Rng rng(6);
    for (std::size_t n = 1; n <= 7; ++n) {
        for (int t = 0; t < 5; ++t) {
            Matrix c(n, n);
            for (double& v : c.values()) v = std::round(rng.uniform(-5, 5) * 4) / 4;
            const auto got = hungarian(c);
            const auto ref = oracle::brute_assignment(c);
            CHECK(oracle::assignment_cost(c, got) == oracle::assignment_cost(c, ref));
        }
    }
}

TEST_CASE("cluster metrics: closed forms") {
    const Labels labels{0, 0, 1, 1, 2, 2};
    const std::vector<std::uint32_t> perfect{2, 2, 0, 0, 1, 1};
    const auto r = cluster_eval(perfect, labels, 3);
    CHECK(r.acc == 1.0);
    CHECK(r.nmi == 1.0);
    CHECK(r.ari == 1.0);
    CHECK(r.mean_entropy == 0.0);
    CHECK(r.max_purity == 1.0);

    const std::vector<std::uint32_t> one(6, 0);
    const auto o = cluster_eval(one, labels, 3);
    CHECK(o.ari == 0.0);
    CHECK(o.max_purity == 1.0 / 3);
    CHECK(o.mean_entropy == std::log(3.0));
    CHECK(o.acc == doctest::Approx(1.0 / 3).epsilon(1e-15));

    CHECK_THROWS_AS(cluster_eval(std::vector<std::uint32_t>{3}, Labels{0}, 3), InvalidArgument);
}

TEST_CASE("cluster metrics: 12-sample fixture against the brute-force oracle") {
    const Labels labels{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
    const std::vector<std::uint32_t> pred{1, 1, 0, 2, 2, 2, 3, 0, 3, 0, 1, 3};
    const auto got = cluster_eval(pred, labels, 4);
    const auto ref = oracle::clustering(pred, labels, 4);
    CHECK(got.acc == ref.acc);
    CHECK(got.nmi == ref.nmi);
    CHECK(got.ari == ref.ari);
    CHECK(got.mean_entropy == ref.mean_entropy);
    CHECK(got.max_purity == ref.max_purity);
}

}

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vicc/data.hpp"
#include "vicc/error.hpp"
#include "vicc/eval.hpp"

using namespace vicc;

#ifndef VICC_FIXTURE_DIR
#error "VICC_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace {
std::string bytes_of(const DatasetSplit& d) {
    std::ostringstream os;
    write_dataset(os, d);
    return os.str();
}
}  // namespace

TEST_SUITE("data") {

TEST_CASE("spec validation") {
    SyntheticSpec s;
    CHECK(s.num_classes() == 8);
    s.validate();
    s.factor_a = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SyntheticSpec{};
    s.view_noise_sd = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = SyntheticSpec{};
    s.view_dims = {8, 32};
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("generation shapes, labels and determinism") {
    SyntheticSpec s;
    s.train_per_class = 10;
    s.test_per_class = 3;
    const auto d = generate(s);
    CHECK(d.train.size() == 80);
    CHECK(d.test.size() == 24);
    CHECK(d.train.dim(0) == 32);
    CHECK(d.train.dim(1) == 32);
    std::vector<int> counts(8, 0);
    for (auto l : d.train.labels) ++counts.at(l);
    for (int c : counts) CHECK(c == 10);
    CHECK(bytes_of(d) == bytes_of(generate(s)));
    s.seed = 8;
    CHECK(bytes_of(d) != bytes_of(generate(s)));
}

TEST_CASE("noise-free classes are identical within a class and distinct across") {
    SyntheticSpec s;
    s.train_per_class = 4;
    s.test_per_class = 2;
    s.latent_noise_sd = 0.0;
    s.view_noise_sd = 0.0;
    s.nuisance_sd = {0.0, 0.0};
    const auto d = generate(s);
    for (int v = 0; v < 2; ++v) {
        std::vector<std::vector<double>> first(8);
        for (std::size_t c = 0; c < d.train.size(); ++c) {
            const auto col = d.train.views[v].col(c);
            auto& ref = first[d.train.labels[c]];
            if (ref.empty()) ref = col;
            else CHECK(col == ref);
        }
        for (int a = 0; a < 8; ++a)
            for (int b = a + 1; b < 8; ++b) CHECK(first[a] != first[b]);
    }
    // Any encoder that is the identity retrieves perfectly.
    const auto rep = knn_retrieval(l2_normalize_cols(d.train.views[0]), d.train.labels,
                                   l2_normalize_cols(d.test.views[0]), d.test.labels, {1});
    CHECK(rep.at(1) == 1.0);
}

TEST_CASE("temporal clips redraw latent noise only") {
    SyntheticSpec s;
    s.train_per_class = 4;
    s.test_per_class = 1;
    const auto d = generate(s);
    std::vector<std::size_t> idx(d.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(1);
    const auto same = resample_clips(d.train, idx, 0.0, rng);
    CHECK(same[0] == d.train.views[0]);
    const auto fresh = resample_clips(d.train, idx, 1.0, rng);
    const std::size_t signal = 32 - s.nuisance_dims;
    for (int v = 0; v < 2; ++v) {
        for (std::size_t c = 0; c < idx.size(); ++c) {
            // Nuisance coordinates belong to the sample.
            for (std::size_t r = signal; r < 32; ++r) CHECK(fresh[v](r, c) == d.train.views[v](r, c));
        }
        CHECK(fresh[v] != d.train.views[v]);
    }
    // Without a latent source the call is a plain gather.
    const auto plain = subset(d.train, idx);
    TwoStreamDataset bare;
    bare.views = plain.views;
    bare.labels = plain.labels;
    bare.num_classes = plain.num_classes;
    const auto g = resample_clips(bare, idx, 1.0, rng);
    CHECK(g[1] == plain.views[1]);
}

TEST_CASE("augmentation") {
    Rng rng(3);
    const Matrix x = rng.normal_matrix(6, 5);
    CHECK(augment(x, AugmentationSpec{0.0, 0.0, 0.0, 0.0}, rng) == x);
    CHECK(max_abs(augment(x, AugmentationSpec{0.0, 1.0, 0.0, 0.0}, rng)) == 0.0);

    // Monte Carlo: additive noise only, E|x' - x|^2 per entry = sd^2.
    const Matrix big(10, 1000, 1.0);
    const auto out = augment(big, AugmentationSpec{0.3, 0.0, 0.0, 0.0}, rng);
    double sq = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) sq += std::pow(out.values()[i] - 1.0, 2);
    CHECK(std::abs(sq / big.size() - 0.09) < 0.005);

    // Masking only: mean kept fraction = 1 - p.
    const auto m = augment(big, AugmentationSpec{0.0, 0.25, 0.0, 0.0}, rng);
    double kept = 0.0;
    for (double v : m.values()) kept += v;
    CHECK(std::abs(kept / big.size() - 0.75) < 0.015);

    // Scale jitter only: per-column factor uniform on [0.8, 1.2].
    const auto sc = augment(big, AugmentationSpec{0.0, 0.0, 0.2, 0.0}, rng);
    double mean = 0.0;
    for (std::size_t c = 0; c < sc.cols(); ++c) {
        CHECK(sc(0, c) >= 0.8);
        CHECK(sc(0, c) <= 1.2);
        CHECK(sc(9, c) == sc(0, c));
        mean += sc(0, c);
    }
    CHECK(std::abs(mean / sc.cols() - 1.0) < 0.01);

    CHECK_THROWS_AS(AugmentationSpec({0.0, 1.5, 0.0, 0.0}).validate(), ConfigError);
}

TEST_CASE("batches keep the four views paired") {
    SyntheticSpec s;
    s.train_per_class = 4;
    s.test_per_class = 1;
    const auto d = generate(s);
    Rng rng(4);
    const std::vector<std::size_t> idx{5, 0, 17};
    const auto b = make_batch(d.train, idx, AugmentationSpec{0.0, 0.0, 0.0, 0.0}, rng);
    CHECK(b.indices == idx);
    for (std::size_t c = 0; c < idx.size(); ++c) {
        CHECK(b.labels[c] == d.train.labels[idx[c]]);
        CHECK(b.x1_i.col(c) == d.train.views[0].col(idx[c]));
        CHECK(b.x2_i.col(c) == d.train.views[1].col(idx[c]));
    }
}

TEST_CASE("file round trip and errors") {
    SyntheticSpec s;
    s.train_per_class = 3;
    s.test_per_class = 2;
    const auto d = generate(s);
    const auto path = std::filesystem::temp_directory_path() / "vicc_test_roundtrip.vccd";
    save_dataset(d, path);
    const auto back = load_dataset(path);
    CHECK(back.train.views[0] == d.train.views[0]);
    CHECK(back.test.views[1] == d.test.views[1]);
    CHECK(back.train.labels == d.train.labels);
    CHECK(back.test.labels == d.test.labels);
    CHECK(back.train.num_classes == 8);
    CHECK_FALSE(back.train.latent.available());
    std::filesystem::remove(path);

    std::string raw = bytes_of(d);
    std::string bad = raw;
    bad[1] = 'X';
    std::istringstream b1(bad);
    CHECK_THROWS_AS(read_dataset(b1), BadMagicError);
    std::istringstream b2(raw.substr(0, raw.size() - 5));
    CHECK_THROWS_AS(read_dataset(b2), TruncatedError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/dir/x.vccd"), IoError);
}

TEST_CASE("byte-level little-endian fixture") {
    const auto d = load_dataset(std::filesystem::path(VICC_FIXTURE_DIR) / "tiny.vccd");
    CHECK(d.train.size() == 2);
    CHECK(d.test.size() == 1);
    CHECK(d.train.views[0] == Matrix{{1.0, 0.5}, {-2.5, 0.25}});
    CHECK(d.test.views[0] == Matrix{{-1.0}, {3.0}});
    CHECK(d.train.views[1] == Matrix{{4.0, -0.125}});
    CHECK(d.test.views[1] == Matrix{{2.0}});
    CHECK(d.train.labels == std::vector<std::uint32_t>{0, 1});
    CHECK(d.test.labels == std::vector<std::uint32_t>{1});
    CHECK(d.train.num_classes == 2);
    // Writing it back reproduces the committed bytes.
    std::ifstream in(std::filesystem::path(VICC_FIXTURE_DIR) / "tiny.vccd", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(bytes_of(d) == ss.str());
}

TEST_CASE("csv fixture") {
    const auto d = load_dataset_csv(std::filesystem::path(VICC_FIXTURE_DIR) / "tiny.csv");
    CHECK(d.train.size() == 2);
    CHECK(d.train.views[0] == Matrix{{1.0, 0.5}, {-2.5, 0.25}});
    CHECK(d.train.views[1] == Matrix{{4.0, -0.125}});
    std::istringstream bad("stream,x,label\n3,1.0,0\n");
    CHECK_THROWS_AS(read_dataset_csv(bad), FormatError);
}

TEST_CASE("committed benchmark separates own and other factors") {
    const auto d = generate(SyntheticSpec{});
    const auto sep = factor_separability(d, SyntheticSpec{}.factor_b);
    // Stream 1 owns factor a, stream 2 owns factor b.
    CHECK(sep.accuracy[0][0] - sep.accuracy[0][1] >= 0.20);
    CHECK(sep.accuracy[1][1] - sep.accuracy[1][0] >= 0.20);
}

}

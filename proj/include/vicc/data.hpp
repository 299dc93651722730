#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "vicc/matrix.hpp"

namespace vicc {

// Per-sample noise draws and the linear maps that carry the latent part into
// each view. Only generated datasets have one; files do not store it.
struct LatentSource {
    std::array<Matrix, 2> maps;        // dim_s x latent dims
    Matrix noise;                      // latent dims x N
    std::array<Matrix, 2> view_noise;  // dim_s x N, zero on nuisance rows
    double sd = 0.0;
    double view_sd = 0.0;

    bool available() const { return !noise.empty(); }
};

// Two-view samples sharing one column index across streams. Labels are held
// out from training and only used by evaluation.
struct TwoStreamDataset {
    std::array<Matrix, 2> views;  // dim_s x N each
    std::vector<std::uint32_t> labels;
    std::uint32_t num_classes = 0;
    LatentSource latent;

    std::size_t size() const { return labels.size(); }
    std::size_t dim(int stream) const { return views[stream].rows(); }
    void validate() const;
};

struct DatasetSplit {
    TwoStreamDataset train;
    TwoStreamDataset test;
};

// Factorized synthetic benchmark. Class (a, b) has latent mean
// [alpha_a ; beta_b] in two orthogonal latent halves. Stream 1 observes the
// latent with the a-half amplified by own_gain and the b-half attenuated by
// other_gain, stream 2 the other way round. Each stream then applies its own random
// isometry, per-sample view noise and appended nuisance coordinates that are
// stable per sample but carry no class information.
struct SyntheticSpec {
    std::uint32_t factor_a = 4;  // M1
    std::uint32_t factor_b = 2;  // M2
    std::uint32_t train_per_class = 256;
    std::uint32_t test_per_class = 64;
    std::uint32_t latent_dim = 16;
    std::array<std::uint32_t, 2> view_dims = {32, 32};
    std::uint32_t nuisance_dims = 8;
    double class_separation = 3.0;
    double latent_noise_sd = 0.5;
    double own_gain = 1.0;
    std::array<double, 2> other_gain = {0.1, 0.2};  // per stream
    double view_noise_sd = 0.3;
    std::array<double, 2> nuisance_sd = {0.5, 0.5};  // per stream
    std::uint64_t seed = 7;

    std::uint32_t num_classes() const { return factor_a * factor_b; }
    void validate() const;
};

DatasetSplit generate(const SyntheticSpec& spec);

// Class id of factor pair (a, b) and the inverse maps.
inline std::uint32_t class_of(std::uint32_t a, std::uint32_t b, std::uint32_t factor_b) {
    return a * factor_b + b;
}
inline std::uint32_t factor_a_of(std::uint32_t label, std::uint32_t factor_b) { return label / factor_b; }
inline std::uint32_t factor_b_of(std::uint32_t label, std::uint32_t factor_b) { return label % factor_b; }

struct AugmentationSpec {
    double additive_noise_sd = 0.3;
    double mask_prob = 0.1;     // per-coordinate dropout probability
    double scale_jitter = 0.2;  // column scale drawn from [1 - j, 1 + j]
    // Chance that the second view of a sample sees a fresh latent-noise draw
    // (the "other time stamp" clip). Needs a LatentSource.
    double temporal_prob = 0.5;

    void validate() const;
};

// x' = s * (mask .* x) + noise, drawn independently per call.
Matrix augment(const Matrix& x, const AugmentationSpec& spec, Rng& rng);

// Raw columns `indices` of both streams for a second clip: with probability
// `prob` per sample the class-latent noise (shared by both streams) and the
// view noise are redrawn. Nuisance coordinates belong to the sample and stay
// fixed.
// Without a LatentSource this is a plain gather and `rng` is untouched.
std::array<Matrix, 2> resample_clips(const TwoStreamDataset& data, std::span<const std::size_t> indices,
                                     double prob, Rng& rng);

struct TwoStreamBatch {
    Matrix x1_i, x1_j, x2_i, x2_j;
    std::vector<std::uint32_t> labels;
    std::vector<std::size_t> indices;  // dataset columns, shared by all four views
};

// Gathers `indices` from both streams and draws two augmentations of each;
// the j views come from resample_clips.
TwoStreamBatch make_batch(const TwoStreamDataset& data, std::span<const std::size_t> indices,
                          const AugmentationSpec& aug, Rng& rng);

// Dataset subset in the given column order; all views and labels share it.
TwoStreamDataset subset(const TwoStreamDataset& data, std::span<const std::size_t> indices);

// "VCCD" container: magic, u16 version, u32 counts (streams = 2, samples,
// dim_1, dim_2, classes, train samples), per-stream sample-major f32 blocks,
// then u32 labels. Samples [0, train) are the train split.
void write_dataset(std::ostream& out, const DatasetSplit& split);
DatasetSplit read_dataset(std::istream& in);
void save_dataset(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_dataset(const std::filesystem::path& path);

// CSV fixtures: header "stream,<dim columns...>,label", one row per sample
// and stream (stream is 1 or 2). Rows of a stream are matched by order. All
// rows land in the train split.
DatasetSplit read_dataset_csv(std::istream& in);
DatasetSplit load_dataset_csv(const std::filesystem::path& path);

}  // namespace vicc

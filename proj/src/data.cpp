#include "vicc/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "binary_io.hpp"
#include "vicc/error.hpp"

namespace vicc {

namespace {

constexpr char kMagic[5] = "VCCD";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1U << 20;
constexpr std::uint64_t kMaxValues = 1ULL << 31;

// Columns of a random matrix with orthonormal columns (modified Gram-Schmidt).
Matrix random_isometry(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix q = rng.normal_matrix(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            double dot = 0.0;
            for (std::size_t r = 0; r < rows; ++r) dot += q(r, i) * q(r, j);
            for (std::size_t r = 0; r < rows; ++r) q(r, j) -= dot * q(r, i);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < rows; ++r) norm += q(r, j) * q(r, j);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < rows; ++r) q(r, j) /= norm;
    }
    return q;
}

// Values are kept f32-representable so files round-trip exactly.
double to_stored(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void TwoStreamDataset::validate() const {
    for (int s = 0; s < 2; ++s) {
        if (views[s].cols() != labels.size()) {
            throw InvalidArgument("dataset: stream " + std::to_string(s + 1) + " has " +
                                  std::to_string(views[s].cols()) + " samples, labels " +
                                  std::to_string(labels.size()));
        }
    }
    for (auto l : labels) {
        if (l >= num_classes) throw InvalidArgument("dataset: label out of range");
    }
    if (latent.available()) {
        if (latent.noise.cols() != labels.size()) throw InvalidArgument("dataset: latent noise size");
        for (int s = 0; s < 2; ++s) {
            if (latent.maps[s].rows() != views[s].rows() || latent.maps[s].cols() != latent.noise.rows() ||
                !latent.view_noise[s].same_shape(views[s])) {
                throw InvalidArgument("dataset: latent map shape");
            }
        }
    }
}

void SyntheticSpec::validate() const {
    if (factor_a < 1 || factor_b < 1) throw ConfigError("synthetic: factor counts must be >= 1");
    if (train_per_class < 1) throw ConfigError("synthetic: train_per_class must be >= 1");
    if (latent_dim < 2 || latent_dim % 2 != 0) {
        throw ConfigError("synthetic: latent_dim must be even and >= 2");
    }
    for (auto d : view_dims) {
        if (d < latent_dim + nuisance_dims) {
            throw ConfigError("synthetic: view dims must be >= latent_dim + nuisance_dims");
        }
    }
    if (view_noise_sd < 0 || latent_noise_sd < 0 || nuisance_sd[0] < 0 ||
        nuisance_sd[1] < 0 || other_gain[0] < 0 || other_gain[1] < 0 || own_gain < 0) {
        throw ConfigError("synthetic: noise levels must be >= 0");
    }
    if (!(class_separation > 0)) throw ConfigError("synthetic: class_separation must be > 0");
}

DatasetSplit generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t half = spec.latent_dim / 2;

    // Factor means in their own latent halves.
    auto factor_means = [&](std::uint32_t count) {
        Matrix means = rng.normal_matrix(half, count);
        means = l2_normalize_cols(means);
        means *= spec.class_separation;
        return means;
    };
    const Matrix alpha = factor_means(spec.factor_a);
    const Matrix beta = factor_means(spec.factor_b);

    // Latent layout: [a half | b half].
    const std::size_t latent = spec.latent_dim;
    std::array<Matrix, 2> maps;
    for (int s = 0; s < 2; ++s) {
        const std::size_t signal_rows = spec.view_dims[s] - spec.nuisance_dims;
        const Matrix mixing = random_isometry(signal_rows, latent, rng);
        maps[s] = Matrix(spec.view_dims[s], latent);
        for (std::size_t r = 0; r < signal_rows; ++r) {
            for (std::size_t k = 0; k < latent; ++k) {
                double gain = spec.own_gain;
                if ((k < half) != (s == 0)) gain = spec.other_gain[s];
                maps[s](r, k) = mixing(r, k) * gain;
            }
        }
    }

    auto make_split = [&](std::uint32_t per_class) {
        TwoStreamDataset ds;
        ds.num_classes = spec.num_classes();
        const std::size_t n = static_cast<std::size_t>(per_class) * ds.num_classes;
        for (int s = 0; s < 2; ++s) ds.views[s] = Matrix(spec.view_dims[s], n);
        ds.labels.resize(n);
        auto& src = ds.latent;
        src.maps = maps;
        src.noise = Matrix(latent, n);
        src.sd = spec.latent_noise_sd;
        src.view_sd = spec.view_noise_sd;
        for (int s = 0; s < 2; ++s) src.view_noise[s] = Matrix(spec.view_dims[s], n);
        std::vector<double> u(latent);
        std::size_t col = 0;
        for (std::uint32_t i = 0; i < per_class; ++i) {
            for (std::uint32_t a = 0; a < spec.factor_a; ++a) {
                for (std::uint32_t b = 0; b < spec.factor_b; ++b, ++col) {
                    ds.labels[col] = class_of(a, b, spec.factor_b);
                    for (std::size_t k = 0; k < latent; ++k) {
                        src.noise(k, col) = src.sd * rng.normal();
                        const double mean = k < half ? alpha(k, a) : beta(k - half, b);
                        u[k] = mean + src.noise(k, col);
                    }
                    for (int s = 0; s < 2; ++s) {
                        const Matrix& m = maps[s];
                        Matrix& view = ds.views[s];
                        const std::size_t signal_rows = view.rows() - spec.nuisance_dims;
                        for (std::size_t r = 0; r < signal_rows; ++r) {
                            double v = 0.0;
                            for (std::size_t k = 0; k < latent; ++k) v += m(r, k) * u[k];
                            const double e = spec.view_noise_sd * rng.normal();
                            src.view_noise[s](r, col) = e;
                            view(r, col) = to_stored(v + e);
                        }
                        for (std::size_t r = signal_rows; r < view.rows(); ++r) {
                            view(r, col) = to_stored(spec.nuisance_sd[s] * rng.normal());
                        }
                    }
                }
            }
        }
        return ds;
    };

    DatasetSplit split;
    split.train = make_split(spec.train_per_class);
    split.test = make_split(spec.test_per_class);
    return split;
}

void AugmentationSpec::validate() const {
    if (mask_prob < 0.0 || mask_prob > 1.0) throw ConfigError("augmentation: mask_prob not in [0,1]");
    if (additive_noise_sd < 0.0) throw ConfigError("augmentation: negative noise sd");
    if (scale_jitter < 0.0 || scale_jitter > 1.0) {
        throw ConfigError("augmentation: scale_jitter not in [0,1]");
    }
    if (temporal_prob < 0.0 || temporal_prob > 1.0) {
        throw ConfigError("augmentation: temporal_prob not in [0,1]");
    }
}

Matrix augment(const Matrix& x, const AugmentationSpec& spec, Rng& rng) {
    Matrix out = x;
    if (spec.scale_jitter > 0.0) {
        std::vector<double> scale(x.cols());
        for (double& s : scale) s = rng.uniform(1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter);
        for (std::size_t r = 0; r < out.rows(); ++r)
            for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= scale[c];
    }
    if (spec.mask_prob > 0.0) {
        for (double& v : out.values())
            if (rng.bernoulli(spec.mask_prob)) v = 0.0;
    }
    if (spec.additive_noise_sd > 0.0) {
        for (double& v : out.values()) v += spec.additive_noise_sd * rng.normal();
    }
    return out;
}

TwoStreamDataset subset(const TwoStreamDataset& data, std::span<const std::size_t> indices) {
    TwoStreamDataset out;
    out.num_classes = data.num_classes;
    for (int s = 0; s < 2; ++s) out.views[s] = select_cols(data.views[s], indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(data.labels.at(i));
    if (data.latent.available()) {
        out.latent.maps = data.latent.maps;
        out.latent.noise = select_cols(data.latent.noise, indices);
        for (int s = 0; s < 2; ++s) out.latent.view_noise[s] = select_cols(data.latent.view_noise[s], indices);
        out.latent.sd = data.latent.sd;
        out.latent.view_sd = data.latent.view_sd;
    }
    return out;
}

// Trailing all-zero rows of a latent map are the nuisance coordinates.
std::size_t nuisance_rows(const Matrix& map) {
    std::size_t n = 0;
    for (std::size_t r = map.rows(); r-- > 0; ++n) {
        for (std::size_t k = 0; k < map.cols(); ++k)
            if (map(r, k) != 0.0) return n;
    }
    return n;
}

std::array<Matrix, 2> resample_clips(const TwoStreamDataset& data, std::span<const std::size_t> indices,
                                     double prob, Rng& rng) {
    std::array<Matrix, 2> out = {select_cols(data.views[0], indices), select_cols(data.views[1], indices)};
    if (!data.latent.available() || prob <= 0.0) return out;
    const Matrix& noise = data.latent.noise;
    std::vector<double> delta(noise.rows(), 0.0);
    for (std::size_t c = 0; c < indices.size(); ++c) {
        if (!rng.bernoulli(prob)) continue;
        for (std::size_t k = 0; k < delta.size(); ++k) delta[k] = data.latent.sd * rng.normal() - noise(k, indices[c]);
        for (int s = 0; s < 2; ++s) {
            const Matrix& m = data.latent.maps[s];
            const Matrix& e = data.latent.view_noise[s];
            const std::size_t signal_rows = m.rows() - nuisance_rows(m);
            for (std::size_t r = 0; r < signal_rows; ++r) {
                double v = data.latent.view_sd * rng.normal() - e(r, indices[c]);
                for (std::size_t k = 0; k < delta.size(); ++k) v += m(r, k) * delta[k];
                out[s](r, c) += v;
            }
        }
    }
    return out;
}

TwoStreamBatch make_batch(const TwoStreamDataset& data, std::span<const std::size_t> indices,
                          const AugmentationSpec& aug, Rng& rng) {
    TwoStreamBatch batch;
    const auto later = resample_clips(data, indices, aug.temporal_prob, rng);
    batch.x1_i = augment(select_cols(data.views[0], indices), aug, rng);
    batch.x1_j = augment(later[0], aug, rng);
    batch.x2_i = augment(select_cols(data.views[1], indices), aug, rng);
    batch.x2_j = augment(later[1], aug, rng);
    batch.indices.assign(indices.begin(), indices.end());
    for (auto i : indices) batch.labels.push_back(data.labels.at(i));
    return batch;
}

void write_dataset(std::ostream& out, const DatasetSplit& split) {
    split.train.validate();
    split.test.validate();
    for (int s = 0; s < 2; ++s) {
        if (split.train.dim(s) != split.test.dim(s) && split.test.size() > 0) {
            throw InvalidArgument("write_dataset: train/test dims differ");
        }
    }
    const std::size_t train_n = split.train.size();
    const std::size_t n = train_n + split.test.size();
    out.write(kMagic, 4);
    detail::put_le<std::uint16_t>(out, kVersion);
    detail::put_le<std::uint32_t>(out, 2);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
    for (int s = 0; s < 2; ++s)
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(split.train.dim(s)));
    detail::put_le<std::uint32_t>(out, std::max(split.train.num_classes, split.test.num_classes));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(train_n));
    for (int s = 0; s < 2; ++s) {
        for (const auto* part : {&split.train, &split.test}) {
            const Matrix& v = part->views[s];
            for (std::size_t c = 0; c < v.cols(); ++c)
                for (std::size_t r = 0; r < v.rows(); ++r)
                    detail::put_f32(out, static_cast<float>(v(r, c)));
        }
    }
    for (const auto* part : {&split.train, &split.test})
        for (auto l : part->labels) detail::put_le<std::uint32_t>(out, l);
    if (!out) throw IoError("write_dataset: write failed");
}

DatasetSplit read_dataset(std::istream& in) {
    detail::expect_magic(in, kMagic, "dataset");
    const auto version = detail::get_le<std::uint16_t>(in, "version");
    if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
    const auto streams = detail::get_le<std::uint32_t>(in, "stream count");
    if (streams != 2) throw FormatError("dataset: expected 2 streams, got " + std::to_string(streams));
    const auto n = detail::get_le<std::uint32_t>(in, "sample count");
    std::array<std::uint32_t, 2> dims{};
    for (auto& d : dims) {
        d = detail::get_le<std::uint32_t>(in, "stream dim");
        if (d == 0 || d > kMaxDim) throw DimOverflowError("dataset: stream dim " + std::to_string(d));
        if (static_cast<std::uint64_t>(d) * n > kMaxValues) {
            throw DimOverflowError("dataset: stream block too large");
        }
    }
    const auto classes = detail::get_le<std::uint32_t>(in, "class count");
    const auto train_n = detail::get_le<std::uint32_t>(in, "train count");
    if (train_n > n) throw FormatError("dataset: train count exceeds sample count");

    DatasetSplit split;
    std::array<TwoStreamDataset*, 2> parts = {&split.train, &split.test};
    const std::array<std::size_t, 2> sizes = {train_n, n - train_n};
    for (int p = 0; p < 2; ++p) {
        parts[p]->num_classes = classes;
        for (int s = 0; s < 2; ++s) parts[p]->views[s] = Matrix(dims[s], sizes[p]);
    }
    for (int s = 0; s < 2; ++s) {
        for (int p = 0; p < 2; ++p) {
            Matrix& v = parts[p]->views[s];
            for (std::size_t c = 0; c < v.cols(); ++c)
                for (std::size_t r = 0; r < v.rows(); ++r)
                    v(r, c) = static_cast<double>(detail::get_f32(in, "sample values"));
        }
    }
    for (int p = 0; p < 2; ++p) {
        parts[p]->labels.resize(sizes[p]);
        for (auto& l : parts[p]->labels) {
            l = detail::get_le<std::uint32_t>(in, "labels");
            if (l >= classes) throw FormatError("dataset: label " + std::to_string(l) + " out of range");
        }
    }
    return split;
}

void save_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_dataset(out, split);
}

DatasetSplit load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_dataset(in);
}

DatasetSplit read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("csv: missing header");
    std::array<std::vector<std::vector<double>>, 2> rows;
    std::array<std::vector<std::uint32_t>, 2> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 3) throw FormatError("csv line " + std::to_string(line_no) + ": too few cells");
        try {
            const int stream = std::stoi(cells.front());
            if (stream != 1 && stream != 2) {
                throw FormatError("csv line " + std::to_string(line_no) + ": stream must be 1 or 2");
            }
            std::vector<double> values;
            for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
                if (!cells[i].empty()) values.push_back(std::stod(cells[i]));
            }
            rows[stream - 1].push_back(std::move(values));
            labels[stream - 1].push_back(static_cast<std::uint32_t>(std::stoul(cells.back())));
        } catch (const std::logic_error&) {
            throw FormatError("csv line " + std::to_string(line_no) + ": not a number");
        }
    }
    if (rows[0].size() != rows[1].size() || rows[0].empty()) {
        throw FormatError("csv: both streams need the same, non-zero number of rows");
    }
    if (labels[0] != labels[1]) throw FormatError("csv: stream rows disagree on labels");

    DatasetSplit split;
    auto& ds = split.train;
    ds.labels = labels[0];
    for (auto l : ds.labels) ds.num_classes = std::max(ds.num_classes, l + 1);
    for (int s = 0; s < 2; ++s) {
        const std::size_t dim = rows[s].front().size();
        ds.views[s] = Matrix(dim, rows[s].size());
        for (std::size_t c = 0; c < rows[s].size(); ++c) {
            if (rows[s][c].size() != dim) throw FormatError("csv: ragged rows in a stream");
            ds.views[s].set_col(c, rows[s][c]);
        }
    }
    split.test.num_classes = ds.num_classes;
    for (int s = 0; s < 2; ++s) split.test.views[s] = Matrix(ds.dim(s), 0);
    return split;
}

DatasetSplit load_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_dataset_csv(in);
}

}  // namespace vicc

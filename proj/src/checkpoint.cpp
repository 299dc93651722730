#include "vicc/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "vicc/error.hpp"

namespace vicc {

namespace {
constexpr char kMagic[5] = "VCC1";
// Guards against allocating absurd buffers from a corrupt header.
constexpr std::uint64_t kMaxElements = 1ULL << 32;
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

Tensor Tensor::from_matrix(std::string name, const Matrix& m) {
    return {std::move(name),
            {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
            m.storage()};
}

Tensor Tensor::from_vector(std::string name, std::vector<double> v) {
    const auto n = static_cast<std::uint32_t>(v.size());
    return {std::move(name), {n}, std::move(v)};
}

Tensor Tensor::scalar(std::string name, double v) { return {std::move(name), {}, {v}}; }

Matrix Tensor::to_matrix() const {
    if (dims.size() != 2) throw FormatError("tensor " + name + " is not rank 2");
    return Matrix(dims[0], dims[1], values);
}

void TensorArchive::add(Tensor t) {
    if (contains(t.name)) throw InvalidArgument("duplicate tensor name " + t.name);
    tensors_.push_back(std::move(t));
}

bool TensorArchive::contains(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return true;
    return false;
}

const Tensor& TensorArchive::get(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t;
    throw FormatError("checkpoint has no tensor named " + name);
}

void TensorArchive::write(std::ostream& out) const {
    out.write(kMagic, 4);
    detail::put_le<std::uint16_t>(out, kVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_le<std::uint32_t>(out, d);
        for (double v : t.values) detail::put_f64(out, v);
    }
    if (!out) throw IoError("checkpoint: write failed");
}

TensorArchive TensorArchive::read(std::istream& in) {
    detail::expect_magic(in, kMagic, "checkpoint");
    const auto version = detail::get_le<std::uint16_t>(in, "version");
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = detail::get_le<std::uint32_t>(in, "tensor count");
    TensorArchive archive;
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t;
        const auto name_len = detail::get_le<std::uint32_t>(in, "name length");
        if (name_len > kMaxNameLength) throw DimOverflowError("checkpoint: tensor name too long");
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len)) {
            throw TruncatedError("checkpoint: truncated tensor name");
        }
        const auto rank = detail::get_le<std::uint32_t>(in, "rank");
        if (rank > kMaxRank) throw DimOverflowError("checkpoint: rank too large for " + t.name);
        std::uint64_t elements = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(detail::get_le<std::uint32_t>(in, "dims"));
            elements *= t.dims.back();
            if (elements > kMaxElements) {
                throw DimOverflowError("checkpoint: tensor " + t.name + " is too large");
            }
        }
        t.values.resize(elements);
        for (auto& v : t.values) v = detail::get_f64(in, "tensor values");
        archive.add(std::move(t));
    }
    return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write(out);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read(in);
}

}  // namespace vicc

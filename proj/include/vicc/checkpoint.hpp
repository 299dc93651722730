#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vicc/matrix.hpp"

namespace vicc {

// Self-describing tensor file:
//   "VCC1" | u16 version | u32 tensor count |
//   per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
//               f64 values[prod(dims)]
// All integers and reals little-endian.
struct Tensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    static Tensor from_matrix(std::string name, const Matrix& m);
    static Tensor from_vector(std::string name, std::vector<double> v);
    static Tensor scalar(std::string name, double v);
    Matrix to_matrix() const;
};

class TensorArchive {
public:
    static constexpr std::uint16_t kVersion = 1;

    void add(Tensor t);
    bool contains(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void write(std::ostream& out) const;
    static TensorArchive read(std::istream& in);
    void save(const std::filesystem::path& path) const;
    static TensorArchive load(const std::filesystem::path& path);

private:
    std::vector<Tensor> tensors_;
};

}  // namespace vicc

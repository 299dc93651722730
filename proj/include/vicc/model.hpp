#pragma once

#include <cstdint>
#include <vector>

#include "vicc/matrix.hpp"

namespace vicc {

// d x B embedding matrix with unit-norm columns.
using FeatureMatrix = Matrix;

struct DenseLayer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out
};

// Multi-layer perceptron with ReLU between layers, a linear last layer acting
// as the projection head, and l2 normalization of the output. Zero layers is
// the identity map followed by normalization.
struct EncoderParams {
    std::vector<DenseLayer> layers;
    std::size_t identity_dim = 0;  // used only when layers is empty

    std::size_t input_dim() const;
    std::size_t output_dim() const;

    // He-normal weights, zero biases.
    static EncoderParams init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                              std::size_t output_dim, Rng& rng);
    static EncoderParams identity(std::size_t dim);
};

struct ForwardTape {
    std::vector<Matrix> inputs;  // input to each layer; inputs[0] is x
    std::vector<Matrix> pre;     // pre-activation of each layer
    Matrix output;               // head output before normalization
    std::vector<double> norms;   // column norms of output
    Matrix z;                    // normalized output
};

struct ForwardResult {
    FeatureMatrix z;
    ForwardTape tape;
};

struct EncoderGrads {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
    Matrix input;  // gradient with respect to x

    static EncoderGrads zeros_like(const EncoderParams& enc);
    EncoderGrads& operator+=(const EncoderGrads& other);
};

ForwardResult forward(const EncoderParams& enc, const Matrix& x);

// Exact gradients of <grad_z, z> through the normalization Jacobian
// (I - z z^T) / ||v|| and every layer.
EncoderGrads backward(const EncoderParams& enc, const ForwardTape& tape, const Matrix& grad_z);

// Unit-norm embeddings. With pre_head set, the representation feeding the
// projection head is returned instead of the head output.
FeatureMatrix embed(const EncoderParams& enc, const Matrix& x, bool pre_head = false);

struct PrototypeBank {
    Matrix c;  // d x K, unit columns
    bool frozen = false;

    std::size_t size() const { return c.cols(); }
    std::size_t dim() const { return c.rows(); }

    static PrototypeBank init(std::size_t dim, std::size_t count, Rng& rng);
    void renormalize() { c = l2_normalize_cols(c); }
};

// K x B cosine similarities c_k^T z_b.
Matrix prototype_scores(const FeatureMatrix& z, const PrototypeBank& bank);

// Order-sensitive FNV-1a over the bit patterns of all parameters.
std::uint64_t checksum(const EncoderParams& enc);
std::uint64_t checksum(const Matrix& m);

}  // namespace vicc

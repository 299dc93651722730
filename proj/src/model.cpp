#include "vicc/model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "vicc/error.hpp"

namespace vicc {

std::size_t EncoderParams::input_dim() const {
    return layers.empty() ? identity_dim : layers.front().weight.cols();
}

std::size_t EncoderParams::output_dim() const {
    return layers.empty() ? identity_dim : layers.back().weight.rows();
}

EncoderParams EncoderParams::init(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t output_dim, Rng& rng) {
    EncoderParams enc;
    std::size_t fan_in = input_dim;
    auto add = [&](std::size_t fan_out) {
        DenseLayer layer;
        layer.weight = rng.normal_matrix(fan_out, fan_in, std::sqrt(2.0 / fan_in));
        layer.bias.assign(fan_out, 0.0);
        enc.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (std::size_t width : hidden) add(width);
    add(output_dim);
    return enc;
}

EncoderParams EncoderParams::identity(std::size_t dim) {
    EncoderParams enc;
    enc.identity_dim = dim;
    return enc;
}

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& enc) {
    EncoderGrads g;
    for (const auto& layer : enc.layers) {
        g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
        g.bias.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

EncoderGrads& EncoderGrads::operator+=(const EncoderGrads& other) {
    if (weight.size() != other.weight.size()) throw InvalidArgument("EncoderGrads: depth mismatch");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        weight[l] += other.weight[l];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
    return *this;
}

ForwardResult forward(const EncoderParams& enc, const Matrix& x) {
    if (x.rows() != enc.input_dim()) {
        throw InvalidArgument("forward: input has " + std::to_string(x.rows()) +
                              " rows, encoder expects " + std::to_string(enc.input_dim()));
    }
    ForwardResult res;
    auto& tape = res.tape;
    Matrix h = x;
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const auto& layer = enc.layers[l];
        Matrix a = matmul(layer.weight, h);
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (double& v : a.row(r)) v += layer.bias[r];
        tape.inputs.push_back(std::move(h));
        h = a;
        if (l + 1 < enc.layers.size())
            for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
        tape.pre.push_back(std::move(a));
    }
    tape.norms = col_norms(h);
    for (std::size_t c = 0; c < tape.norms.size(); ++c) {
        if (tape.norms[c] == 0.0) {
            throw InvalidArgument("forward: encoder output column " + std::to_string(c) +
                                  " is zero and cannot be normalized");
        }
    }
    tape.z = l2_normalize_cols(h);
    tape.output = std::move(h);
    res.z = tape.z;
    return res;
}

EncoderGrads backward(const EncoderParams& enc, const ForwardTape& tape, const Matrix& grad_z) {
    if (!grad_z.same_shape(tape.z)) {
        throw InvalidArgument("backward: grad_z " + grad_z.shape() + " does not match output " +
                              tape.z.shape());
    }
    if (tape.pre.size() != enc.layers.size() || tape.inputs.size() != enc.layers.size()) {
        throw InvalidArgument("backward: tape depth does not match encoder");
    }

    // Normalization Jacobian: (g - z (z^T g)) / ||v|| per column.
    const std::size_t cols = grad_z.cols();
    std::vector<double> radial(cols, 0.0);
    for (std::size_t r = 0; r < grad_z.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) radial[c] += tape.z(r, c) * grad_z(r, c);
    Matrix g(grad_z.rows(), cols);
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
            g(r, c) = (grad_z(r, c) - tape.z(r, c) * radial[c]) / tape.norms[c];

    EncoderGrads grads = EncoderGrads::zeros_like(enc);
    for (std::size_t l = enc.layers.size(); l-- > 0;) {
        if (l + 1 < enc.layers.size()) {
            const Matrix& pre = tape.pre[l];
            for (std::size_t i = 0; i < g.size(); ++i)
                if (pre.values()[i] <= 0.0) g.values()[i] = 0.0;
        }
        grads.weight[l] = matmul_nt(g, tape.inputs[l]);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double s = 0.0;
            for (double v : g.row(r)) s += v;
            grads.bias[l][r] = s;
        }
        g = matmul_tn(enc.layers[l].weight, g);
    }
    grads.input = std::move(g);
    return grads;
}

FeatureMatrix embed(const EncoderParams& enc, const Matrix& x, bool pre_head) {
    auto res = forward(enc, x);
    if (!pre_head || enc.layers.empty()) return std::move(res.z);
    return l2_normalize_cols(res.tape.inputs.back());
}

PrototypeBank PrototypeBank::init(std::size_t dim, std::size_t count, Rng& rng) {
    PrototypeBank bank;
    bank.c = l2_normalize_cols(rng.normal_matrix(dim, count));
    return bank;
}

Matrix prototype_scores(const FeatureMatrix& z, const PrototypeBank& bank) {
    if (z.rows() != bank.dim()) {
        throw InvalidArgument("prototype_scores: features " + z.shape() + " vs prototypes " +
                              bank.c.shape());
    }
    return matmul_tn(bank.c, z);
}

namespace {
void fnv_mix(std::uint64_t& h, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001B3ULL;
    }
}
}  // namespace

std::uint64_t checksum(const Matrix& m) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (double v : m.values()) fnv_mix(h, v);
    return h;
}

std::uint64_t checksum(const EncoderParams& enc) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const auto& layer : enc.layers) {
        for (double v : layer.weight.values()) fnv_mix(h, v);
        for (double v : layer.bias) fnv_mix(h, v);
    }
    return h;
}

}  // namespace vicc

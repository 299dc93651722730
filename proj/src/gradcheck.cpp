#include "vicc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "vicc/config.hpp"
#include "vicc/error.hpp"
#include "vicc/sinkhorn.hpp"

namespace vicc {

namespace {

constexpr std::size_t kInputDim = 7;
constexpr std::size_t kEmbedDim = 5;
constexpr std::size_t kBatch = 6;
constexpr std::size_t kPrototypes = 4;

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = rng.normal();
    return m;
}

// Targets from a short Sinkhorn solve on the current scores, then held fixed.
Matrix fixed_targets(const EncoderParams& enc, const Matrix& x, const PrototypeBank& bank) {
    return sinkhorn_assign(prototype_scores(forward(enc, x).z, bank), SinkhornConfig{}).targets();
}

struct Problem {
    EncoderParams enc;                    // optimized encoder
    EncoderParams frozen;                 // cross-stream t encoder
    PrototypeBank bank;
    std::array<Matrix, 4> x;              // s_i, s_j, t_i, t_j
    std::array<Matrix, 4> q;
    LossMode mode = LossMode::single_stream;
    LossConfig loss;
};

LossOutput evaluate(const Problem& p, std::array<ForwardResult, 2>* tapes = nullptr) {
    auto fi = forward(p.enc, p.x[0]);
    auto fj = forward(p.enc, p.x[1]);
    LossOutput out;
    switch (p.mode) {
        case LossMode::infonce: out = infonce(fi.z, fj.z, p.loss.temperature); break;
        case LossMode::single_stream:
            out = single_stream_loss(fi.z, fj.z, p.bank, p.q[0], p.q[1], p.loss);
            break;
        case LossMode::cross_stream: {
            const Matrix zti = forward(p.frozen, p.x[2]).z;
            const Matrix ztj = forward(p.frozen, p.x[3]).z;
            out = cross_stream_loss(fi.z, fj.z, zti, ztj, p.bank, p.q[0], p.q[1], p.q[2], p.q[3],
                                    p.loss);
            break;
        }
    }
    if (tapes) *tapes = {std::move(fi), std::move(fj)};
    return out;
}

// Central difference of the loss over every entry of `param`.
std::vector<double> numeric_grad(Problem& p, std::span<double> param, double h) {
    std::vector<double> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + h;
        const double up = evaluate(p).value;
        param[i] = saved - h;
        const double down = evaluate(p).value;
        param[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

std::vector<double> to_vec(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

std::string mode_label(const Problem& p) {
    if (p.mode != LossMode::cross_stream) return to_string(p.mode);
    std::string label = "cross_stream/pred=" + to_string(p.loss.prediction_views) +
                        "/assign=" + to_string(p.loss.assignment_views);
    return label;
}

}  // namespace

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    if (analytic.size() != numeric.size()) throw InvalidArgument("relative_error: size mismatch");
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(std::max(na, nn));
    return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.rel_error);
    return m;
}

std::vector<GradCheckEntry> GradCheckReport::failures() const {
    std::vector<GradCheckEntry> out;
    for (const auto& e : entries)
        if (!(e.rel_error <= tolerance)) out.push_back(e);
    return out;
}

GradCheckReport run_grad_check(const GradCheckOptions& opts) {
    if (opts.seeds < 1) throw ConfigError("grad-check: seeds must be >= 1");
    if (!(opts.step > 0.0)) throw ConfigError("grad-check: step must be positive");

    GradCheckReport report;
    report.tolerance = opts.tolerance;
    bool flip_pending = opts.inject_sign_flip;

    std::vector<Problem> templates;
    for (LossMode mode : opts.modes) {
        Problem p;
        p.mode = mode;
        p.loss.mode = mode;
        if (mode != LossMode::cross_stream) {
            templates.push_back(p);
            continue;
        }
        for (auto pv : {PredictionViews::all_others, PredictionViews::other_stream_only}) {
            for (auto av : {AssignmentViews::both_streams, AssignmentViews::other_stream_only}) {
                p.loss.prediction_views = pv;
                p.loss.assignment_views = av;
                templates.push_back(p);
            }
        }
    }

    for (const Problem& tmpl : templates) {
        for (std::size_t depth = 0; depth < opts.depths.size(); ++depth) {
            for (int seed = 0; seed < opts.seeds; ++seed) {
                Rng rng(opts.seed * 1000003ULL + static_cast<std::uint64_t>(seed) * 7919ULL + depth);
                Problem p = tmpl;
                const auto& hidden = opts.depths[depth];
                p.enc = hidden.empty() ? EncoderParams::identity(kInputDim)
                                       : EncoderParams::init(kInputDim, hidden, kEmbedDim, rng);
                // Positive-leaning biases keep the ReLUs alive; nonzero values
                // also exercise the bias gradients off the origin.
                for (auto& layer : p.enc.layers)
                    for (double& b : layer.bias) b = 0.2 + 0.1 * rng.normal();
                const std::size_t d = p.enc.output_dim();
                p.frozen = EncoderParams::init(kInputDim, {16}, d, rng);
                p.bank = PrototypeBank::init(d, kPrototypes, rng);
                for (auto& x : p.x) x = random_matrix(kInputDim, kBatch, rng);
                p.q[0] = fixed_targets(p.enc, p.x[0], p.bank);
                p.q[1] = fixed_targets(p.enc, p.x[1], p.bank);
                p.q[2] = fixed_targets(p.frozen, p.x[2], p.bank);
                p.q[3] = fixed_targets(p.frozen, p.x[3], p.bank);

                std::array<ForwardResult, 2> tapes;
                const LossOutput out = evaluate(p, &tapes);
                if (p.mode == LossMode::cross_stream)
                    report.loss_terms_seen = std::max(report.loss_terms_seen, out.terms);
                EncoderGrads g = backward(p.enc, tapes[0].tape, out.grad_z[0]);
                const EncoderGrads gj = backward(p.enc, tapes[1].tape, out.grad_z[1]);
                const Matrix input_grad = g.input;
                g += gj;

                const std::string prefix = mode_label(p) + "/depth" + std::to_string(hidden.size()) +
                                           "/seed" + std::to_string(seed) + "/";
                auto compare = [&](const std::string& name, std::vector<double> analytic,
                                   std::span<double> param) {
                    if (flip_pending) {
                        for (double& v : analytic) v = -v;
                        flip_pending = false;
                    }
                    const auto numeric = numeric_grad(p, param, opts.step);
                    report.entries.push_back({prefix + name, relative_error(analytic, numeric),
                                              analytic.size()});
                };

                for (std::size_t l = 0; l < p.enc.layers.size(); ++l) {
                    compare("W" + std::to_string(l + 1), to_vec(g.weight[l]),
                            p.enc.layers[l].weight.values());
                    compare("b" + std::to_string(l + 1), g.bias[l], p.enc.layers[l].bias);
                }
                compare("x_i", to_vec(input_grad), p.x[0].values());
                if (p.mode != LossMode::infonce) compare("C", to_vec(out.grad_c), p.bank.c.values());
            }
        }
    }
    return report;
}

}  // namespace vicc

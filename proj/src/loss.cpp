#include "vicc/loss.hpp"

#include <cmath>
#include <string>

#include "vicc/error.hpp"

namespace vicc {

namespace {

constexpr double kTargetSumTolerance = 1e-6;

void check_targets(const Matrix& targets, std::size_t protos, std::size_t batch,
                   const char* name) {
    if (targets.rows() != protos || targets.cols() != batch) {
        throw InvalidArgument(std::string(name) + ": targets " + targets.shape() + " expected " +
                              std::to_string(protos) + "x" + std::to_string(batch));
    }
    for (std::size_t b = 0; b < batch; ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < protos; ++k) {
            if (targets(k, b) < 0.0) throw InvalidArgument(std::string(name) + ": negative target");
            s += targets(k, b);
        }
        if (std::abs(s - 1.0) > kTargetSumTolerance) {
            throw InvalidArgument(std::string(name) + ": target column " + std::to_string(b) +
                                  " sums to " + std::to_string(s) + ", expected 1");
        }
    }
}

// Per-view prediction state: log-probabilities under the bank and the
// accumulated score gradient.
struct ViewPrediction {
    Matrix log_p;
    Matrix grad_scores;
};

ViewPrediction predict(const FeatureMatrix& z, const PrototypeBank& bank, double temperature) {
    ViewPrediction v;
    v.log_p = log_softmax_cols(prototype_scores(z, bank), temperature);
    v.grad_scores = Matrix(v.log_p.rows(), v.log_p.cols());
    return v;
}

// Adds weight * l(z, target) and its score gradient to `view`.
double accumulate_term(ViewPrediction& view, const Matrix& target, double weight,
                       double temperature) {
    const std::size_t protos = view.log_p.rows();
    const std::size_t batch = view.log_p.cols();
    const double scale = weight / static_cast<double>(batch);
    double value = 0.0;
    for (std::size_t k = 0; k < protos; ++k) {
        for (std::size_t b = 0; b < batch; ++b) {
            const double lp = view.log_p(k, b);
            const double t = target(k, b);
            value -= t * lp;
            view.grad_scores(k, b) += scale * (std::exp(lp) - t) / temperature;
        }
    }
    return scale * value;
}

}  // namespace

void LossConfig::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("loss: temperature must be positive, got " + std::to_string(temperature));
    }
}

double prototype_cross_entropy(const FeatureMatrix& z, const PrototypeBank& bank,
                               const Matrix& targets, double temperature) {
    check_targets(targets, bank.size(), z.cols(), "prototype_cross_entropy");
    auto view = predict(z, bank, temperature);
    return accumulate_term(view, targets, 1.0, temperature);
}

LossOutput infonce(const FeatureMatrix& z_i, const FeatureMatrix& z_j, double temperature) {
    if (!z_i.same_shape(z_j)) {
        throw InvalidArgument("infonce: view shapes differ, " + z_i.shape() + " vs " + z_j.shape());
    }
    const std::size_t batch = z_i.cols();
    if (batch < 2) throw InvalidArgument("infonce: batch of " + std::to_string(batch) +
                                         " has no negatives");
    if (!(temperature > 0.0)) throw InvalidArgument("infonce: temperature must be positive");

    // sim(a, b) = z_i[:, a] . z_j[:, b]
    const Matrix sim = matmul_tn(z_i, z_j);
    const Matrix row_logp = transpose(log_softmax_cols(transpose(sim), temperature));
    const Matrix col_logp = log_softmax_cols(sim, temperature);

    const double scale = 0.5 / static_cast<double>(batch);
    LossOutput out;
    Matrix grad_sim(batch, batch);
    for (std::size_t a = 0; a < batch; ++a) {
        out.value -= scale * (row_logp(a, a) + col_logp(a, a));
        for (std::size_t b = 0; b < batch; ++b) {
            const double delta = a == b ? 1.0 : 0.0;
            grad_sim(a, b) = scale / temperature *
                             ((std::exp(row_logp(a, b)) - delta) + (std::exp(col_logp(a, b)) - delta));
        }
    }
    out.grad_z.push_back(matmul_nt(z_j, grad_sim));
    out.grad_z.push_back(matmul(z_i, grad_sim));
    out.terms = 2;
    return out;
}

LossOutput single_stream_loss(const FeatureMatrix& z_i, const FeatureMatrix& z_j,
                              const PrototypeBank& bank, const Matrix& q_i, const Matrix& q_j,
                              const LossConfig& cfg) {
    cfg.validate();
    if (!z_i.same_shape(z_j)) {
        throw InvalidArgument("single_stream_loss: view shapes differ, " + z_i.shape() + " vs " +
                              z_j.shape());
    }
    check_targets(q_i, bank.size(), z_i.cols(), "single_stream_loss q_i");
    check_targets(q_j, bank.size(), z_j.cols(), "single_stream_loss q_j");

    auto view_i = predict(z_i, bank, cfg.temperature);
    auto view_j = predict(z_j, bank, cfg.temperature);
    LossOutput out;
    out.value = accumulate_term(view_j, q_i, 0.5, cfg.temperature) +
                accumulate_term(view_i, q_j, 0.5, cfg.temperature);
    out.terms = 2;
    out.grad_z.push_back(matmul(bank.c, view_i.grad_scores));
    out.grad_z.push_back(matmul(bank.c, view_j.grad_scores));
    if (bank.frozen) {
        out.grad_c = Matrix(bank.c.rows(), bank.c.cols());
    } else {
        out.grad_c = matmul_nt(z_i, view_i.grad_scores);
        out.grad_c += matmul_nt(z_j, view_j.grad_scores);
    }
    return out;
}

std::vector<CrossTerm> cross_stream_terms(const LossConfig& cfg) {
    std::vector<CrossTerm> terms;
    for (View assignment : kAllViews) {
        const bool assigned_from_t = !same_stream(assignment, View::s_i);
        if (cfg.assignment_views == AssignmentViews::other_stream_only && !assigned_from_t) continue;
        for (View predictor : kAllViews) {
            if (predictor == assignment) continue;
            if (cfg.prediction_views == PredictionViews::other_stream_only &&
                same_stream(predictor, assignment))
                continue;
            terms.push_back({predictor, assignment});
        }
    }
    return terms;
}

LossOutput cross_stream_loss(const std::array<const FeatureMatrix*, 4>& z,
                             const PrototypeBank& bank_s,
                             const std::array<const Matrix*, 4>& targets, const LossConfig& cfg) {
    cfg.validate();
    for (int v = 0; v < 4; ++v) {
        if (!z[v]->same_shape(*z[0])) {
            throw InvalidArgument("cross_stream_loss: view " + std::to_string(v) + " has shape " +
                                  z[v]->shape() + ", expected " + z[0]->shape());
        }
        check_targets(*targets[v], bank_s.size(), z[0]->cols(), "cross_stream_loss");
    }

    const auto terms = cross_stream_terms(cfg);
    std::array<ViewPrediction, 4> views;
    std::array<bool, 4> used{};
    for (const auto& t : terms) used[static_cast<int>(t.predictor)] = true;
    for (int v = 0; v < 4; ++v)
        if (used[v]) views[v] = predict(*z[v], bank_s, cfg.temperature);

    LossOutput out;
    const double weight = 1.0 / static_cast<double>(terms.size());
    for (const auto& t : terms) {
        out.value += accumulate_term(views[static_cast<int>(t.predictor)],
                                     *targets[static_cast<int>(t.assignment)], weight,
                                     cfg.temperature);
    }
    out.terms = static_cast<int>(terms.size());

    out.grad_c = Matrix(bank_s.c.rows(), bank_s.c.cols());
    for (int v = 0; v < 4; ++v) {
        const bool optimized = v < 2;
        if (optimized && used[v]) {
            out.grad_z.push_back(matmul(bank_s.c, views[v].grad_scores));
        } else {
            out.grad_z.emplace_back(z[v]->rows(), z[v]->cols());
        }
        if (used[v] && !bank_s.frozen) out.grad_c += matmul_nt(*z[v], views[v].grad_scores);
    }
    return out;
}

}  // namespace vicc

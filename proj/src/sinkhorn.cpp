#include "vicc/sinkhorn.hpp"

#include <cmath>
#include <string>

#include "vicc/error.hpp"

namespace vicc {

namespace {
// exp() of anything beyond this overflows or loses the row entirely.
constexpr double kMaxExponent = 700.0;
}  // namespace

void SinkhornConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw ConfigError("sinkhorn: epsilon must be positive, got " + std::to_string(epsilon));
    }
    if (iterations < 1) {
        throw ConfigError("sinkhorn: iterations must be >= 1, got " + std::to_string(iterations));
    }
}

Matrix AssignmentMatrix::targets() const {
    Matrix t = q;
    std::vector<double> sums(t.cols(), 0.0);
    for (std::size_t k = 0; k < t.rows(); ++k)
        for (std::size_t b = 0; b < t.cols(); ++b) sums[b] += t(k, b);
    for (std::size_t k = 0; k < t.rows(); ++k)
        for (std::size_t b = 0; b < t.cols(); ++b) t(k, b) /= sums[b];
    return t;
}

AssignmentMatrix sinkhorn_assign(const Matrix& scores, const SinkhornConfig& cfg,
                                 SinkhornState* state) {
    cfg.validate();
    const std::size_t num_protos = scores.rows();
    const std::size_t num_cols = scores.cols();
    if (num_protos < 2) throw InvalidArgument("sinkhorn: need at least 2 prototypes");
    if (num_cols < 1) throw InvalidArgument("sinkhorn: need at least 1 sample column");
    if (!all_finite(scores)) throw InvalidArgument("sinkhorn: scores contain non-finite values");
    if (max_abs(scores) / cfg.epsilon > kMaxExponent) {
        throw InvalidArgument(
            "sinkhorn: exp(scores / epsilon) overflows; scores must be cosine similarities in "
            "[-1, 1] (unit-norm features and prototypes)");
    }

    Matrix q(num_protos, num_cols);
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        q.values()[i] = std::exp(scores.values()[i] / cfg.epsilon);
        total += q.values()[i];
    }
    q *= 1.0 / total;

    std::vector<double> alpha(num_protos, 1.0 / total);
    std::vector<double> beta(num_cols, 1.0);
    std::vector<double> row_sum(num_protos), col_sum(num_cols);
    const double row_target = 1.0 / static_cast<double>(num_protos);
    const double col_target = 1.0 / static_cast<double>(num_cols);

    for (int it = 0; it < cfg.iterations; ++it) {
        std::fill(row_sum.begin(), row_sum.end(), 0.0);
        for (std::size_t k = 0; k < num_protos; ++k)
            for (double v : q.row(k)) row_sum[k] += v;
        for (std::size_t k = 0; k < num_protos; ++k) {
            if (!(row_sum[k] > 0.0)) throw InvalidArgument("sinkhorn: prototype row underflowed");
            const double f = row_target / row_sum[k];
            alpha[k] *= f;
            for (double& v : q.row(k)) v *= f;
        }

        std::fill(col_sum.begin(), col_sum.end(), 0.0);
        for (std::size_t k = 0; k < num_protos; ++k) {
            auto row = q.row(k);
            for (std::size_t b = 0; b < num_cols; ++b) col_sum[b] += row[b];
        }
        for (std::size_t b = 0; b < num_cols; ++b) {
            if (!(col_sum[b] > 0.0)) throw InvalidArgument("sinkhorn: sample column underflowed");
            col_sum[b] = col_target / col_sum[b];
            beta[b] *= col_sum[b];
        }
        for (std::size_t k = 0; k < num_protos; ++k) {
            auto row = q.row(k);
            for (std::size_t b = 0; b < num_cols; ++b) row[b] *= col_sum[b];
        }
    }

    if (state) {
        state->alpha = std::move(alpha);
        state->beta = std::move(beta);
    }
    return {std::move(q), num_cols};
}

AssignmentMatrix sinkhorn_assign(const Matrix& batch_scores, const Matrix& queue_scores,
                                 const SinkhornConfig& cfg) {
    if (!cfg.include_queue || queue_scores.cols() == 0) return sinkhorn_assign(batch_scores, cfg);
    if (queue_scores.rows() != batch_scores.rows()) {
        throw InvalidArgument("sinkhorn: queue scores " + queue_scores.shape() +
                              " do not match batch scores " + batch_scores.shape());
    }
    auto full = sinkhorn_assign(hcat(batch_scores, queue_scores), cfg);
    return {col_range(full.q, 0, batch_scores.cols()), full.total_cols};
}

double assignment_entropy(const Matrix& q) {
    double h = 0.0;
    for (double v : q.values()) {
        if (v < 0.0) throw InvalidArgument("assignment_entropy: negative entry");
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

}  // namespace vicc

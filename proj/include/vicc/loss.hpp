#pragma once

#include <array>
#include <vector>

#include "vicc/matrix.hpp"
#include "vicc/model.hpp"

namespace vicc {

enum class LossMode { single_stream, cross_stream, infonce };
// Which views predict an assignment in the cross-stream loss.
enum class PredictionViews { all_others, other_stream_only };
// Which views' assignments are predicted in the cross-stream loss.
enum class AssignmentViews { both_streams, other_stream_only };

struct LossConfig {
    double temperature = 0.1;
    LossMode mode = LossMode::single_stream;
    PredictionViews prediction_views = PredictionViews::all_others;
    AssignmentViews assignment_views = AssignmentViews::both_streams;

    void validate() const;
};

struct LossOutput {
    double value = 0.0;
    // One entry per input feature matrix, in argument order.
    std::vector<Matrix> grad_z;
    // Gradient for the prototype bank; empty for InfoNCE, zero when frozen.
    Matrix grad_c;
    // Number of cross-entropy terms that entered the value.
    int terms = 0;
};

// Mean over the batch of -sum_k target(k, b) log softmax_k(C^T z_b / tau).
// Targets must have columns summing to one. This is the building block of
// every prototype loss below.
double prototype_cross_entropy(const FeatureMatrix& z, const PrototypeBank& bank,
                               const Matrix& targets, double temperature);

// Symmetrized InfoNCE between two augmented views. For each anchor column the
// positive is the matching column of the other view and the candidates are
// all columns of the other view.
LossOutput infonce(const FeatureMatrix& z_i, const FeatureMatrix& z_j, double temperature);

// Swapped prediction within one stream: 1/2 [l(z_j, q_i) + l(z_i, q_j)].
// q_i and q_j are per-sample target distributions (AssignmentMatrix::targets)
// and are treated as constants.
LossOutput single_stream_loss(const FeatureMatrix& z_i, const FeatureMatrix& z_j,
                              const PrototypeBank& bank, const Matrix& q_i, const Matrix& q_j,
                              const LossConfig& cfg);

// Views of the cross-stream loss, in the order used for grad_z.
enum class View { s_i = 0, s_j = 1, t_i = 2, t_j = 3 };
inline constexpr std::array<View, 4> kAllViews = {View::s_i, View::s_j, View::t_i, View::t_j};
inline bool same_stream(View a, View b) { return (static_cast<int>(a) < 2) == (static_cast<int>(b) < 2); }

// One (predictor, assignment) pair of the cross-stream loss.
struct CrossTerm {
    View predictor;
    View assignment;
};

// Terms enabled by the view configuration. Full mode yields all 12 pairs with
// predictor != assignment.
std::vector<CrossTerm> cross_stream_terms(const LossConfig& cfg);

// Cross-stream prototype prediction for optimized stream s with frozen stream
// t. Every assignment is predicted by the other views against bank_s and the
// terms are averaged. Gradients for the t views are zero.
LossOutput cross_stream_loss(const std::array<const FeatureMatrix*, 4>& z,
                             const PrototypeBank& bank_s,
                             const std::array<const Matrix*, 4>& targets, const LossConfig& cfg);

inline LossOutput cross_stream_loss(const FeatureMatrix& z_s_i, const FeatureMatrix& z_s_j,
                                    const FeatureMatrix& z_t_i, const FeatureMatrix& z_t_j,
                                    const PrototypeBank& bank_s, const Matrix& q_s_i,
                                    const Matrix& q_s_j, const Matrix& q_t_i, const Matrix& q_t_j,
                                    const LossConfig& cfg) {
    return cross_stream_loss({&z_s_i, &z_s_j, &z_t_i, &z_t_j}, bank_s,
                             {&q_s_i, &q_s_j, &q_t_i, &q_t_j}, cfg);
}

}  // namespace vicc

#pragma once

#include <vector>

#include "vicc/matrix.hpp"

namespace vicc {

struct SinkhornConfig {
    double epsilon = 0.05;  // entropic regularization
    int iterations = 3;
    bool include_queue = true;

    void validate() const;
};

// Soft assignment of B samples to K prototypes on the equipartition
// transportation polytope: rows sum to 1/K, columns sum to 1/total_cols.
// When a queue took part in the solve, q holds only the leading batch
// columns and total_cols counts batch plus queue.
struct AssignmentMatrix {
    Matrix q;
    std::size_t total_cols = 0;

    std::size_t prototypes() const { return q.rows(); }
    std::size_t batch() const { return q.cols(); }

    // Per-sample target distributions: each column of q rescaled to sum to 1.
    Matrix targets() const;
};

// Renormalization vectors of the solved plan, Q = Diag(alpha) K Diag(beta).
struct SinkhornState {
    std::vector<double> alpha;
    std::vector<double> beta;
};

// Solves max Tr(Q^T S) + eps H(Q) over the polytope by alternating row then
// column rescaling of exp(S / eps), finishing on a column step. Scores are
// expected to be cosine similarities; the result carries no dependence that
// the loss could differentiate through.
AssignmentMatrix sinkhorn_assign(const Matrix& scores, const SinkhornConfig& cfg,
                                 SinkhornState* state = nullptr);

// Same solve with extra queue columns appended to the batch. Only the batch
// columns are returned. An empty queue, or include_queue=false, reduces to
// the plain solve.
AssignmentMatrix sinkhorn_assign(const Matrix& batch_scores, const Matrix& queue_scores,
                                 const SinkhornConfig& cfg);

// -sum q log q with 0 log 0 = 0. Throws on negative entries.
double assignment_entropy(const Matrix& q);
inline double assignment_entropy(const AssignmentMatrix& a) { return assignment_entropy(a.q); }

}  // namespace vicc

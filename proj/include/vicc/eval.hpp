#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "vicc/data.hpp"
#include "vicc/matrix.hpp"

namespace vicc {

using Labels = std::vector<std::uint32_t>;

inline const std::vector<int> kDefaultRecallKs = {1, 5, 10, 20};

struct RetrievalReport {
    std::map<int, double> recall_at;

    double at(int k) const { return recall_at.at(k); }
};

// test x train cosine similarities of unit-norm feature columns.
Matrix retrieval_similarity(const Matrix& train_feats, const Matrix& test_feats);

// R@k from a precomputed test x train similarity matrix. A query counts as a
// hit when one of its k most similar training items shares its label; equal
// similarities rank the lower training index first.
RetrievalReport retrieval_from_similarity(const Matrix& similarity, const Labels& train_labels,
                                          const Labels& test_labels,
                                          const std::vector<int>& ks = kDefaultRecallKs);

RetrievalReport knn_retrieval(const Matrix& train_feats, const Labels& train_labels,
                              const Matrix& test_feats, const Labels& test_labels,
                              const std::vector<int>& ks = kDefaultRecallKs);

// Arithmetic mean of two per-stream score matrices (similarities or class
// probabilities), taken before ranking or argmax.
Matrix combine_streams(const Matrix& scores1, const Matrix& scores2);

// Multinomial logistic regression on standardized features, trained by
// accelerated full-batch gradient descent with an l2 penalty on the weights.
struct LogisticModel {
    Matrix weight;  // classes x (dim + 1), last column is the bias
    std::vector<double> mean, inv_std;
    int iterations = 0;
    double grad_norm = 0.0;
};

struct ProbeOptions {
    double reg = 1e-4;
    int max_iterations = 3000;
    double tolerance = 1e-6;  // max-abs gradient entry
};

LogisticModel fit_logistic(const Matrix& feats, const Labels& labels, std::uint32_t num_classes,
                           const ProbeOptions& opts = {});
// classes x N probabilities.
Matrix predict_proba(const LogisticModel& model, const Matrix& feats);
double top1_accuracy(const Matrix& class_scores, const Labels& labels);

double linear_probe(const Matrix& train_feats, const Labels& train_labels, const Matrix& test_feats,
                    const Labels& test_labels, double reg = 1e-4);

// Linear probe accuracy of each raw stream on each class factor.
struct FactorSeparability {
    // [stream][factor]: factor 0 is a (stream 1's own), factor 1 is b.
    double accuracy[2][2] = {};
};
FactorSeparability factor_separability(const DatasetSplit& split, std::uint32_t factor_b,
                                       double reg = 1e-4);

// Optimal assignment: result[row] = column, minimizing the summed cost.
std::vector<std::size_t> hungarian(const Matrix& cost);

struct ClusterReport {
    double acc = 0.0;
    double nmi = 0.0;
    double ari = 0.0;
    double mean_entropy = 0.0;
    double max_purity = 0.0;
};

// Cluster-vs-label agreement of hard assignments in [0, k_eval). NMI uses
// sqrt(H(U) H(V)) normalization. Empty clusters are skipped in the
// per-cluster means.
ClusterReport cluster_eval(std::span<const std::uint32_t> assign_hard, const Labels& labels,
                           std::uint32_t k_eval);

}  // namespace vicc

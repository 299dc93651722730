#include "vicc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vicc/error.hpp"

namespace vicc {

Matrix retrieval_similarity(const Matrix& train_feats, const Matrix& test_feats) {
    return matmul_tn(test_feats, train_feats);
}

RetrievalReport retrieval_from_similarity(const Matrix& similarity, const Labels& train_labels,
                                          const Labels& test_labels, const std::vector<int>& ks) {
    if (similarity.rows() != test_labels.size() || similarity.cols() != train_labels.size()) {
        throw InvalidArgument("retrieval: similarity " + similarity.shape() + " vs " +
                              std::to_string(test_labels.size()) + " queries and " +
                              std::to_string(train_labels.size()) + " training items");
    }
    int max_k = 0;
    for (int k : ks) {
        if (k < 1) throw InvalidArgument("retrieval: k must be >= 1");
        if (static_cast<std::size_t>(k) > train_labels.size()) {
            throw InvalidArgument("retrieval: k=" + std::to_string(k) + " exceeds training size " +
                                  std::to_string(train_labels.size()));
        }
        max_k = std::max(max_k, k);
    }

    // First rank (1-based) at which a same-class neighbour appears, or 0.
    std::vector<int> first_hit(test_labels.size(), 0);
    std::vector<std::size_t> order(train_labels.size());
    for (std::size_t q = 0; q < test_labels.size(); ++q) {
        auto sim = similarity.row(q);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto better = [&](std::size_t a, std::size_t b) {
            return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
        };
        std::partial_sort(order.begin(), order.begin() + max_k, order.end(), better);
        for (int r = 0; r < max_k; ++r) {
            if (train_labels[order[r]] == test_labels[q]) {
                first_hit[q] = r + 1;
                break;
            }
        }
    }

    RetrievalReport report;
    for (int k : ks) {
        std::size_t hits = 0;
        for (int h : first_hit)
            if (h > 0 && h <= k) ++hits;
        report.recall_at[k] =
            test_labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(test_labels.size());
    }
    return report;
}

RetrievalReport knn_retrieval(const Matrix& train_feats, const Labels& train_labels,
                              const Matrix& test_feats, const Labels& test_labels,
                              const std::vector<int>& ks) {
    if (train_feats.cols() != train_labels.size() || test_feats.cols() != test_labels.size()) {
        throw InvalidArgument("knn_retrieval: feature/label counts differ");
    }
    return retrieval_from_similarity(retrieval_similarity(train_feats, test_feats), train_labels,
                                     test_labels, ks);
}

Matrix combine_streams(const Matrix& scores1, const Matrix& scores2) {
    if (!scores1.same_shape(scores2)) {
        throw InvalidArgument("combine_streams: shapes differ, " + scores1.shape() + " vs " +
                              scores2.shape());
    }
    Matrix out(scores1.rows(), scores1.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.values()[i] = 0.5 * (scores1.values()[i] + scores2.values()[i]);
    return out;
}

namespace {

// Standardized features with a trailing constant row for the bias.
Matrix design_matrix(const Matrix& feats, const std::vector<double>& mean,
                     const std::vector<double>& inv_std) {
    Matrix x(feats.rows() + 1, feats.cols());
    for (std::size_t r = 0; r < feats.rows(); ++r)
        for (std::size_t c = 0; c < feats.cols(); ++c)
            x(r, c) = (feats(r, c) - mean[r]) * inv_std[r];
    for (std::size_t c = 0; c < feats.cols(); ++c) x(feats.rows(), c) = 1.0;
    return x;
}

}  // namespace

LogisticModel fit_logistic(const Matrix& feats, const Labels& labels, std::uint32_t num_classes,
                           const ProbeOptions& opts) {
    if (feats.cols() != labels.size()) throw InvalidArgument("linear probe: feature/label counts differ");
    if (labels.empty()) throw InvalidArgument("linear probe: empty training set");
    const bool single_class = std::all_of(labels.begin(), labels.end(),
                                          [&](std::uint32_t l) { return l == labels.front(); });
    if (single_class) throw InvalidArgument("linear probe: training set has a single class");
    for (auto l : labels)
        if (l >= num_classes) throw InvalidArgument("linear probe: label out of range");

    const std::size_t dim = feats.rows();
    const std::size_t n = feats.cols();
    LogisticModel model;
    model.mean.assign(dim, 0.0);
    model.inv_std.assign(dim, 1.0);
    for (std::size_t r = 0; r < dim; ++r) {
        double m = 0.0, sq = 0.0;
        for (double v : feats.row(r)) m += v;
        m /= static_cast<double>(n);
        for (double v : feats.row(r)) sq += (v - m) * (v - m);
        const double sd = std::sqrt(sq / static_cast<double>(n));
        model.mean[r] = m;
        model.inv_std[r] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    const Matrix x = design_matrix(feats, model.mean, model.inv_std);

    double mean_sq_norm = 0.0;
    for (double v : x.values()) mean_sq_norm += v * v;
    mean_sq_norm /= static_cast<double>(n);
    const double step = 1.0 / (0.5 * mean_sq_norm + opts.reg);

    Matrix w(num_classes, dim + 1);
    Matrix w_prev = w;
    Matrix look = w;
    double t_prev = 1.0;
    auto gradient = [&](const Matrix& at) {
        Matrix p = softmax_cols(matmul(at, x), 1.0);
        for (std::size_t c = 0; c < n; ++c) p(labels[c], c) -= 1.0;
        Matrix g = matmul_nt(p, x);
        g *= 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < num_classes; ++k)
            for (std::size_t r = 0; r < dim; ++r) g(k, r) += opts.reg * at(k, r);
        return g;
    };

    for (int it = 0; it < opts.max_iterations; ++it) {
        const Matrix g = gradient(look);
        model.iterations = it + 1;
        model.grad_norm = max_abs(g);
        if (model.grad_norm < opts.tolerance) {
            w = look;
            break;
        }
        w = look - g * step;
        // FISTA momentum
        const double t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
        look = w + (w - w_prev) * ((t_prev - 1.0) / t);
        w_prev = w;
        t_prev = t;
    }
    model.weight = std::move(w);
    return model;
}

Matrix predict_proba(const LogisticModel& model, const Matrix& feats) {
    if (feats.rows() + 1 != model.weight.cols()) {
        throw InvalidArgument("predict_proba: feature dim " + std::to_string(feats.rows()) +
                              " does not match model");
    }
    return softmax_cols(matmul(model.weight, design_matrix(feats, model.mean, model.inv_std)), 1.0);
}

double top1_accuracy(const Matrix& class_scores, const Labels& labels) {
    if (class_scores.cols() != labels.size()) throw InvalidArgument("accuracy: count mismatch");
    if (labels.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < class_scores.rows(); ++k)
            if (class_scores(k, c) > class_scores(best, c)) best = k;
        if (best == labels[c]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double linear_probe(const Matrix& train_feats, const Labels& train_labels, const Matrix& test_feats,
                    const Labels& test_labels, double reg) {
    std::uint32_t classes = 0;
    for (auto l : train_labels) classes = std::max(classes, l + 1);
    for (auto l : test_labels) classes = std::max(classes, l + 1);
    ProbeOptions opts;
    opts.reg = reg;
    const auto model = fit_logistic(train_feats, train_labels, classes, opts);
    return top1_accuracy(predict_proba(model, test_feats), test_labels);
}

FactorSeparability factor_separability(const DatasetSplit& split, std::uint32_t factor_b,
                                       double reg) {
    FactorSeparability out;
    auto factor_labels = [&](const Labels& labels, int factor) {
        Labels f;
        for (auto l : labels) f.push_back(factor == 0 ? factor_a_of(l, factor_b) : factor_b_of(l, factor_b));
        return f;
    };
    for (int s = 0; s < 2; ++s) {
        for (int f = 0; f < 2; ++f) {
            out.accuracy[s][f] =
                linear_probe(split.train.views[s], factor_labels(split.train.labels, f),
                             split.test.views[s], factor_labels(split.test.labels, f), reg);
        }
    }
    return out;
}

std::vector<std::size_t> hungarian(const Matrix& cost) {
    if (cost.rows() != cost.cols()) throw InvalidArgument("hungarian: cost must be square, got " + cost.shape());
    if (!all_finite(cost)) throw InvalidArgument("hungarian: non-finite cost");
    const std::size_t n = cost.rows();
    if (n == 0) return {};
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // Potentials formulation with 1-based rows/cols; column 0 is a sentinel.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> result(n);
    for (std::size_t j = 1; j <= n; ++j) result[match[j] - 1] = j - 1;
    return result;
}

namespace {
double comb2(double x) { return x * (x - 1.0) / 2.0; }

// Information quantities accumulate in extended precision and are rounded
// once, so closed-form cases such as log(M) come out exact.
long double entropy_of(const std::vector<double>& counts, double total) {
    long double h = 0.0L;
    for (double c : counts) {
        if (c > 0) {
            const long double p = static_cast<long double>(c) / total;
            h -= p * std::log(p);
        }
    }
    return h;
}
}  // namespace

ClusterReport cluster_eval(std::span<const std::uint32_t> assign_hard, const Labels& labels,
                           std::uint32_t k_eval) {
    if (assign_hard.size() != labels.size()) throw InvalidArgument("cluster_eval: count mismatch");
    if (labels.empty()) throw InvalidArgument("cluster_eval: no samples");
    std::uint32_t num_labels = 0;
    for (auto l : labels) num_labels = std::max(num_labels, l + 1);
    for (auto a : assign_hard) {
        if (a >= k_eval) throw InvalidArgument("cluster_eval: cluster id out of range");
    }

    // counts[label][cluster]
    Matrix counts(num_labels, k_eval);
    for (std::size_t i = 0; i < labels.size(); ++i) counts(labels[i], assign_hard[i]) += 1.0;
    const double n = static_cast<double>(labels.size());
    std::vector<double> label_tot(num_labels, 0.0), cluster_tot(k_eval, 0.0);
    for (std::size_t l = 0; l < num_labels; ++l)
        for (std::size_t k = 0; k < k_eval; ++k) {
            label_tot[l] += counts(l, k);
            cluster_tot[k] += counts(l, k);
        }

    ClusterReport rep;

    const std::size_t side = std::max<std::size_t>(num_labels, k_eval);
    Matrix cost(side, side);
    for (std::size_t l = 0; l < num_labels; ++l)
        for (std::size_t k = 0; k < k_eval; ++k) cost(k, l) = -counts(l, k);
    const auto match = hungarian(cost);
    double matched = 0.0;
    for (std::size_t k = 0; k < k_eval; ++k)
        if (match[k] < num_labels) matched += counts(match[k], k);
    rep.acc = matched / n;

    const long double h_labels = entropy_of(label_tot, n);
    const long double h_clusters = entropy_of(cluster_tot, n);
    long double mi = 0.0L;
    for (std::size_t l = 0; l < num_labels; ++l)
        for (std::size_t k = 0; k < k_eval; ++k) {
            const long double c = counts(l, k);
            if (c > 0) mi += (c / n) * std::log(c * n / (static_cast<long double>(label_tot[l]) * cluster_tot[k]));
        }
    if (h_labels == 0.0L && h_clusters == 0.0L) {
        rep.nmi = 1.0;
    } else if (h_labels == 0.0L || h_clusters == 0.0L) {
        rep.nmi = 0.0;
    } else {
        rep.nmi = std::clamp(static_cast<double>(mi / std::sqrt(h_labels * h_clusters)), 0.0, 1.0);
    }

    double index = 0.0, sum_labels = 0.0, sum_clusters = 0.0;
    for (std::size_t l = 0; l < num_labels; ++l)
        for (std::size_t k = 0; k < k_eval; ++k) index += comb2(counts(l, k));
    for (double t : label_tot) sum_labels += comb2(t);
    for (double t : cluster_tot) sum_clusters += comb2(t);
    const double expected = n < 2 ? 0.0 : sum_labels * sum_clusters / comb2(n);
    const double max_index = 0.5 * (sum_labels + sum_clusters);
    rep.ari = max_index == expected ? 1.0 : (index - expected) / (max_index - expected);

    std::size_t nonempty = 0;
    long double entropy_sum = 0.0L, purity_sum = 0.0L;
    for (std::size_t k = 0; k < k_eval; ++k) {
        if (cluster_tot[k] == 0) continue;
        ++nonempty;
        std::vector<double> col(num_labels);
        double best = 0.0;
        for (std::size_t l = 0; l < num_labels; ++l) {
            col[l] = counts(l, k);
            best = std::max(best, col[l]);
        }
        entropy_sum += entropy_of(col, cluster_tot[k]);
        purity_sum += static_cast<long double>(best) / cluster_tot[k];
    }
    rep.mean_entropy = static_cast<double>(entropy_sum / nonempty);
    rep.max_purity = static_cast<double>(purity_sum / nonempty);
    return rep;
}

}  // namespace vicc

#include "vicc/trainer.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include "json.hpp"

#include "vicc/error.hpp"

namespace vicc {

void TrainConfig::validate() const {
    if (stage1_epochs < 0 || cycle_epochs < 0 || cycles < 0 || proto_freeze_epochs < 0 ||
        queue_len < 0 || queue_start_epoch_stage1 < 0 || queue_start_epoch_stage2 < 0) {
        throw ConfigError("train: counts must be >= 0");
    }
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
        throw ConfigError("train: final_lr_fraction must be in (0, 1]");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (num_prototypes < 2) throw ConfigError("train: need at least 2 prototypes");
    if (embed_dim < 1) throw ConfigError("train: embed_dim must be >= 1");
    if (threads < 1) throw ConfigError("train: threads must be >= 1");
    loss.validate();
    sinkhorn.validate();
    augmentation.validate();
}

// ---------------------------------------------------------------- queue

FeatureQueue::FeatureQueue(std::size_t dim, std::size_t capacity)
    : dim_(dim), capacity_(capacity), data_(dim, capacity), tags_(capacity, 0) {}

void FeatureQueue::push(const Matrix& cols, std::span<const std::uint64_t> tags) {
    if (capacity_ == 0) return;
    if (cols.rows() != dim_) {
        throw InvalidArgument("queue: feature dim " + std::to_string(cols.rows()) + " vs " +
                              std::to_string(dim_));
    }
    if (!tags.empty() && tags.size() != cols.cols()) throw InvalidArgument("queue: tag count mismatch");
    for (std::size_t c = 0; c < cols.cols(); ++c) {
        for (std::size_t r = 0; r < dim_; ++r) data_(r, head_) = cols(r, c);
        tags_[head_] = tags.empty() ? 0 : tags[c];
        head_ = (head_ + 1) % capacity_;
        count_ = std::min(count_ + 1, capacity_);
    }
}

Matrix FeatureQueue::contents() const {
    Matrix out(dim_, count_);
    const std::size_t start = (head_ + capacity_ - count_) % std::max<std::size_t>(capacity_, 1);
    for (std::size_t i = 0; i < count_; ++i) {
        const std::size_t slot = (start + i) % capacity_;
        for (std::size_t r = 0; r < dim_; ++r) out(r, i) = data_(r, slot);
    }
    return out;
}

std::vector<std::uint64_t> FeatureQueue::tags() const {
    std::vector<std::uint64_t> out(count_);
    const std::size_t start = (head_ + capacity_ - count_) % std::max<std::size_t>(capacity_, 1);
    for (std::size_t i = 0; i < count_; ++i) out[i] = tags_[(start + i) % capacity_];
    return out;
}

// ---------------------------------------------------------------- optimizer

void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, const SgdParams& p) {
    if (!param.same_shape(grad) || !param.same_shape(velocity)) {
        throw InvalidArgument("sgd_step: shapes differ, param " + param.shape() + ", grad " +
                              grad.shape() + ", velocity " + velocity.shape());
    }
    auto pv = param.values();
    auto gv = grad.values();
    auto vv = velocity.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        vv[i] = p.momentum * vv[i] + gv[i] + p.weight_decay * pv[i];
        pv[i] -= p.lr * vv[i];
    }
}

void sgd_step(std::vector<double>& param, const std::vector<double>& grad,
              std::vector<double>& velocity, const SgdParams& p) {
    if (param.size() != grad.size() || param.size() != velocity.size()) {
        throw InvalidArgument("sgd_step: vector lengths differ");
    }
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = p.momentum * velocity[i] + grad[i] + p.weight_decay * param[i];
        param[i] -= p.lr * velocity[i];
    }
}

double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t total_steps) {
    if (total_steps <= 1) return lr;
    const double lr_min = lr * final_fraction;
    const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

void reset_optimizer(StreamState& st) {
    st.enc_velocity = EncoderGrads::zeros_like(st.enc);
    st.bank_velocity = Matrix(st.bank.c.rows(), st.bank.c.cols());
}

// Biases and prototypes are excluded from weight decay.
void update_encoder(StreamState& st, const EncoderGrads& g, double lr, const TrainConfig& cfg) {
    const SgdParams weights{lr, cfg.momentum, cfg.weight_decay};
    const SgdParams biases{lr, cfg.momentum, 0.0};
    for (std::size_t l = 0; l < st.enc.layers.size(); ++l) {
        sgd_step(st.enc.layers[l].weight, g.weight[l], st.enc_velocity.weight[l], weights);
        sgd_step(st.enc.layers[l].bias, g.bias[l], st.enc_velocity.bias[l], biases);
    }
}

void update_bank(StreamState& st, const Matrix& grad_c, double lr, const TrainConfig& cfg) {
    const SgdParams p{lr, cfg.momentum, 0.0};
    sgd_step(st.bank.c, grad_c, st.bank_velocity, p);
    st.bank.renormalize();
}

Matrix make_targets(const Matrix& scores, const Matrix& queue_scores, const TrainConfig& cfg) {
    if (cfg.targets == TargetKind::softmax) return softmax_cols(scores, cfg.sinkhorn.epsilon);
    return sinkhorn_assign(scores, queue_scores, cfg.sinkhorn).targets();
}

void count_argmax(const Matrix& targets, std::vector<double>& usage) {
    for (std::size_t b = 0; b < targets.cols(); ++b) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < targets.rows(); ++k)
            if (targets(k, b) > targets(best, b)) best = k;
        usage[best] += 1.0;
    }
}

double histogram_entropy(const std::vector<double>& usage) {
    double total = 0.0;
    for (double u : usage) total += u;
    if (total == 0.0) return 0.0;
    double h = 0.0;
    for (double u : usage)
        if (u > 0) h -= (u / total) * std::log(u / total);
    return h;
}

struct EpochPlan {
    std::size_t batch = 0;
    std::size_t steps = 0;
};

EpochPlan plan_epochs(const TwoStreamDataset& train, const TrainConfig& cfg) {
    if (train.size() == 0) throw InvalidArgument("train: empty dataset");
    EpochPlan plan;
    plan.batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), train.size());
    plan.steps = train.size() / plan.batch;
    return plan;
}

Matrix gather_augmented(const Matrix& view, std::span<const std::size_t> idx,
                        const AugmentationSpec& aug, Rng& rng) {
    return augment(select_cols(view, idx), aug, rng);
}

Rng phase_rng(const TrainConfig& cfg, int phase_index) {
    return Rng(cfg.seed).fork(1000 + static_cast<std::uint64_t>(phase_index));
}

// Two views on up to two threads. Gradients are always summed i then j.
std::pair<ForwardResult, ForwardResult> forward_pair(const EncoderParams& enc, const Matrix& x_i,
                                                     const Matrix& x_j, int threads) {
    if (threads > 1) {
        auto fut = std::async(std::launch::async, [&] { return forward(enc, x_j); });
        auto a = forward(enc, x_i);
        return {std::move(a), fut.get()};
    }
    auto a = forward(enc, x_i);
    auto b = forward(enc, x_j);
    return {std::move(a), std::move(b)};
}

EncoderGrads backward_pair(const EncoderParams& enc, const ForwardTape& tape_i,
                           const ForwardTape& tape_j, const Matrix& g_i, const Matrix& g_j,
                           int threads) {
    if (threads > 1) {
        auto fut = std::async(std::launch::async, [&] { return backward(enc, tape_j, g_j); });
        auto gi = backward(enc, tape_i, g_i);
        gi += fut.get();
        return gi;
    }
    auto gi = backward(enc, tape_i, g_i);
    gi += backward(enc, tape_j, g_j);
    return gi;
}

std::string stream_phase_name(const char* prefix, int stream) {
    return std::string(prefix) + "_s" + std::to_string(stream + 1);
}

}  // namespace

// ---------------------------------------------------------------- state

TrainState init_state(const TrainConfig& cfg, std::size_t dim1, std::size_t dim2) {
    cfg.validate();
    TrainState state;
    const std::array<std::size_t, 2> dims = {dim1, dim2};
    Rng root(cfg.seed);
    for (int s = 0; s < 2; ++s) {
        Rng rng = root.fork(static_cast<std::uint64_t>(s + 1));
        auto& st = state.streams[s];
        st.enc = EncoderParams::init(dims[s], cfg.hidden, cfg.embed_dim, rng);
        st.bank = PrototypeBank::init(cfg.embed_dim, cfg.num_prototypes, rng);
        reset_optimizer(st);
        st.queue = FeatureQueue(cfg.embed_dim, static_cast<std::size_t>(cfg.queue_len));
    }
    return state;
}

std::string MetricRecord::to_json() const {
    nlohmann::ordered_json j;
    j["phase"] = phase;
    j["epoch"] = epoch;
    j["loss"] = loss;
    j["lr"] = lr;
    j["queue_fill"] = queue_fill;
    j["proto_entropy"] = proto_entropy;
    if (eval) {
        j["r1_stream1"] = eval->r1_stream1;
        j["r1_stream2"] = eval->r1_stream2;
        j["r1_combined"] = eval->r1_combined;
    }
    return j.dump();
}

// ---------------------------------------------------------------- stage 1

void train_single_stream(TrainState& state, int stream, const DatasetSplit& data,
                         const TrainConfig& cfg, MetricLog* log) {
    cfg.validate();
    if (stream != 0 && stream != 1) throw InvalidArgument("train_single_stream: stream must be 0 or 1");
    if (!state.initialized()) throw InvalidArgument("train_single_stream: state is not initialized");
    const auto plan = plan_epochs(data.train, cfg);
    const std::size_t total_steps = plan.steps * static_cast<std::size_t>(cfg.stage1_epochs);
    Rng rng = phase_rng(cfg, state.phases_done);
    auto& st = state.streams[stream];
    reset_optimizer(st);
    st.queue = FeatureQueue(cfg.embed_dim, static_cast<std::size_t>(cfg.queue_len));
    const bool infonce_mode = cfg.loss.mode == LossMode::infonce;
    state.phase = stream_phase_name("stage1", stream);

    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        const auto perm = rng.permutation(data.train.size());
        const bool use_queue = cfg.queue_len > 0 && cfg.sinkhorn.include_queue &&
                               epoch >= cfg.queue_start_epoch_stage1;
        st.bank.frozen = epoch < cfg.proto_freeze_epochs;
        double loss_sum = 0.0;
        double lr = cfg.lr;
        std::vector<double> usage(st.bank.size(), 0.0);
        for (std::size_t b = 0; b < plan.steps; ++b, ++step) {
            std::span<const std::size_t> idx(perm.data() + b * plan.batch, plan.batch);
            const auto later = resample_clips(data.train, idx, cfg.augmentation.temporal_prob, rng);
            const Matrix x_i = gather_augmented(data.train.views[stream], idx, cfg.augmentation, rng);
            const Matrix x_j = augment(later[stream], cfg.augmentation, rng);
            auto [fi, fj] = forward_pair(st.enc, x_i, x_j, cfg.threads);
            lr = cosine_lr(cfg.lr, cfg.final_lr_fraction, step, total_steps);

            LossOutput out;
            if (infonce_mode) {
                out = infonce(fi.z, fj.z, cfg.loss.temperature);
            } else {
                const Matrix queue_scores =
                    use_queue ? prototype_scores(st.queue.contents(), st.bank) : Matrix();
                const Matrix q_i = make_targets(prototype_scores(fi.z, st.bank), queue_scores, cfg);
                const Matrix q_j = make_targets(prototype_scores(fj.z, st.bank), queue_scores, cfg);
                count_argmax(q_i, usage);
                out = single_stream_loss(fi.z, fj.z, st.bank, q_i, q_j, cfg.loss);
            }
            loss_sum += out.value;
            const auto grads =
                backward_pair(st.enc, fi.tape, fj.tape, out.grad_z[0], out.grad_z[1], cfg.threads);
            update_encoder(st, grads, lr, cfg);
            if (!infonce_mode && !st.bank.frozen) update_bank(st, out.grad_c, lr, cfg);
            if (use_queue) {
                st.queue.push(fi.z);
                st.queue.push(fj.z);
            }
            ++state.global_step;
        }
        if (log) {
            MetricRecord rec;
            rec.phase = state.phase;
            rec.epoch = epoch;
            rec.loss = plan.steps ? loss_sum / static_cast<double>(plan.steps) : 0.0;
            rec.lr = lr;
            rec.queue_fill = st.queue.size();
            rec.proto_entropy = histogram_entropy(usage);
            log->push_back(std::move(rec));
        }
    }
    st.bank.frozen = false;
    ++state.phases_done;
}

// ---------------------------------------------------------------- stage 2

void train_cross_stream_phase(TrainState& state, int s, const DatasetSplit& data,
                              const TrainConfig& cfg, const std::string& phase_name,
                              MetricLog* log) {
    cfg.validate();
    if (s != 0 && s != 1) throw InvalidArgument("train_cross_stream_phase: stream must be 0 or 1");
    if (!state.initialized()) {
        throw InvalidArgument("train_cross_stream_phase: state is not initialized");
    }
    const int t = 1 - s;
    const auto plan = plan_epochs(data.train, cfg);
    const std::size_t total_steps = plan.steps * static_cast<std::size_t>(cfg.cycle_epochs);
    Rng rng = phase_rng(cfg, state.phases_done);
    auto& st_s = state.streams[s];
    const auto& enc_t = state.streams[t].enc;
    reset_optimizer(st_s);
    st_s.bank.frozen = false;
    FeatureQueue queue_s(cfg.embed_dim, static_cast<std::size_t>(cfg.queue_len));
    FeatureQueue queue_t(cfg.embed_dim, static_cast<std::size_t>(cfg.queue_len));
    state.phase = phase_name;

    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.cycle_epochs; ++epoch) {
        const auto perm = rng.permutation(data.train.size());
        const bool use_queue = cfg.queue_len > 0 && cfg.sinkhorn.include_queue &&
                               epoch >= cfg.queue_start_epoch_stage2;
        st_s.bank.frozen = false;
        double loss_sum = 0.0;
        double lr = cfg.lr;
        std::vector<double> usage(st_s.bank.size(), 0.0);
        for (std::size_t b = 0; b < plan.steps; ++b, ++step) {
            std::span<const std::size_t> idx(perm.data() + b * plan.batch, plan.batch);
            // Stream-1 views are always drawn first so both phases consume
            // the generator identically.
            const auto later = resample_clips(data.train, idx, cfg.augmentation.temporal_prob, rng);
            std::array<Matrix, 4> x;
            x[0] = gather_augmented(data.train.views[0], idx, cfg.augmentation, rng);
            x[1] = augment(later[0], cfg.augmentation, rng);
            x[2] = gather_augmented(data.train.views[1], idx, cfg.augmentation, rng);
            x[3] = augment(later[1], cfg.augmentation, rng);
            const Matrix& xs_i = x[2 * s];
            const Matrix& xs_j = x[2 * s + 1];
            const Matrix& xt_i = x[2 * t];
            const Matrix& xt_j = x[2 * t + 1];

            auto [fi, fj] = forward_pair(st_s.enc, xs_i, xs_j, cfg.threads);
            const FeatureMatrix zt_i = forward(enc_t, xt_i).z;
            const FeatureMatrix zt_j = forward(enc_t, xt_j).z;
            lr = cosine_lr(cfg.lr, cfg.final_lr_fraction, step, total_steps);

            const Matrix qs_scores =
                use_queue ? prototype_scores(queue_s.contents(), st_s.bank) : Matrix();
            const Matrix qt_scores =
                use_queue ? prototype_scores(queue_t.contents(), st_s.bank) : Matrix();
            const Matrix q_s_i = make_targets(prototype_scores(fi.z, st_s.bank), qs_scores, cfg);
            const Matrix q_s_j = make_targets(prototype_scores(fj.z, st_s.bank), qs_scores, cfg);
            const Matrix q_t_i = make_targets(prototype_scores(zt_i, st_s.bank), qt_scores, cfg);
            const Matrix q_t_j = make_targets(prototype_scores(zt_j, st_s.bank), qt_scores, cfg);
            count_argmax(q_s_i, usage);

            const auto out = cross_stream_loss(fi.z, fj.z, zt_i, zt_j, st_s.bank, q_s_i, q_s_j,
                                               q_t_i, q_t_j, cfg.loss);
            loss_sum += out.value;
            const auto grads =
                backward_pair(st_s.enc, fi.tape, fj.tape, out.grad_z[0], out.grad_z[1], cfg.threads);
            update_encoder(st_s, grads, lr, cfg);
            if (!st_s.bank.frozen) update_bank(st_s, out.grad_c, lr * cfg.stage2_prototype_lr_scale, cfg);
            if (use_queue) {
                queue_s.push(fi.z);
                queue_s.push(fj.z);
                queue_t.push(zt_i);
                queue_t.push(zt_j);
            }
            ++state.global_step;
        }
        if (log) {
            MetricRecord rec;
            rec.phase = phase_name;
            rec.epoch = epoch;
            rec.loss = plan.steps ? loss_sum / static_cast<double>(plan.steps) : 0.0;
            rec.lr = lr;
            rec.queue_fill = queue_s.size();
            rec.proto_entropy = histogram_entropy(usage);
            log->push_back(std::move(rec));
        }
    }
    st_s.bank.frozen = false;
    ++state.phases_done;
}

// ---------------------------------------------------------------- pipeline

std::vector<std::string> pipeline_phases(int cycles) {
    std::vector<std::string> names = {"stage1_s1", "stage1_s2"};
    for (int c = 1; c <= cycles; ++c) {
        names.push_back("cycle" + std::to_string(c) + "_s1");
        names.push_back("cycle" + std::to_string(c) + "_s2");
    }
    return names;
}

EvalMetrics evaluate_retrieval(const TrainState& state, const DatasetSplit& data, bool pre_head) {
    std::array<Matrix, 2> sim;
    EvalMetrics m;
    for (int s = 0; s < 2; ++s) {
        const auto& enc = state.streams[s].enc;
        sim[s] = retrieval_similarity(embed(enc, data.train.views[s], pre_head),
                                      embed(enc, data.test.views[s], pre_head));
    }
    m.r1_stream1 = retrieval_from_similarity(sim[0], data.train.labels, data.test.labels, {1}).at(1);
    m.r1_stream2 = retrieval_from_similarity(sim[1], data.train.labels, data.test.labels, {1}).at(1);
    m.r1_combined = retrieval_from_similarity(combine_streams(sim[0], sim[1]), data.train.labels,
                                              data.test.labels, {1})
                        .at(1);
    return m;
}

namespace {
void log_phase_eval(const TrainState& state, const DatasetSplit& data, const TrainConfig& cfg,
                    MetricLog* log) {
    if (!log) return;
    MetricRecord rec;
    rec.phase = state.phase;
    rec.epoch = -1;
    if (!log->empty() && log->back().phase == state.phase) {
        rec.loss = log->back().loss;
        rec.lr = log->back().lr;
        rec.queue_fill = log->back().queue_fill;
        rec.proto_entropy = log->back().proto_entropy;
    }
    rec.eval = evaluate_retrieval(state, data, cfg.retrieval_pre_head);
    log->push_back(std::move(rec));
}
}  // namespace

void run_single_stage(TrainState& state, const TrainConfig& cfg, const DatasetSplit& data,
                      MetricLog* log) {
    for (int s = 0; s < 2; ++s) {
        train_single_stream(state, s, data, cfg, log);
        log_phase_eval(state, data, cfg, log);
    }
}

void run_cross_stage(TrainState& state, const TrainConfig& cfg, const DatasetSplit& data,
                     MetricLog* log) {
    if (!state.initialized() || state.phases_done < 2) {
        throw InvalidArgument("cross-stream stage needs a state that completed Stage 1");
    }
    if (cfg.fresh_prototypes) {
        Rng rng = Rng(cfg.seed).fork(77);
        for (auto& st : state.streams) st.bank = PrototypeBank::init(cfg.embed_dim, cfg.num_prototypes, rng);
    }
    const auto names = pipeline_phases(cfg.cycles);
    for (int c = 0; c < cfg.cycles; ++c) {
        for (int s = 0; s < 2; ++s) {
            train_cross_stream_phase(state, s, data, cfg, names[2 + 2 * c + s], log);
            log_phase_eval(state, data, cfg, log);
        }
    }
}

PipelineResult run_full_pipeline(const TrainConfig& cfg, const DatasetSplit& data,
                                 const std::function<void(const TrainState&)>& on_phase) {
    cfg.validate();
    PipelineResult res;
    res.state = init_state(cfg, data.train.dim(0), data.train.dim(1));
    for (int s = 0; s < 2; ++s) {
        train_single_stream(res.state, s, data, cfg, &res.log);
        log_phase_eval(res.state, data, cfg, &res.log);
        if (on_phase) on_phase(res.state);
    }
    if (cfg.fresh_prototypes) {
        Rng rng = Rng(cfg.seed).fork(77);
        for (auto& st : res.state.streams)
            st.bank = PrototypeBank::init(cfg.embed_dim, cfg.num_prototypes, rng);
    }
    const auto names = pipeline_phases(cfg.cycles);
    for (int c = 0; c < cfg.cycles; ++c) {
        for (int s = 0; s < 2; ++s) {
            train_cross_stream_phase(res.state, s, data, cfg, names[2 + 2 * c + s], &res.log);
            log_phase_eval(res.state, data, cfg, &res.log);
            if (on_phase) on_phase(res.state);
        }
    }
    return res;
}

// ---------------------------------------------------------------- diagnostics

double prototype_usage_entropy(const TrainState& state, int stream, const DatasetSplit& data,
                               const TrainConfig& cfg) {
    const auto& st = state.streams[stream];
    const FeatureMatrix z = embed(st.enc, data.test.views[stream]);
    std::vector<double> usage(st.bank.size(), 0.0);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), z.cols());
    for (std::size_t begin = 0; begin + batch <= z.cols(); begin += batch) {
        const Matrix scores = prototype_scores(col_range(z, begin, batch), st.bank);
        count_argmax(make_targets(scores, Matrix(), cfg), usage);
    }
    return histogram_entropy(usage);
}

std::vector<std::uint32_t> fit_eval_clusters(const EncoderParams& enc, const Matrix& train_x,
                                             const Matrix& eval_x, std::uint32_t k_eval,
                                             const TrainConfig& cfg, int epochs) {
    if (k_eval < 2) throw InvalidArgument("fit_eval_clusters: k_eval must be >= 2");
    const FeatureMatrix z_train = embed(enc, train_x);
    Rng rng = Rng(cfg.seed).fork(4242);
    StreamState st;
    st.enc = enc;
    st.bank = PrototypeBank::init(z_train.rows(), k_eval, rng);
    reset_optimizer(st);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), z_train.cols());
    const std::size_t steps = z_train.cols() / batch;
    const std::size_t total = steps * static_cast<std::size_t>(epochs);
    std::size_t step = 0;
    TrainConfig assign_cfg = cfg;
    assign_cfg.targets = TargetKind::sinkhorn;
    for (int e = 0; e < epochs; ++e) {
        const auto perm = rng.permutation(z_train.cols());
        for (std::size_t b = 0; b < steps; ++b, ++step) {
            std::span<const std::size_t> idx(perm.data() + b * batch, batch);
            const Matrix z = select_cols(z_train, idx);
            const Matrix q = make_targets(prototype_scores(z, st.bank), Matrix(), assign_cfg);
            const auto out = single_stream_loss(z, z, st.bank, q, q, cfg.loss);
            update_bank(st, out.grad_c, cosine_lr(cfg.lr, cfg.final_lr_fraction, step, total), cfg);
        }
    }
    const FeatureMatrix z_eval = embed(enc, eval_x);
    const auto q = sinkhorn_assign(prototype_scores(z_eval, st.bank), cfg.sinkhorn);
    std::vector<std::uint32_t> ids(z_eval.cols());
    for (std::size_t c = 0; c < z_eval.cols(); ++c) {
        std::uint32_t best = 0;
        for (std::uint32_t k = 1; k < k_eval; ++k)
            if (q.q(k, c) > q.q(best, c)) best = k;
        ids[c] = best;
    }
    return ids;
}

// ---------------------------------------------------------------- checkpoint

namespace {
std::string stream_key(int s) { return "stream" + std::to_string(s + 1); }
}  // namespace

TensorArchive to_archive(const TrainState& state) {
    TensorArchive ar;
    ar.add(Tensor::scalar("meta.phases_done", state.phases_done));
    ar.add(Tensor::scalar("meta.global_step", static_cast<double>(state.global_step)));
    for (int s = 0; s < 2; ++s) {
        const auto& st = state.streams[s];
        const std::string key = stream_key(s);
        ar.add(Tensor::scalar(key + ".enc.depth", static_cast<double>(st.enc.layers.size())));
        for (std::size_t l = 0; l < st.enc.layers.size(); ++l) {
            const std::string lk = key + ".enc.layer" + std::to_string(l);
            ar.add(Tensor::from_matrix(lk + ".weight", st.enc.layers[l].weight));
            ar.add(Tensor::from_vector(lk + ".bias", st.enc.layers[l].bias));
            ar.add(Tensor::from_matrix(key + ".opt.layer" + std::to_string(l) + ".weight",
                                       st.enc_velocity.weight.at(l)));
            ar.add(Tensor::from_vector(key + ".opt.layer" + std::to_string(l) + ".bias",
                                       st.enc_velocity.bias.at(l)));
        }
        ar.add(Tensor::from_matrix(key + ".prototypes", st.bank.c));
        ar.add(Tensor::from_matrix(key + ".opt.prototypes", st.bank_velocity));
    }
    return ar;
}

TrainState from_archive(const TensorArchive& ar) {
    TrainState state;
    state.phases_done = static_cast<int>(ar.get("meta.phases_done").values.at(0));
    state.global_step = static_cast<std::uint64_t>(ar.get("meta.global_step").values.at(0));
    for (int s = 0; s < 2; ++s) {
        auto& st = state.streams[s];
        const std::string key = stream_key(s);
        const auto depth = static_cast<std::size_t>(ar.get(key + ".enc.depth").values.at(0));
        for (std::size_t l = 0; l < depth; ++l) {
            const std::string lk = key + ".enc.layer" + std::to_string(l);
            DenseLayer layer{ar.get(lk + ".weight").to_matrix(), ar.get(lk + ".bias").values};
            if (layer.bias.size() != layer.weight.rows()) throw FormatError("checkpoint: bias size mismatch");
            if (l > 0 && layer.weight.cols() != st.enc.layers.back().weight.rows()) {
                throw FormatError("checkpoint: layer dims do not chain");
            }
            st.enc.layers.push_back(std::move(layer));
            st.enc_velocity.weight.push_back(
                ar.get(key + ".opt.layer" + std::to_string(l) + ".weight").to_matrix());
            st.enc_velocity.bias.push_back(ar.get(key + ".opt.layer" + std::to_string(l) + ".bias").values);
        }
        st.bank.c = ar.get(key + ".prototypes").to_matrix();
        st.bank_velocity = ar.get(key + ".opt.prototypes").to_matrix();
        if (!st.enc.layers.empty() && st.bank.dim() != st.enc.output_dim()) {
            throw FormatError("checkpoint: prototype dim does not match encoder output");
        }
    }
    if (state.phases_done >= 2) state.phase = "loaded";
    return state;
}

}  // namespace vicc

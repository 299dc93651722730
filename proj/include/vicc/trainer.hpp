#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vicc/checkpoint.hpp"
#include "vicc/data.hpp"
#include "vicc/eval.hpp"
#include "vicc/loss.hpp"
#include "vicc/model.hpp"
#include "vicc/sinkhorn.hpp"

namespace vicc {

// How per-view targets are produced from prototype scores. `softmax` is the
// ablation without the equipartition constraint.
enum class TargetKind { sinkhorn, softmax };

struct TrainConfig {
    // Schedule
    int stage1_epochs = 60;
    int cycle_epochs = 20;
    int cycles = 2;
    int batch_size = 128;
    double lr = 0.3;
    double final_lr_fraction = 1e-3;
    double weight_decay = 1e-6;
    double momentum = 0.9;
    int proto_freeze_epochs = 10;
    double stage2_prototype_lr_scale = 1.0;  // multiplies lr for C_s in Stage 2
    int queue_len = 512;
    int queue_start_epoch_stage1 = 30;
    int queue_start_epoch_stage2 = 5;
    std::uint64_t seed = 7;

    // Model
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t embed_dim = 128;
    std::size_t num_prototypes = 300;

    LossConfig loss;
    SinkhornConfig sinkhorn;
    AugmentationSpec augmentation;
    TargetKind targets = TargetKind::sinkhorn;
    bool fresh_prototypes = false;  // re-initialize C_s at the start of Stage 2
    bool retrieval_pre_head = true;
    int threads = 1;

    void validate() const;
};

// Fixed-capacity FIFO of feature columns; the oldest column is evicted first.
class FeatureQueue {
public:
    FeatureQueue() = default;
    FeatureQueue(std::size_t dim, std::size_t capacity);

    void push(const Matrix& cols, std::span<const std::uint64_t> tags = {});
    // Stored columns, oldest first.
    Matrix contents() const;
    std::vector<std::uint64_t> tags() const;
    std::size_t size() const { return count_; }
    std::size_t capacity() const { return capacity_; }
    void clear() { count_ = head_ = 0; }

private:
    std::size_t dim_ = 0;
    std::size_t capacity_ = 0;
    std::size_t count_ = 0;
    std::size_t head_ = 0;  // next write slot
    Matrix data_;
    std::vector<std::uint64_t> tags_;
};

struct SgdParams {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
};

// v <- momentum v + grad + weight_decay param; param <- param - lr v.
void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, const SgdParams& p);
void sgd_step(std::vector<double>& param, const std::vector<double>& grad,
              std::vector<double>& velocity, const SgdParams& p);

// Cosine decay from lr at step 0 to lr * final_fraction at the last step.
double cosine_lr(double lr, double final_fraction, std::size_t step, std::size_t total_steps);

struct StreamState {
    EncoderParams enc;
    PrototypeBank bank;
    EncoderGrads enc_velocity;
    Matrix bank_velocity;
    FeatureQueue queue;
};

struct TrainState {
    std::array<StreamState, 2> streams;
    int phases_done = 0;
    std::uint64_t global_step = 0;
    std::string phase = "init";

    bool initialized() const { return !streams[0].enc.layers.empty(); }
};

// Both encoders and banks from independent seed-derived generators.
TrainState init_state(const TrainConfig& cfg, std::size_t dim1, std::size_t dim2);

struct EvalMetrics {
    double r1_stream1 = 0.0;
    double r1_stream2 = 0.0;
    double r1_combined = 0.0;
};

struct MetricRecord {
    std::string phase;
    int epoch = -1;  // -1 marks the end-of-phase evaluation record
    double loss = 0.0;
    double lr = 0.0;
    std::size_t queue_fill = 0;
    double proto_entropy = 0.0;
    std::optional<EvalMetrics> eval;

    std::string to_json() const;
};

using MetricLog = std::vector<MetricRecord>;

// Stage 1 on one stream (0 or 1) for stage1_epochs.
void train_single_stream(TrainState& state, int stream, const DatasetSplit& data,
                         const TrainConfig& cfg, MetricLog* log = nullptr);

// One Stage-2 alternation optimizing stream s against the frozen other stream.
void train_cross_stream_phase(TrainState& state, int s, const DatasetSplit& data,
                              const TrainConfig& cfg, const std::string& phase_name,
                              MetricLog* log = nullptr);

// Phase names in execution order: stage1_s1, stage1_s2, cycle1_s1, ...
std::vector<std::string> pipeline_phases(int cycles);

struct PipelineResult {
    TrainState state;
    MetricLog log;
};

// Stage 1 on both streams, then `cycles` alternations. Every phase ends with a
// retrieval evaluation record. `on_phase` runs after each phase.
PipelineResult run_full_pipeline(const TrainConfig& cfg, const DatasetSplit& data,
                                 const std::function<void(const TrainState&)>& on_phase = {});

// Stage 1 on both streams of a fresh state, each followed by an evaluation record.
void run_single_stage(TrainState& state, const TrainConfig& cfg, const DatasetSplit& data,
                      MetricLog* log = nullptr);

// Runs only the Stage-2 cycles on a state that completed Stage 1.
void run_cross_stage(TrainState& state, const TrainConfig& cfg, const DatasetSplit& data,
                     MetricLog* log = nullptr);

EvalMetrics evaluate_retrieval(const TrainState& state, const DatasetSplit& data, bool pre_head);

// Entropy of the rounded assignment histogram over the test split, using the
// configured target mechanism in batches of batch_size.
double prototype_usage_entropy(const TrainState& state, int stream, const DatasetSplit& data,
                               const TrainConfig& cfg);

// Trains a fresh k_eval-prototype bank on frozen head features with the
// swapped-prediction loss (encoder untouched) and returns argmax-of-Q cluster
// ids for `eval_x`.
std::vector<std::uint32_t> fit_eval_clusters(const EncoderParams& enc, const Matrix& train_x,
                                             const Matrix& eval_x, std::uint32_t k_eval,
                                             const TrainConfig& cfg, int epochs = 20);

TensorArchive to_archive(const TrainState& state);
TrainState from_archive(const TensorArchive& archive);

}  // namespace vicc

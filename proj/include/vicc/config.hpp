#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vicc/data.hpp"
#include "vicc/trainer.hpp"

namespace vicc {

struct EvalOptions {
    std::vector<int> ks = {1, 5, 10, 20};
    double probe_reg = 1e-4;
    std::uint32_t k_eval = 0;  // 0: number of classes in the dataset
    int cluster_epochs = 20;
};

// Everything a run needs. JSON layout:
//   { "data": {...}, "train": {...}, "loss": {...}, "sinkhorn": {...},
//     "augmentation": {...}, "eval": {...} }
// Every section and key is optional; unknown keys are rejected.
struct RunConfig {
    SyntheticSpec data;
    TrainConfig train;
    EvalOptions eval;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

// Sets one dotted key, e.g. "train.lr" to "0.1". The value is parsed as JSON
// and taken as a plain string when that fails.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

std::string to_string(LossMode m);
std::string to_string(PredictionViews v);
std::string to_string(AssignmentViews v);
std::string to_string(TargetKind t);

}  // namespace vicc

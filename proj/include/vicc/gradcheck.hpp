#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vicc/loss.hpp"

namespace vicc {

// Central finite-difference verification of the analytic gradients of every
// loss, taken end to end through the encoder (weights, biases, the input and
// the output normalization) and, for prototype losses, the bank.
struct GradCheckOptions {
    std::vector<LossMode> modes = {LossMode::infonce, LossMode::single_stream,
                                   LossMode::cross_stream};
    // Hidden layer widths per checked encoder; {} is the bare normalization.
    std::vector<std::vector<std::size_t>> depths = {{}, {12}, {12, 8}};
    int seeds = 10;
    std::uint64_t seed = 1;
    double step = 1e-5;
    double tolerance = 1e-4;
    // Debug hook: negates the analytic gradient of the first checked tensor so
    // the check must fail.
    bool inject_sign_flip = false;
};

// One compared tensor. The error is ||analytic - numeric|| / max(||analytic||,
// ||numeric||) in the Euclidean norm, and 0 when both vanish.
struct GradCheckEntry {
    std::string name;  // e.g. "cross_stream/full/depth2/seed3/W1"
    double rel_error = 0.0;
    std::size_t entries = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;
    int loss_terms_seen = 0;  // largest term count among cross-stream cases

    double max_rel_error() const;
    std::vector<GradCheckEntry> failures() const;
    bool passed() const { return failures().empty(); }
};

GradCheckReport run_grad_check(const GradCheckOptions& opts);

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

}  // namespace vicc

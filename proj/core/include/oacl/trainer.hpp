#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oacl/adapters.hpp"
#include "oacl/autodiff.hpp"
#include "oacl/backbone.hpp"
#include "oacl/metrics.hpp"
#include "oacl/optim.hpp"
#include "oacl/tasks.hpp"

namespace oacl {

enum class Variant {
    oa_adapter,  ///< trainable mask, orthogonality penalty
    o_adapter,   ///< mask fixed at ones, orthogonality penalty
    inc_adapter, ///< trainable mask, no orthogonality penalty
};
enum class ThresholdMode { dynamic, fixed };

Variant parse_variant(const std::string& text);
std::string to_string(Variant v);
ThresholdMode parse_threshold_mode(const std::string& text);
std::string to_string(ThresholdMode m);

/// Smallest value τ may take after an optimizer step.
inline constexpr double kTauFloor = 1e-8;

struct TrainConfig {
    Variant variant = Variant::oa_adapter;
    ThresholdMode threshold_mode = ThresholdMode::dynamic;
    double tau_init = 1e-4;
    double lambda_orth = 1.0;
    double lambda_l2 = 0.1;
    std::size_t r_max = 16;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 5;
    std::uint64_t seed = 0;
    double g_init = 1.0;
    double w2_init_scale = 1e-3;
    /// Steps between curve evaluations; 0 disables curves.
    std::size_t eval_every = 25;

    /// λ_orth actually applied: zero for inc_adapter.
    double effective_lambda_orth() const { return variant == Variant::inc_adapter ? 0.0 : lambda_orth; }
    AdapterInit adapter_init() const;
    /// Domain checks (non-negative weights, r_max ≥ 1, ...). With strict_grid
    /// the tuned hyperparameters must also come from their published grids.
    /// Throws ConfigError naming the field.
    void validate(bool strict_grid = false) const;
};

struct LossParts {
    Var total;
    double task = 0.0; ///< mean cross-entropy
    double orth = 0.0; ///< Σ pair losses, measured even when not applied
    double l2 = 0.0;   ///< Σ_layers ‖γ‖² of the open task
};

/// CE + λ_orth·Σ_{s<t} L_orth + λ₂·Σ_layers ‖γ_t‖² on the open task.
LossParts total_loss(Tape& tape, Var logits, std::span<const int> labels, AdapterStack& stack,
                     const TrainConfig& config);

/// Raises every trainable τ of the open task to at least kTauFloor.
void clamp_thresholds(AdapterStack& stack);

struct TaskTrainReport {
    int task_id = 0;
    double final_task_loss = 0.0; ///< mean CE over the full training split
    double final_orth_loss = 0.0;
    std::vector<std::size_t> r_eff_per_layer;
    std::vector<double> tau_per_layer;
    std::size_t steps = 0;
    double wall_time = 0.0; ///< seconds
};

/// Called after every optimizer step with the task-local step count.
using StepHook = std::function<void(std::size_t step)>;

/// Trains the open task on its training split, then closes it.
TaskTrainReport train_task(Backbone& backbone, AdapterStack& stack, const TaskDataset& task,
                           const TrainConfig& config, const StepHook& after_step = {});

struct CurvePoint {
    std::size_t step = 0; ///< global step across the sequence
    int trained_task = 0; ///< task being trained when evaluated
    int eval_task = 0;
    double accuracy = 0.0;
};

struct SequenceResult {
    AccuracyMatrix matrix;
    std::vector<TaskTrainReport> reports;
    std::vector<CurvePoint> curves;
    AdapterStack stack;
};

/// For each task in stream order: begin_task, train_task, then evaluate the
/// composed model on every task's test split to fill that column of the
/// accuracy matrix (rows below the diagonal are flagged pre-training).
SequenceResult run_sequence(Backbone& backbone, const TaskStream& stream, const TrainConfig& config);

} // namespace oacl

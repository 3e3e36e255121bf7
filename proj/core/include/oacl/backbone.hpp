#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oacl/adapters.hpp"
#include "oacl/autodiff.hpp"
#include "oacl/matrix.hpp"
#include "oacl/orthogonality.hpp"
#include "oacl/rng.hpp"
#include "oacl/tasks.hpp"

namespace oacl {

struct BackboneShape {
    std::size_t input_dim = 32;
    std::size_t dim = 64;
    std::size_t layers = 4;
    std::size_t classes = 8;
};

/// Bias-free tanh MLP: h₀ = tanh(E·x), u_l = H_l·h_{l−1}, h_l = tanh(u_l),
/// logits = head·h_L. Adapters attach to each u_l.
struct Backbone {
    Param embed;               ///< d × d_in
    std::vector<Param> hidden; ///< L of d × d
    Param head;                ///< C × d

    /// Set when pretraining ran zero steps and the weights are random.
    bool pretrain_warning = false;
    double pretrain_accuracy = 0.0;
    std::size_t pretrain_steps = 0;

    static Backbone random(const BackboneShape& shape, Rng& rng);

    BackboneShape shape() const;
    std::size_t dim() const { return embed.value.rows(); }
    std::size_t input_dim() const { return embed.value.cols(); }
    std::size_t layers() const { return hidden.size(); }
    std::size_t classes() const { return head.value.rows(); }

    std::vector<Param*> params();
    void freeze();
    bool is_frozen() const;
};

/// Adapters per insertion point, one column per task. Tasks 1..t−1 are frozen
/// and task t (if begun) is trainable.
class AdapterStack {
public:
    AdapterStack() = default;
    AdapterStack(std::size_t layers, std::size_t dim) : layers_(layers), dim_(dim) {}

    /// Freezes everything already present and appends a fresh adapter at
    /// every insertion point. Throws ProtocolError if a task is still open.
    void begin_task(int task_id, std::size_t r_max, const AdapterInit& init, std::uint64_t seed);
    /// Freezes the open task and caches its activated bases.
    void end_task();

    /// Appends an already-built task column (used by checkpoint loading and
    /// tests). Frozen columns get their bases computed immediately.
    void push_task(int task_id, std::vector<OAAdapter> adapters);

    bool has_open_task() const { return open_; }
    std::size_t num_tasks() const { return task_ids_.size(); }
    std::size_t layers() const { return layers_; }
    std::size_t dim() const { return dim_; }
    int task_id(std::size_t index) const { return task_ids_[index]; }

    OAAdapter& adapter(std::size_t task_index, std::size_t layer) { return adapters_[task_index][layer]; }
    const OAAdapter& adapter(std::size_t task_index, std::size_t layer) const {
        return adapters_[task_index][layer];
    }
    /// Only available for frozen tasks.
    const ActivatedBasis& basis(std::size_t task_index, std::size_t layer) const;

    /// Params of the open task's adapters (empty if none is open).
    std::vector<Param*> open_params();
    std::vector<Param*> all_params();

private:
    std::size_t layers_ = 0;
    std::size_t dim_ = 0;
    bool open_ = false;
    std::vector<int> task_ids_;
    std::vector<std::vector<OAAdapter>> adapters_;     ///< [task][layer]
    std::vector<std::vector<ActivatedBasis>> bases_;   ///< [task][layer], frozen tasks only
};

/// Logits (B×C) for a batch (B×d_in) with every task's adapter residual
/// summed at each insertion point. No task identifier is involved.
Var forward(Tape& tape, Backbone& backbone, AdapterStack& stack, const Matrix2D& x);
Matrix2D forward(const Backbone& backbone, const AdapterStack& stack, const Matrix2D& x);

struct PretrainOptions {
    std::size_t max_steps = 3000;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    std::size_t eval_every = 50;
    double target_accuracy = 0.90;
    double failure_accuracy = 0.60;
};

/// Trains all backbone weights on base-distribution data with Adam, stopping
/// once held-out accuracy reaches the target, then freezes. Throws
/// PretrainingError if held-out accuracy is below the failure floor when the
/// step budget runs out. Zero steps returns a frozen random net with
/// pretrain_warning set.
Backbone build_and_pretrain(std::uint64_t seed, const BackboneShape& shape, const Split& train,
                            const Split& held_out, const PretrainOptions& options = {});

} // namespace oacl

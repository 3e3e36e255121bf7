#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oacl/matrix.hpp"

namespace oacl {

/// A learnable tensor. Frozen params never receive gradient and are skipped
/// by optimizers.
struct Param {
    Matrix2D value;
    Matrix2D grad;
    bool frozen = false;
    std::string name;

    Param() = default;
    explicit Param(Matrix2D v, std::string n = {})
        : value(std::move(v)), grad(value.rows(), value.cols()), name(std::move(n)) {}

    void zero_grad() { grad = Matrix2D(value.rows(), value.cols()); }
};

using NodeId = std::size_t;
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    NodeId id() const { return id_; }
    const Matrix2D& value() const;
    /// Value of a 1×1 node.
    double scalar() const;

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

/// Define-by-run record of executed operations. Built fresh for every forward
/// pass; not shareable across threads.
class Tape {
public:
    /// Receives the tape and the id of the node being differentiated; reads
    /// that node's grad and accumulates into its inputs.
    using BackwardFn = std::function<void(Tape&, NodeId)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Param& p);
    Var constant(Matrix2D value);
    Var record(Matrix2D value, std::vector<NodeId> inputs, BackwardFn backward);

    /// Reverse sweep from a 1×1 loss node. Tape grads are reset first;
    /// unfrozen Param grads are accumulated into (not overwritten).
    void backward(Var loss);

    const Matrix2D& value(NodeId id) const { return nodes_[id].value; }
    /// Upstream gradient of a node during/after backward (empty if unreached).
    const Matrix2D& grad(NodeId id) const { return nodes_[id].grad; }
    void accumulate(NodeId id, const Matrix2D& g);
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Soft-threshold ops append their active pattern here so gradient checks
    /// can detect perturbations that cross a kink.
    void note_active_pattern(std::span<const std::uint8_t> pattern);
    const std::vector<std::uint8_t>& active_signature() const { return signature_; }

private:
    struct Node {
        Matrix2D value;
        Matrix2D grad;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        Param* param = nullptr;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::uint8_t> signature_;
};

namespace ad {

Var matmul(Var a, Var b);
/// a · bᵀ
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1×n row to every row of a (m×n).
Var add_row(Var a, Var row);
/// Multiplies column j of a (m×n) by v[j], v being 1×n.
Var scale_columns(Var a, Var v);
Var tanh(Var a);
Var sum(Var a);
Var sum_squares(Var a);
/// Elementwise sign(g)·max(|g|−τ, 0) with g 1×n and τ 1×1; |g_i| = τ counts
/// as inactive.
Var soft_threshold(Var g, Var tau);
/// Mean softmax cross-entropy of logits (B×C) against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

} // namespace ad

struct GradCheckOptions {
    /// 0 checks every coordinate; otherwise a seeded sample per param.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

using LossClosure = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central differences. The error of
/// a coordinate is |analytic − numeric| / max(1, |numeric|). Coordinates whose
/// ±eps perturbation changes any soft-threshold active set are skipped and
/// counted. Frozen params are not checked. Leaves analytic grads in params.
GradCheckReport check_gradients(const LossClosure& closure, std::span<Param* const> params, double eps,
                                const GradCheckOptions& options = {});

} // namespace oacl

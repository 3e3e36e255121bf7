#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oacl/autodiff.hpp"
#include "oacl/matrix.hpp"
#include "oacl/rng.hpp"
#include "oacl/soft_threshold.hpp"

namespace oacl {

/// How an OA-Adapter turns (g, τ) into its diagonal mask.
enum class GateMode {
    soft_threshold, ///< γ = soft(g; τ)
    identity,       ///< γ ≡ 1, g and τ untrainable (O-Adapter ablation)
};

struct AdapterInit {
    double tau = 1e-4;
    double g = 1.0;
    double w2_scale = 1e-3;
    GateMode gate_mode = GateMode::soft_threshold;
    /// Keep τ at its initial value for the whole task.
    bool fixed_threshold = false;
};

/// Bias-free bottleneck adapter y = x + W2·diag(γ)·W1·x whose effective width
/// is the number of nonzero gates.
struct OAAdapter {
    Param w1;  ///< r_max × d down-projection
    Param w2;  ///< d × r_max up-projection
    Param g;   ///< 1 × r_max gate logits
    Param tau; ///< 1 × 1 threshold, shared by all gates of this module
    GateMode gate_mode = GateMode::soft_threshold;

    static OAAdapter initialized(std::size_t d, std::size_t r_max, const AdapterInit& init, Rng& rng);

    std::size_t dim() const { return w2.value.rows(); }
    std::size_t r_max() const { return w1.value.rows(); }
    double tau_value() const { return tau.value[0]; }

    std::vector<double> gamma() const;
    bool is_frozen() const { return w1.frozen && w2.frozen; }
    void freeze();
    /// All four params; trainability is expressed through their frozen flags.
    std::vector<Param*> params();
};

struct StandardAdapter {
    Param w1; ///< r × d
    Param b1; ///< 1 × r
    Param w2; ///< d × r
    Param b2; ///< 1 × d

    static StandardAdapter initialized(std::size_t d, std::size_t r, double w2_scale, Rng& rng);
    std::vector<Param*> params() { return {&w1, &b1, &w2, &b2}; }
};

struct MaskSnapshot {
    std::vector<double> gamma;
    std::vector<std::size_t> active_indices;
    std::size_t r_eff = 0;
};

MaskSnapshot snapshot_mask(const OAAdapter& adapter);

/// Tape node for the adapter's mask: soft threshold of (g, τ) or constant ones.
Var gate(Tape& tape, OAAdapter& adapter);

/// Residual W2·Γ·W1·x for a batch x (B×d, one sample per row), recorded on tape.
Var oa_residual(Tape& tape, OAAdapter& adapter, Var x);
Var oa_forward(Tape& tape, OAAdapter& adapter, Var x);

/// Tape-free evaluation, used for inference and as cross-check oracles.
Matrix2D oa_residual(const OAAdapter& adapter, const Matrix2D& x);
Matrix2D oa_forward(const OAAdapter& adapter, const Matrix2D& x);
std::vector<double> oa_forward(const OAAdapter& adapter, std::span<const double> x);

/// y = x + Σ_i γ_i·(W2[:,i] ⊗ W1[i,:])·x, assembling the d×d update from
/// rank-one terms. Same function as oa_forward by a different route.
Matrix2D outer_product_form(const OAAdapter& adapter, const Matrix2D& x);
std::vector<double> outer_product_form(const OAAdapter& adapter, std::span<const double> x);

/// y = x + W2·tanh(W1·x + b1) + b2
Var std_forward(Tape& tape, StandardAdapter& adapter, Var x);
Matrix2D std_forward(const StandardAdapter& adapter, const Matrix2D& x);

} // namespace oacl

#pragma once

#include <cstddef>
#include <vector>

#include "oacl/adapters.hpp"
#include "oacl/autodiff.hpp"
#include "oacl/matrix.hpp"

namespace oacl {

class AdapterStack;

/// Up-projection columns of a frozen adapter that are switched on, each
/// scaled by its gate: column k is γ_j·W2[:, j] for the k-th active j.
struct ActivatedBasis {
    int task_id = 0;
    Matrix2D w2_tilde; ///< d × r_eff
    std::vector<std::size_t> active_indices;

    std::size_t r_eff() const { return w2_tilde.cols(); }
    bool empty() const { return w2_tilde.cols() == 0; }
};

/// Throws ProtocolError if the adapter is still trainable.
ActivatedBasis activated_basis(const OAAdapter& adapter, int task_id = 0);

/// ‖W2_tᵀ·W̃2_s‖²_F: the sum of squared inner products between every column
/// of the current up-projection and every activated historical column.
double orth_loss_pair(const Matrix2D& w2_t, const ActivatedBasis& basis);
Var orth_loss_pair(Var w2_t, const ActivatedBasis& basis);

/// Σ over insertion points and frozen tasks s < t of orth_loss_pair against
/// the active task's W2. Zero when the active task is the first.
double orth_loss_total(const AdapterStack& stack);
Var orth_loss_total(Tape& tape, AdapterStack& stack);

/// ‖W2_tᵀ·W̃2_s‖_F / (‖W2_t‖_F·‖W̃2_s‖_F), or 0 if either norm is 0.
double overlap_diagnostic(const Matrix2D& w2_t, const ActivatedBasis& basis);

struct OverlapEntry {
    int task_t = 0;
    int task_s = 0;
    std::size_t layer = 0;
    double overlap = 0.0;
};

/// Overlap of every adapter's full W2 against each earlier task's activated
/// basis at the same insertion point, over a stack whose tasks are all frozen.
std::vector<OverlapEntry> overlap_table(const AdapterStack& stack);

} // namespace oacl

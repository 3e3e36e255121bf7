#include "oacl/orthogonality.hpp"

#include <cmath>
#include <string>

#include "oacl/backbone.hpp"
#include "oacl/errors.hpp"

namespace oacl {

using ad::operator+;
using ad::operator*;

namespace {

void require_rows(std::size_t w2_rows, const ActivatedBasis& basis, const char* op) {
    if (basis.w2_tilde.rows() != 0 && w2_rows != basis.w2_tilde.rows()) {
        throw DimensionError(std::string(op) + ": current W2 has " + std::to_string(w2_rows) +
                             " rows, historical basis has " + std::to_string(basis.w2_tilde.rows()));
    }
}

void require_open(const AdapterStack& stack) {
    if (!stack.has_open_task()) throw ProtocolError("orth_loss_total needs an open task");
}

} // namespace

ActivatedBasis activated_basis(const OAAdapter& adapter, int task_id) {
    if (!adapter.is_frozen()) {
        throw ProtocolError("activated_basis: adapter of task " + std::to_string(task_id) + " is not frozen");
    }
    const MaskSnapshot mask = snapshot_mask(adapter);
    ActivatedBasis basis;
    basis.task_id = task_id;
    basis.active_indices = mask.active_indices;
    basis.w2_tilde = Matrix2D(adapter.dim(), mask.r_eff);
    for (std::size_t k = 0; k < mask.r_eff; ++k) {
        const std::size_t j = mask.active_indices[k];
        for (std::size_t i = 0; i < adapter.dim(); ++i) basis.w2_tilde(i, k) = mask.gamma[j] * adapter.w2.value(i, j);
    }
    return basis;
}

double orth_loss_pair(const Matrix2D& w2_t, const ActivatedBasis& basis) {
    require_rows(w2_t.rows(), basis, "orth_loss_pair");
    if (basis.empty()) return 0.0;
    return frobenius_sq(matmul_tn(w2_t, basis.w2_tilde));
}

Var orth_loss_pair(Var w2_t, const ActivatedBasis& basis) {
    Tape& tape = w2_t.tape();
    require_rows(w2_t.value().rows(), basis, "orth_loss_pair");
    if (basis.empty()) return tape.constant(Matrix2D(1, 1));
    return ad::sum_squares(ad::matmul(ad::transpose(w2_t), tape.constant(basis.w2_tilde)));
}

double orth_loss_total(const AdapterStack& stack) {
    require_open(stack);
    const std::size_t t = stack.num_tasks() - 1;
    double total = 0.0;
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        const Matrix2D& w2 = stack.adapter(t, l).w2.value;
        for (std::size_t s = 0; s < t; ++s) total += orth_loss_pair(w2, stack.basis(s, l));
    }
    return total;
}

Var orth_loss_total(Tape& tape, AdapterStack& stack) {
    require_open(stack);
    const std::size_t t = stack.num_tasks() - 1;
    Var total = tape.constant(Matrix2D(1, 1));
    if (t == 0) return total;
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        const Var w2 = tape.leaf(stack.adapter(t, l).w2);
        for (std::size_t s = 0; s < t; ++s) {
            const ActivatedBasis& basis = stack.basis(s, l);
            if (!basis.empty()) total = total + orth_loss_pair(w2, basis);
        }
    }
    return total;
}

double overlap_diagnostic(const Matrix2D& w2_t, const ActivatedBasis& basis) {
    require_rows(w2_t.rows(), basis, "overlap_diagnostic");
    if (basis.empty()) return 0.0;
    const double na = frobenius(w2_t);
    const double nb = frobenius(basis.w2_tilde);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return frobenius(matmul_tn(w2_t, basis.w2_tilde)) / (na * nb);
}

std::vector<OverlapEntry> overlap_table(const AdapterStack& stack) {
    if (stack.has_open_task()) throw ProtocolError("overlap_table: stack has an open task");
    std::vector<OverlapEntry> out;
    for (std::size_t t = 1; t < stack.num_tasks(); ++t) {
        for (std::size_t s = 0; s < t; ++s) {
            for (std::size_t l = 0; l < stack.layers(); ++l) {
                out.push_back({stack.task_id(t), stack.task_id(s), l,
                               overlap_diagnostic(stack.adapter(t, l).w2.value, stack.basis(s, l))});
            }
        }
    }
    return out;
}

} // namespace oacl

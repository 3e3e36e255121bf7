#include "oacl/adapters.hpp"

#include <cmath>

#include "oacl/errors.hpp"

namespace oacl {

namespace {

Matrix2D uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix2D m(rows, cols);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

void require_input_width(const Matrix2D& x, std::size_t d, const char* op) {
    if (x.cols() != d) {
        throw DimensionError(std::string(op) + ": input " + x.shape_string() + " does not have width " +
                             std::to_string(d));
    }
}

} // namespace

OAAdapter OAAdapter::initialized(std::size_t d, std::size_t r_max, const AdapterInit& init, Rng& rng) {
    if (d == 0 || r_max == 0) throw ContractError("OAAdapter: d and r_max must be positive");
    if (!(init.tau > 0.0)) throw ContractError("OAAdapter: tau must be > 0");
    OAAdapter a;
    a.w1 = Param(uniform_matrix(r_max, d, 1.0 / std::sqrt(static_cast<double>(d)), rng), "w1");
    a.w2 = Param(uniform_matrix(d, r_max, init.w2_scale, rng), "w2");
    a.g = Param(Matrix2D(1, r_max, init.g), "g");
    a.tau = Param(Matrix2D(1, 1, init.tau), "tau");
    a.gate_mode = init.gate_mode;
    if (init.gate_mode == GateMode::identity) {
        a.g.frozen = true;
        a.tau.frozen = true;
    }
    if (init.fixed_threshold) a.tau.frozen = true;
    return a;
}

std::vector<double> OAAdapter::gamma() const {
    if (gate_mode == GateMode::identity) return std::vector<double>(r_max(), 1.0);
    return soft_threshold(g.value.data(), tau_value());
}

void OAAdapter::freeze() {
    for (Param* p : {&w1, &w2, &g, &tau}) p->frozen = true;
}

std::vector<Param*> OAAdapter::params() { return {&w1, &w2, &g, &tau}; }

StandardAdapter StandardAdapter::initialized(std::size_t d, std::size_t r, double w2_scale, Rng& rng) {
    if (r > d) throw ContractError("StandardAdapter: bottleneck r must not exceed d");
    StandardAdapter a;
    a.w1 = Param(uniform_matrix(r, d, 1.0 / std::sqrt(static_cast<double>(d)), rng), "w1");
    a.b1 = Param(Matrix2D(1, r), "b1");
    a.w2 = Param(uniform_matrix(d, r, w2_scale, rng), "w2");
    a.b2 = Param(Matrix2D(1, d), "b2");
    return a;
}

MaskSnapshot snapshot_mask(const OAAdapter& adapter) {
    MaskSnapshot s;
    s.gamma = adapter.gamma();
    for (std::size_t i = 0; i < s.gamma.size(); ++i) {
        if (s.gamma[i] != 0.0) s.active_indices.push_back(i);
    }
    s.r_eff = s.active_indices.size();
    return s;
}

Var gate(Tape& tape, OAAdapter& adapter) {
    if (adapter.gate_mode == GateMode::identity) return tape.constant(Matrix2D(1, adapter.r_max(), 1.0));
    return ad::soft_threshold(tape.leaf(adapter.g), tape.leaf(adapter.tau));
}

Var oa_residual(Tape& tape, OAAdapter& adapter, Var x) {
    require_input_width(x.value(), adapter.dim(), "oa_forward");
    Var down = ad::matmul_nt(x, tape.leaf(adapter.w1));     // B × r_max
    Var masked = ad::scale_columns(down, gate(tape, adapter)); // B × r_max
    return ad::matmul_nt(masked, tape.leaf(adapter.w2));      // B × d
}

Var oa_forward(Tape& tape, OAAdapter& adapter, Var x) { return ad::add(x, oa_residual(tape, adapter, x)); }

Matrix2D oa_residual(const OAAdapter& adapter, const Matrix2D& x) {
    require_input_width(x, adapter.dim(), "oa_forward");
    Matrix2D down = matmul_nt(x, adapter.w1.value);
    const std::vector<double> gamma = adapter.gamma();
    for (std::size_t i = 0; i < down.rows(); ++i)
        for (std::size_t j = 0; j < down.cols(); ++j) down(i, j) *= gamma[j];
    return matmul_nt(down, adapter.w2.value);
}

Matrix2D oa_forward(const OAAdapter& adapter, const Matrix2D& x) { return add(x, oa_residual(adapter, x)); }

std::vector<double> oa_forward(const OAAdapter& adapter, std::span<const double> x) {
    Matrix2D y = oa_forward(adapter, Matrix2D::row_vector(x));
    return {y.data().begin(), y.data().end()};
}

Matrix2D outer_product_form(const OAAdapter& adapter, const Matrix2D& x) {
    require_input_width(x, adapter.dim(), "outer_product_form");
    const std::size_t d = adapter.dim();
    const std::vector<double> gamma = adapter.gamma();
    Matrix2D update(d, d);
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        if (gamma[i] == 0.0) continue;
        for (std::size_t r = 0; r < d; ++r) {
            const double left = gamma[i] * adapter.w2.value(r, i);
            for (std::size_t c = 0; c < d; ++c) update(r, c) += left * adapter.w1.value(i, c);
        }
    }
    return add(x, matmul_nt(x, update));
}

std::vector<double> outer_product_form(const OAAdapter& adapter, std::span<const double> x) {
    Matrix2D y = outer_product_form(adapter, Matrix2D::row_vector(x));
    return {y.data().begin(), y.data().end()};
}

Var std_forward(Tape& tape, StandardAdapter& adapter, Var x) {
    require_input_width(x.value(), adapter.w2.value.rows(), "std_forward");
    Var hidden = ad::tanh(ad::add_row(ad::matmul_nt(x, tape.leaf(adapter.w1)), tape.leaf(adapter.b1)));
    Var up = ad::add_row(ad::matmul_nt(hidden, tape.leaf(adapter.w2)), tape.leaf(adapter.b2));
    return ad::add(x, up);
}

Matrix2D std_forward(const StandardAdapter& adapter, const Matrix2D& x) {
    require_input_width(x, adapter.w2.value.rows(), "std_forward");
    Matrix2D hidden = matmul_nt(x, adapter.w1.value);
    for (std::size_t i = 0; i < hidden.rows(); ++i)
        for (std::size_t j = 0; j < hidden.cols(); ++j) hidden(i, j) = std::tanh(hidden(i, j) + adapter.b1.value[j]);
    Matrix2D up = matmul_nt(hidden, adapter.w2.value);
    for (std::size_t i = 0; i < up.rows(); ++i)
        for (std::size_t j = 0; j < up.cols(); ++j) up(i, j) += adapter.b2.value[j];
    return add(x, up);
}

} // namespace oacl

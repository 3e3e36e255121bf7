#include "oacl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oacl/errors.hpp"
#include "oacl/soft_threshold.hpp"

namespace oacl {

const Matrix2D& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
    const Matrix2D& v = value();
    if (v.rows() != 1 || v.cols() != 1) throw ContractError("Var::scalar on non-scalar node " + v.shape_string());
    return v[0];
}

Var Tape::leaf(Param& p) {
    Node n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = !p.frozen;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix2D value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix2D value, std::vector<NodeId> inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](NodeId id) { return nodes_[id].requires_grad; });
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

void Tape::accumulate(NodeId id, const Matrix2D& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = g;
    } else {
        add_inplace(n.grad, g);
    }
}

void Tape::note_active_pattern(std::span<const std::uint8_t> pattern) {
    signature_.insert(signature_.end(), pattern.begin(), pattern.end());
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss node belongs to another tape");
    const Matrix2D& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward: loss must be a scalar, got " + lv.shape_string());
    }
    for (Node& n : nodes_) n.grad = Matrix2D();
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Matrix2D(1, 1, 1.0);

    for (NodeId id = loss.id() + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, id);
        if (n.param != nullptr && !n.param->frozen) {
            if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
                n.param->zero_grad();
            }
            add_inplace(n.param->grad, n.grad);
        }
    }
}

namespace ad {

namespace {
Tape& same_tape(Var a, Var b, const char* op) {
    if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
    return a.tape();
}
} // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    const NodeId ia = a.id(), ib = b.id();
    return t.record(oacl::matmul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, NodeId self) {
        const Matrix2D& g = tp.grad(self);
        if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
        if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
    });
}

Var matmul_nt(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul_nt");
    const NodeId ia = a.id(), ib = b.id();
    return t.record(oacl::matmul_nt(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, NodeId self) {
        const Matrix2D& g = tp.grad(self);
        // out = a·bᵀ: da = g·b, db = gᵀ·a
        if (tp.requires_grad(ia)) tp.accumulate(ia, oacl::matmul(g, tp.value(ib)));
        if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(g, tp.value(ia)));
    });
}

Var transpose(Var a) {
    const NodeId ia = a.id();
    return a.tape().record(oacl::transpose(a.value()), {ia}, [ia](Tape& tp, NodeId self) {
        tp.accumulate(ia, oacl::transpose(tp.grad(self)));
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    const NodeId ia = a.id(), ib = b.id();
    return t.record(oacl::add(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, NodeId self) {
        const Matrix2D& g = tp.grad(self);
        tp.accumulate(ia, g);
        tp.accumulate(ib, g);
    });
}

Var scale(Var a, double s) {
    const NodeId ia = a.id();
    return a.tape().record(oacl::scale(a.value(), s), {ia}, [ia, s](Tape& tp, NodeId self) {
        tp.accumulate(ia, oacl::scale(tp.grad(self), s));
    });
}

Var add_row(Var a, Var row) {
    Tape& t = same_tape(a, row, "add_row");
    const Matrix2D& av = a.value();
    const Matrix2D& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
        throw DimensionError("add_row: row " + rv.shape_string() + " does not fit " + av.shape_string());
    }
    Matrix2D out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
    const NodeId ia = a.id(), ir = row.id();
    return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, NodeId self) {
        const Matrix2D& g = tp.grad(self);
        tp.accumulate(ia, g);
        if (tp.requires_grad(ir)) {
            Matrix2D gr(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j);
            tp.accumulate(ir, gr);
        }
    });
}

Var scale_columns(Var a, Var v) {
    Tape& t = same_tape(a, v, "scale_columns");
    const Matrix2D& av = a.value();
    const Matrix2D& vv = v.value();
    if (vv.rows() != 1 || vv.cols() != av.cols()) {
        throw DimensionError("scale_columns: scale " + vv.shape_string() + " does not fit " +
                             av.shape_string());
    }
    Matrix2D out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= vv[j];
    const NodeId ia = a.id(), iv = v.id();
    return t.record(std::move(out), {ia, iv}, [ia, iv](Tape& tp, NodeId self) {
        const Matrix2D& g = tp.grad(self);
        const Matrix2D& am = tp.value(ia);
        const Matrix2D& vm = tp.value(iv);
        if (tp.requires_grad(ia)) {
            Matrix2D ga = g;
            for (std::size_t i = 0; i < ga.rows(); ++i)
                for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) *= vm[j];
            tp.accumulate(ia, ga);
        }
        if (tp.requires_grad(iv)) {
            Matrix2D gv(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) gv[j] += g(i, j) * am(i, j);
            tp.accumulate(iv, gv);
        }
    });
}

Var tanh(Var a) {
    Matrix2D out = a.value();
    for (double& x : out.data()) x = std::tanh(x);
    const NodeId ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape& tp, NodeId self) {
        const Matrix2D& y = tp.value(self);
        Matrix2D g = tp.grad(self);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
        tp.accumulate(ia, g);
    });
}

Var sum(Var a) {
    const NodeId ia = a.id();
    return a.tape().record(Matrix2D(1, 1, oacl::sum(a.value())), {ia}, [ia](Tape& tp, NodeId self) {
        const Matrix2D& av = tp.value(ia);
        tp.accumulate(ia, Matrix2D(av.rows(), av.cols(), tp.grad(self)[0]));
    });
}

Var sum_squares(Var a) {
    const NodeId ia = a.id();
    return a.tape().record(Matrix2D(1, 1, frobenius_sq(a.value())), {ia}, [ia](Tape& tp, NodeId self) {
        tp.accumulate(ia, oacl::scale(tp.value(ia), 2.0 * tp.grad(self)[0]));
    });
}

Var soft_threshold(Var g, Var tau) {
    Tape& t = same_tape(g, tau, "soft_threshold");
    const Matrix2D& gv = g.value();
    const Matrix2D& tv = tau.value();
    if (gv.rows() != 1) throw DimensionError("soft_threshold: g must be a row vector, got " + gv.shape_string());
    if (tv.rows() != 1 || tv.cols() != 1) {
        throw DimensionError("soft_threshold: tau must be 1x1, got " + tv.shape_string());
    }
    const double tau_v = tv[0];
    std::vector<double> gamma = oacl::soft_threshold(gv.data(), tau_v);
    std::vector<std::uint8_t> pattern(gv.size());
    for (std::size_t i = 0; i < gv.size(); ++i) pattern[i] = soft_threshold_active(gv[i], tau_v) ? 1 : 0;
    t.note_active_pattern(pattern);

    const NodeId ig = g.id(), it = tau.id();
    return t.record(Matrix2D(1, gv.size(), std::move(gamma)), {ig, it}, [ig, it](Tape& tp, NodeId self) {
        const Matrix2D& gv = tp.value(ig);
        const double tau_v = tp.value(it)[0];
        SoftThresholdGrad d = soft_threshold_backward(gv.data(), tau_v, tp.grad(self).data());
        if (tp.requires_grad(ig)) tp.accumulate(ig, Matrix2D(1, gv.size(), std::move(d.dg)));
        if (tp.requires_grad(it)) tp.accumulate(it, Matrix2D(1, 1, d.dtau));
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Matrix2D& z = logits.value();
    if (z.rows() == 0) throw DataError("softmax_cross_entropy: empty batch");
    if (labels.size() != z.rows()) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(z.rows()) + " rows");
    }
    const auto classes = static_cast<int>(z.cols());
    Matrix2D probs(z.rows(), z.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= classes) {
            throw DataError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
        auto row = z.row(i);
        const double m = *std::max_element(row.begin(), row.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            probs(i, j) = std::exp(row[j] - m);
            denom += probs(i, j);
        }
        for (std::size_t j = 0; j < row.size(); ++j) probs(i, j) /= denom;
        loss += -(row[static_cast<std::size_t>(y)] - m - std::log(denom));
    }
    const double n = static_cast<double>(z.rows());
    std::vector<int> ys(labels.begin(), labels.end());
    const NodeId iz = logits.id();
    return logits.tape().record(
        Matrix2D(1, 1, loss / n), {iz},
        [iz, probs = std::move(probs), ys = std::move(ys), n](Tape& tp, NodeId self) {
            Matrix2D g = probs;
            for (std::size_t i = 0; i < g.rows(); ++i) g(i, static_cast<std::size_t>(ys[i])) -= 1.0;
            tp.accumulate(iz, oacl::scale(g, tp.grad(self)[0] / n));
        });
}

} // namespace ad

GradCheckReport check_gradients(const LossClosure& closure, std::span<Param* const> params, double eps,
                                const GradCheckOptions& options) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ContractError("check_gradients: eps must lie in [1e-7, 1e-3], got " + std::to_string(eps));
    }
    for (Param* p : params) p->zero_grad();
    std::vector<std::uint8_t> base_signature;
    {
        Tape tape;
        Var loss = closure(tape);
        tape.backward(loss);
        base_signature = tape.active_signature();
    }

    auto evaluate = [&](std::vector<std::uint8_t>& signature) {
        Tape tape;
        const double v = closure(tape).scalar();
        signature = tape.active_signature();
        return v;
    };

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    std::vector<std::uint8_t> sig_plus, sig_minus;
    for (Param* p : params) {
        if (p->frozen) continue;
        std::vector<std::size_t> coords(p->value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_param != 0 && coords.size() > options.max_coords_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_param);
        }
        for (std::size_t c : coords) {
            const double saved = p->value[c];
            p->value[c] = saved + eps;
            const double up = evaluate(sig_plus);
            p->value[c] = saved - eps;
            const double down = evaluate(sig_minus);
            p->value[c] = saved;
            if (sig_plus != base_signature || sig_minus != base_signature) {
                ++report.skipped_kinks;
                continue;
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double err = std::abs(p->grad[c] - numeric) / std::max(1.0, std::abs(numeric));
            report.max_rel_error = std::max(report.max_rel_error, err);
            ++report.checked;
        }
    }
    return report;
}

} // namespace oacl

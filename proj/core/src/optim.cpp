#include "oacl/optim.hpp"

#include <cmath>
#include <sstream>

#include "oacl/errors.hpp"

namespace oacl {

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd_momentum" || text == "sgd") return OptimizerKind::sgd_momentum;
    throw ConfigError("unknown optimizer '" + text + "' (expected adam or sgd_momentum)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

void Optimizer::step(std::span<Param* const> params) {
    for (const Param* p : params) {
        if (p->frozen) continue;
        for (std::size_t i = 0; i < p->grad.size(); ++i) {
            if (!std::isfinite(p->grad[i])) {
                std::ostringstream msg;
                msg << "non-finite gradient in param '" << p->name << "' (" << p->value.shape_string()
                    << ") at coordinate " << i << ": grad=" << p->grad[i] << " value=" << p->value[i]
                    << " after " << step_ << " steps";
                throw NumericalError(msg.str());
            }
        }
    }

    ++step_;
    const double t = static_cast<double>(step_);
    for (Param* p : params) {
        if (p->frozen) continue;
        Slot& slot = slots_[p];
        if (slot.m.size() != p->value.size()) {
            slot.m = Matrix2D(p->value.rows(), p->value.cols());
            slot.v = Matrix2D(p->value.rows(), p->value.cols());
        }
        if (settings_.kind == OptimizerKind::sgd_momentum) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                slot.m[i] = settings_.momentum * slot.m[i] + p->grad[i];
                p->value[i] -= settings_.lr * slot.m[i];
            }
        } else {
            const double c1 = 1.0 - std::pow(settings_.beta1, t);
            const double c2 = 1.0 - std::pow(settings_.beta2, t);
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad[i];
                slot.m[i] = settings_.beta1 * slot.m[i] + (1.0 - settings_.beta1) * g;
                slot.v[i] = settings_.beta2 * slot.v[i] + (1.0 - settings_.beta2) * g * g;
                const double m_hat = slot.m[i] / c1;
                const double v_hat = slot.v[i] / c2;
                p->value[i] -= settings_.lr * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
            }
        }
    }
}

} // namespace oacl

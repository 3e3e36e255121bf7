#include "oacl/soft_threshold.hpp"

#include <cmath>
#include <string>

#include "oacl/errors.hpp"

namespace oacl {

namespace {
double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_positive_tau(double tau) {
    if (!(tau > 0.0)) throw ContractError("soft_threshold: tau must be > 0, got " + std::to_string(tau));
}
} // namespace

std::vector<double> soft_threshold(std::span<const double> g, double tau) {
    require_positive_tau(tau);
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (soft_threshold_active(g[i], tau)) out[i] = sign(g[i]) * (std::abs(g[i]) - tau);
    }
    return out;
}

SoftThresholdGrad soft_threshold_backward(std::span<const double> g, double tau,
                                          std::span<const double> upstream) {
    require_positive_tau(tau);
    if (g.size() != upstream.size()) {
        throw DimensionError("soft_threshold_backward: g has " + std::to_string(g.size()) +
                             " entries but upstream has " + std::to_string(upstream.size()));
    }
    SoftThresholdGrad out{std::vector<double>(g.size(), 0.0), 0.0};
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!soft_threshold_active(g[i], tau)) continue;
        out.dg[i] = upstream[i];
        out.dtau -= upstream[i] * sign(g[i]);
    }
    return out;
}

} // namespace oacl

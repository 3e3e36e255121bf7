#pragma once

#include <span>
#include <utility>
#include <vector>

namespace oacl {

/// γ_i = sign(g_i)·max(|g_i| − τ, 0). Throws ContractError if tau <= 0.
std::vector<double> soft_threshold(std::span<const double> g, double tau);

struct SoftThresholdGrad {
    std::vector<double> dg;
    double dtau = 0.0;
};

/// Chain rule through the soft threshold. A coordinate contributes only when
/// |g_i| > τ strictly. There γ_i = g_i ∓ τ, so ∂γ_i/∂g_i = 1 for either sign
/// of g_i: dg_i = u_i and dτ += −u_i·sign(g_i).
SoftThresholdGrad soft_threshold_backward(std::span<const double> g, double tau,
                                          std::span<const double> upstream);

inline bool soft_threshold_active(double g, double tau) { return (g < 0 ? -g : g) > tau; }

} // namespace oacl

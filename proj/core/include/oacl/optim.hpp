#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>

#include "oacl/autodiff.hpp"

namespace oacl {

enum class OptimizerKind { sgd_momentum, adam };

OptimizerKind parse_optimizer(const std::string& text);
std::string to_string(OptimizerKind kind);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Textbook SGD-with-momentum (v ← μv + g; p ← p − lr·v) and Adam with bias
/// correction. State is keyed by Param address, so params must not move while
/// an optimizer refers to them.
class Optimizer {
public:
    explicit Optimizer(OptimizerSettings settings) : settings_(settings) {}

    /// Updates every unfrozen param from its grad. Throws NumericalError
    /// (with the offending param and coordinate) if any grad is non-finite.
    void step(std::span<Param* const> params);

    const OptimizerSettings& settings() const { return settings_; }
    std::size_t steps_taken() const { return step_; }

private:
    struct Slot {
        Matrix2D m;
        Matrix2D v;
    };

    OptimizerSettings settings_;
    std::unordered_map<const Param*, Slot> slots_;
    std::size_t step_ = 0;
};

} // namespace oacl

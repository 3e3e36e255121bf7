#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "oacl/matrix.hpp"
#include "oacl/tasks.hpp"

namespace oacl {

struct Backbone;
class AdapterStack;

/// Index of the largest entry in row r; ties go to the lowest index.
std::size_t argmax_row(const Matrix2D& logits, std::size_t r);

/// Fraction of rows whose argmax equals the label. Throws DataError on an
/// empty batch or a label/row count mismatch.
double accuracy(const Matrix2D& logits, std::span<const int> labels);
double accuracy(const Backbone& backbone, const AdapterStack& stack, const Split& split);

/// a(i, j): test accuracy on task i after training task j, both 0-based.
/// Entries with j < i are evaluations before task i was trained.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t tasks);

    std::size_t size() const { return n_; }
    /// Throws DataError for a value outside [0, 1], ContractError for an index
    /// outside the grid.
    void set(std::size_t i, std::size_t j, double value);
    bool has(std::size_t i, std::size_t j) const;
    /// Throws DataError if the entry was never set.
    double at(std::size_t i, std::size_t j) const;
    std::optional<double> get(std::size_t i, std::size_t j) const;
    static bool is_pre_training(std::size_t i, std::size_t j) { return j < i; }

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::size_t index(std::size_t i, std::size_t j) const;

    std::size_t n_ = 0;
    std::vector<double> values_;
    std::vector<bool> set_;
};

/// Mean of the last column.
double avg_final_accuracy(const AccuracyMatrix& m);
/// f_i = max_{j ≥ i} a(i, j) − a(i, T−1).
std::vector<double> forgetting_per_task(const AccuracyMatrix& m);

/// Adapter parameter accounting over a fully frozen stack. An adapter of
/// width r_max in dimension d costs r_eff·2d (one W1 row and one W2 column
/// per active dimension) plus r_max + 1 for its gates and threshold;
/// allocated counts every dimension.
struct BudgetReport {
    std::size_t dim = 0;
    std::size_t r_max = 0;
    std::vector<int> task_ids;
    std::vector<std::vector<std::size_t>> r_eff; ///< [task][layer]
    std::vector<std::size_t> active_params;      ///< per task
    std::vector<std::size_t> allocated_params;   ///< per task
    std::size_t total_active = 0;
    std::size_t total_allocated = 0;
    double avg_final_budget = 0.0; ///< mean r_eff over all adapters

    double params_saved() const;
    std::vector<double> task_mean_r_eff() const;
};

/// Throws ProtocolError if any adapter is still trainable.
BudgetReport budget_report(const AdapterStack& stack);

} // namespace oacl

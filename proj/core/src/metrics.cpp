#include "oacl/metrics.hpp"

#include <algorithm>
#include <string>

#include "oacl/backbone.hpp"
#include "oacl/errors.hpp"

namespace oacl {

std::size_t argmax_row(const Matrix2D& logits, std::size_t r) {
    const auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

double accuracy(const Matrix2D& logits, std::span<const int> labels) {
    if (labels.empty()) throw DataError("accuracy: empty split");
    if (labels.size() != logits.rows()) {
        throw DataError("accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows()) +
                        " rows of logits");
    }
    std::size_t correct = 0;
    for (std::size_t r = 0; r < labels.size(); ++r)
        if (static_cast<int>(argmax_row(logits, r)) == labels[r]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const Backbone& backbone, const AdapterStack& stack, const Split& split) {
    if (split.empty()) throw DataError("accuracy: empty split");
    return accuracy(forward(backbone, stack, split.x), split.y);
}

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) : n_(tasks), values_(tasks * tasks, 0.0), set_(tasks * tasks, false) {}

std::size_t AccuracyMatrix::index(std::size_t i, std::size_t j) const {
    if (i >= n_ || j >= n_) {
        throw ContractError("accuracy matrix index (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside " + std::to_string(n_) + "x" + std::to_string(n_));
    }
    return i * n_ + j;
}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw DataError("accuracy entry outside [0, 1]: " + std::to_string(value));
    const std::size_t k = index(i, j);
    values_[k] = value;
    set_[k] = true;
}

bool AccuracyMatrix::has(std::size_t i, std::size_t j) const { return set_[index(i, j)]; }

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
    const std::size_t k = index(i, j);
    if (!set_[k]) {
        throw DataError("accuracy matrix entry (" + std::to_string(i) + ", " + std::to_string(j) + ") is missing");
    }
    return values_[k];
}

std::optional<double> AccuracyMatrix::get(std::size_t i, std::size_t j) const {
    const std::size_t k = index(i, j);
    if (!set_[k]) return std::nullopt;
    return values_[k];
}

double avg_final_accuracy(const AccuracyMatrix& m) {
    if (m.size() == 0) throw DataError("avg_final_accuracy: empty accuracy matrix");
    const std::size_t last = m.size() - 1;
    double total = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) total += m.at(i, last);
    return total / static_cast<double>(m.size());
}

std::vector<double> forgetting_per_task(const AccuracyMatrix& m) {
    if (m.size() == 0) throw DataError("forgetting_per_task: empty accuracy matrix");
    const std::size_t last = m.size() - 1;
    std::vector<double> out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        double best = m.at(i, i);
        for (std::size_t j = i + 1; j < m.size(); ++j) best = std::max(best, m.at(i, j));
        out.push_back(best - m.at(i, last));
    }
    return out;
}

double BudgetReport::params_saved() const {
    if (total_allocated == 0) return 0.0;
    return 1.0 - static_cast<double>(total_active) / static_cast<double>(total_allocated);
}

std::vector<double> BudgetReport::task_mean_r_eff() const {
    std::vector<double> out;
    for (const auto& row : r_eff) {
        double total = 0.0;
        for (std::size_t r : row) total += static_cast<double>(r);
        out.push_back(row.empty() ? 0.0 : total / static_cast<double>(row.size()));
    }
    return out;
}

BudgetReport budget_report(const AdapterStack& stack) {
    BudgetReport report;
    report.dim = stack.dim();
    std::size_t adapters = 0;
    double r_sum = 0.0;
    for (std::size_t k = 0; k < stack.num_tasks(); ++k) {
        report.task_ids.push_back(stack.task_id(k));
        std::vector<std::size_t> row;
        std::size_t active = 0;
        std::size_t allocated = 0;
        for (std::size_t l = 0; l < stack.layers(); ++l) {
            const OAAdapter& a = stack.adapter(k, l);
            if (!a.is_frozen()) {
                throw ProtocolError("budget_report: task " + std::to_string(stack.task_id(k)) + " layer " +
                                    std::to_string(l) + " is not frozen");
            }
            const std::size_t r = snapshot_mask(a).r_eff;
            const std::size_t d = a.dim();
            const std::size_t rm = a.r_max();
            report.r_max = std::max(report.r_max, rm);
            row.push_back(r);
            active += r * 2 * d + rm + 1;
            allocated += rm * 2 * d + rm + 1;
            r_sum += static_cast<double>(r);
            ++adapters;
        }
        report.r_eff.push_back(std::move(row));
        report.active_params.push_back(active);
        report.allocated_params.push_back(allocated);
        report.total_active += active;
        report.total_allocated += allocated;
    }
    report.avg_final_budget = adapters == 0 ? 0.0 : r_sum / static_cast<double>(adapters);
    return report;
}

} // namespace oacl

#include "oacl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oacl/errors.hpp"
#include "oacl/orthogonality.hpp"

namespace oacl {

using ad::operator+;
using ad::operator*;

namespace {

bool in_grid(double value, std::initializer_list<double> grid) {
    return std::any_of(grid.begin(), grid.end(),
                       [&](double g) { return std::abs(value - g) <= 1e-12 * std::max(1.0, std::abs(g)); });
}

std::string grid_text(std::initializer_list<double> grid) {
    std::ostringstream out;
    out << '{';
    bool first = true;
    for (double g : grid) {
        out << (first ? "" : ", ") << g;
        first = false;
    }
    out << '}';
    return out.str();
}

void require_grid(const char* field, double value, std::initializer_list<double> grid) {
    if (!in_grid(value, grid)) {
        std::ostringstream msg;
        msg << field << " = " << value << " is not in the grid " << grid_text(grid);
        throw ConfigError(msg.str());
    }
}

Split gather(const Split& src, std::span<const std::size_t> idx) {
    Split out;
    out.x = Matrix2D(idx.size(), src.x.cols());
    out.y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = src.x.row(idx[i]);
        std::copy(row.begin(), row.end(), out.x.row(i).begin());
        out.y[i] = src.y[idx[i]];
    }
    return out;
}

} // namespace

Variant parse_variant(const std::string& text) {
    if (text == "oa_adapter") return Variant::oa_adapter;
    if (text == "o_adapter") return Variant::o_adapter;
    if (text == "inc_adapter") return Variant::inc_adapter;
    throw ConfigError("unknown variant '" + text + "' (expected oa_adapter, o_adapter or inc_adapter)");
}

std::string to_string(Variant v) {
    switch (v) {
    case Variant::oa_adapter: return "oa_adapter";
    case Variant::o_adapter: return "o_adapter";
    case Variant::inc_adapter: return "inc_adapter";
    }
    return "?";
}

ThresholdMode parse_threshold_mode(const std::string& text) {
    if (text == "dynamic") return ThresholdMode::dynamic;
    if (text == "fixed") return ThresholdMode::fixed;
    throw ConfigError("unknown threshold_mode '" + text + "' (expected dynamic or fixed)");
}

std::string to_string(ThresholdMode m) { return m == ThresholdMode::dynamic ? "dynamic" : "fixed"; }

AdapterInit TrainConfig::adapter_init() const {
    AdapterInit init;
    init.tau = tau_init;
    init.g = g_init;
    init.w2_scale = w2_init_scale;
    init.gate_mode = variant == Variant::o_adapter ? GateMode::identity : GateMode::soft_threshold;
    init.fixed_threshold = threshold_mode == ThresholdMode::fixed;
    return init;
}

void TrainConfig::validate(bool strict_grid) const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (!(tau_init > 0.0) || !std::isfinite(tau_init)) fail("tau_init must be a positive finite number");
    if (!(lambda_orth >= 0.0) || !std::isfinite(lambda_orth)) fail("lambda_orth must be >= 0");
    if (!(lambda_l2 >= 0.0) || !std::isfinite(lambda_l2)) fail("lambda_l2 must be >= 0");
    if (r_max < 1) fail("r_max must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be a positive finite number");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!std::isfinite(g_init)) fail("g_init must be finite");
    if (!(w2_init_scale >= 0.0) || !std::isfinite(w2_init_scale)) fail("w2_init_scale must be >= 0");
    if (strict_grid) {
        require_grid("tau_init", tau_init, {1e-3, 1e-4, 1e-5});
        if (variant != Variant::inc_adapter) require_grid("lambda_orth", lambda_orth, {0.5, 1.0, 5.0});
        require_grid("lambda_l2", lambda_l2, {0.0, 0.1, 0.5});
        require_grid("lr", lr, {5e-3, 3e-3, 1e-3, 5e-4});
    }
}

LossParts total_loss(Tape& tape, Var logits, std::span<const int> labels, AdapterStack& stack,
                     const TrainConfig& config) {
    if (labels.empty()) throw DataError("total_loss: empty batch");
    if (!stack.has_open_task()) throw ProtocolError("total_loss needs an open task");
    LossParts parts;
    const Var ce = ad::softmax_cross_entropy(logits, labels);
    parts.task = ce.scalar();

    Var total = ce;
    const double lambda_orth = config.effective_lambda_orth();
    if (lambda_orth > 0.0) {
        const Var orth = orth_loss_total(tape, stack);
        parts.orth = orth.scalar();
        total = total + lambda_orth * orth;
    } else {
        parts.orth = orth_loss_total(stack);
    }

    const std::size_t t = stack.num_tasks() - 1;
    Var l2 = tape.constant(Matrix2D(1, 1));
    for (std::size_t l = 0; l < stack.layers(); ++l) l2 = l2 + ad::sum_squares(gate(tape, stack.adapter(t, l)));
    parts.l2 = l2.scalar();
    if (config.lambda_l2 > 0.0) total = total + config.lambda_l2 * l2;

    parts.total = total;
    return parts;
}

void clamp_thresholds(AdapterStack& stack) {
    if (!stack.has_open_task()) return;
    const std::size_t t = stack.num_tasks() - 1;
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        Param& tau = stack.adapter(t, l).tau;
        if (!tau.frozen && tau.value[0] < kTauFloor) tau.value[0] = kTauFloor;
    }
}

TaskTrainReport train_task(Backbone& backbone, AdapterStack& stack, const TaskDataset& task,
                           const TrainConfig& config, const StepHook& after_step) {
    if (!stack.has_open_task()) throw ProtocolError("train_task: call begin_task first");
    if (task.train.empty()) throw DataError("train_task: task " + std::to_string(task.task_id) + " has no training data");
    const auto start = std::chrono::steady_clock::now();

    const std::vector<Param*> params = stack.open_params();
    Optimizer opt(OptimizerSettings{config.optimizer, config.lr});
    Rng shuffle_rng = make_rng(config.seed, "shuffle", static_cast<std::uint64_t>(task.task_id));

    const std::size_t n = task.train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TaskTrainReport report;
    report.task_id = task.task_id;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const Split batch = gather(task.train, std::span(order).subspan(begin, end - begin));
            for (Param* p : params) p->zero_grad();
            Tape tape;
            const Var logits = forward(tape, backbone, stack, batch.x);
            const LossParts parts = total_loss(tape, logits, batch.y, stack, config);
            if (!std::isfinite(parts.total.scalar())) {
                std::ostringstream msg;
                msg << "non-finite loss at task " << task.task_id << " step " << report.steps << ": ce=" << parts.task
                    << " orth=" << parts.orth << " l2=" << parts.l2;
                throw NumericalError(msg.str());
            }
            tape.backward(parts.total);
            opt.step(params);
            clamp_thresholds(stack);
            ++report.steps;
            if (after_step) after_step(report.steps);
        }
    }

    Tape tape;
    const Var logits = forward(tape, backbone, stack, task.train.x);
    report.final_task_loss = ad::softmax_cross_entropy(logits, task.train.y).scalar();
    report.final_orth_loss = orth_loss_total(stack);
    const std::size_t t = stack.num_tasks() - 1;
    for (std::size_t l = 0; l < stack.layers(); ++l) {
        report.r_eff_per_layer.push_back(snapshot_mask(stack.adapter(t, l)).r_eff);
        report.tau_per_layer.push_back(stack.adapter(t, l).tau_value());
    }
    stack.end_task();
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

SequenceResult run_sequence(Backbone& backbone, const TaskStream& stream, const TrainConfig& config) {
    if (stream.size() == 0) throw ConfigError("run_sequence: empty task stream");
    config.validate();
    if (!backbone.is_frozen()) throw ProtocolError("run_sequence: backbone must be frozen");

    SequenceResult result;
    result.matrix = AccuracyMatrix(stream.size());
    result.stack = AdapterStack(backbone.layers(), backbone.dim());
    AdapterStack& stack = result.stack;
    std::size_t global_step = 0;

    for (std::size_t k = 0; k < stream.size(); ++k) {
        const TaskDataset& task = stream.tasks[k];
        stack.begin_task(task.task_id, config.r_max, config.adapter_init(), config.seed);
        const StepHook hook = [&](std::size_t) {
            ++global_step;
            if (config.eval_every == 0 || global_step % config.eval_every != 0) return;
            for (const TaskDataset& other : stream.tasks) {
                result.curves.push_back({global_step, task.task_id, other.task_id, accuracy(backbone, stack, other.test)});
            }
        };
        result.reports.push_back(train_task(backbone, stack, task, config, hook));
        for (std::size_t i = 0; i < stream.size(); ++i) {
            result.matrix.set(i, k, accuracy(backbone, stack, stream.tasks[i].test));
        }
    }
    return result;
}

} // namespace oacl

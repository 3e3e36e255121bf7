#include <benchmark/benchmark.h>

#include <random>

#include "oacl/backbone.hpp"
#include "oacl/orthogonality.hpp"
#include "oacl/trainer.hpp"

using namespace oacl;

namespace {

Matrix2D uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix2D m(rows, cols);
    for (double& v : m.data()) v = u(rng);
    return m;
}

struct Model {
    Backbone backbone;
    AdapterStack stack;
};

/// Default-size backbone with `tasks` adapter columns, the last one open.
Model make_model(std::size_t tasks) {
    Rng rng(1);
    Model m;
    m.backbone = Backbone::random({}, rng);
    m.backbone.freeze();
    m.stack = AdapterStack(m.backbone.layers(), m.backbone.dim());
    for (std::size_t t = 1; t <= tasks; ++t) {
        m.stack.begin_task(static_cast<int>(t), 16, AdapterInit{}, 1);
        for (std::size_t l = 0; l < m.backbone.layers(); ++l)
            m.stack.adapter(t - 1, l).w2.value = uniform(m.backbone.dim(), 16, rng);
        if (t < tasks) m.stack.end_task();
    }
    return m;
}

void BM_AdapterForward(benchmark::State& state) {
    Rng rng(2);
    AdapterInit init;
    OAAdapter a = OAAdapter::initialized(64, 16, init, rng);
    const Matrix2D x = uniform(static_cast<std::size_t>(state.range(0)), 64, rng);
    for (auto _ : state) benchmark::DoNotOptimize(oa_forward(a, x));
}
BENCHMARK(BM_AdapterForward)->Arg(32)->Arg(256);

void BM_ModelInference(benchmark::State& state) {
    const Model m = make_model(static_cast<std::size_t>(state.range(0)));
    Rng rng(3);
    const Matrix2D x = uniform(100, 32, rng);
    for (auto _ : state) benchmark::DoNotOptimize(forward(m.backbone, m.stack, x));
}
BENCHMARK(BM_ModelInference)->Arg(1)->Arg(4);

void BM_OrthLoss(benchmark::State& state) {
    Model m = make_model(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        Tape tape;
        const Var loss = orth_loss_total(tape, m.stack);
        tape.backward(loss);
    }
}
BENCHMARK(BM_OrthLoss)->Arg(2)->Arg(4);

void BM_TrainingStep(benchmark::State& state) {
    Model m = make_model(static_cast<std::size_t>(state.range(0)));
    Rng rng(4);
    const Matrix2D x = uniform(32, 32, rng);
    std::vector<int> y(32);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 8);
    const TrainConfig config;
    Optimizer opt(OptimizerSettings{config.optimizer, config.lr});
    const std::vector<Param*> params = m.stack.open_params();
    for (auto _ : state) {
        for (Param* p : params) p->zero_grad();
        Tape tape;
        const LossParts parts = total_loss(tape, forward(tape, m.backbone, m.stack, x), y, m.stack, config);
        tape.backward(parts.total);
        opt.step(params);
        clamp_thresholds(m.stack);
    }
}
BENCHMARK(BM_TrainingStep)->Arg(1)->Arg(4);

} // namespace
BENCHMARK_MAIN();

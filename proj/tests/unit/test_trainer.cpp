#include <gtest/gtest.h>

#include <cmath>

#include "oacl/checkpoint.hpp"
#include "oacl/errors.hpp"
#include "oacl/orthogonality.hpp"
#include "oacl/trainer.hpp"
#include "test_util.hpp"

using namespace oacl;
using oacl::testing::random_matrix;

namespace {

StreamOptions small_stream(std::size_t tasks = 2) {
    StreamOptions o;
    o.tasks = tasks;
    o.classes = 4;
    o.input_dim = 8;
    o.n_train_per_class = 40;
    o.n_val_per_class = 5;
    o.n_test_per_class = 25;
    return o;
}

Backbone small_backbone(std::uint64_t seed = 1) {
    const BaseDistribution dist = make_base_distribution(seed, 4, 8);
    Rng rng = make_rng(seed, "test-pretrain");
    const Split train = sample_split(dist, 100, rng);
    const Split held = sample_split(dist, 25, rng);
    return build_and_pretrain(seed, {8, 16, 2, 4}, train, held);
}

TrainConfig small_config() {
    TrainConfig c;
    c.r_max = 4;
    c.epochs = 3;
    c.lr = 5e-3;
    c.batch_size = 16;
    c.eval_every = 0;
    return c;
}

double manual_ce(const Matrix2D& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t n = 0; n < logits.rows(); ++n) {
        double mx = -1e300;
        for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::max(mx, logits(n, c));
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(n, c) - mx);
        total += std::log(z) + mx - logits(n, labels[n]);
    }
    return total / static_cast<double>(logits.rows());
}

std::string stack_bytes(const AdapterStack& stack, std::size_t tasks) {
    std::string out;
    for (std::size_t k = 0; k < tasks; ++k)
        for (std::size_t l = 0; l < stack.layers(); ++l) out += serialize_adapter(stack.adapter(k, l));
    return out;
}

} // namespace

TEST(TrainConfig, DefaultsAndSwitches) {
    TrainConfig c;
    EXPECT_EQ(c.r_max, 16u);
    EXPECT_EQ(c.tau_init, 1e-4);
    EXPECT_EQ(c.optimizer, OptimizerKind::adam);
    c.variant = Variant::inc_adapter;
    EXPECT_EQ(c.effective_lambda_orth(), 0.0);
    c.variant = Variant::o_adapter;
    EXPECT_EQ(c.adapter_init().gate_mode, GateMode::identity);
    c.variant = Variant::oa_adapter;
    c.threshold_mode = ThresholdMode::fixed;
    EXPECT_TRUE(c.adapter_init().fixed_threshold);
}

TEST(TrainConfig, ValidationNamesTheField) {
    auto expect_field = [](TrainConfig c, const std::string& field, bool strict = false) {
        try {
            c.validate(strict);
            ADD_FAILURE() << "expected ConfigError for " << field;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
        }
    };
    TrainConfig c;
    EXPECT_NO_THROW(c.validate(true));
    TrainConfig bad = c;
    bad.lambda_orth = -1;
    expect_field(bad, "lambda_orth");
    bad = c;
    bad.lambda_l2 = -0.1;
    expect_field(bad, "lambda_l2");
    bad = c;
    bad.r_max = 0;
    expect_field(bad, "r_max");
    bad = c;
    bad.tau_init = 0.0;
    expect_field(bad, "tau_init");
    bad = c;
    bad.tau_init = 1e-2;
    EXPECT_NO_THROW(bad.validate(false));
    expect_field(bad, "tau_init", true);
    bad = c;
    bad.lr = 2e-3;
    expect_field(bad, "lr", true);
    bad = c;
    bad.lambda_l2 = 0.2;
    expect_field(bad, "lambda_l2", true);
}

TEST(TrainConfig, ParsesEnums) {
    EXPECT_EQ(parse_variant("o_adapter"), Variant::o_adapter);
    EXPECT_EQ(parse_threshold_mode("fixed"), ThresholdMode::fixed);
    EXPECT_EQ(to_string(Variant::inc_adapter), "inc_adapter");
    EXPECT_THROW(parse_variant("lora"), ConfigError);
    EXPECT_THROW(parse_threshold_mode("adaptive"), ConfigError);
}

TEST(TotalLoss, FirstTaskWithoutPenaltyIsCrossEntropy) {
    AdapterStack stack(2, 4);
    stack.begin_task(1, 3, AdapterInit{}, 1);
    Rng rng(1);
    const Matrix2D logits = random_matrix(5, 3, rng, -3, 3);
    const std::vector<int> labels{0, 2, 1, 1, 0};
    TrainConfig c;
    c.lambda_l2 = 0.0;
    Tape t;
    const LossParts parts = total_loss(t, t.constant(logits), labels, stack, c);
    EXPECT_NEAR(parts.total.scalar(), manual_ce(logits, labels), 1e-14);
    EXPECT_EQ(parts.orth, 0.0);
}

TEST(TotalLoss, UniformLogitsGiveLogClasses) {
    AdapterStack stack(1, 4);
    stack.begin_task(1, 2, AdapterInit{}, 1);
    TrainConfig c;
    c.lambda_l2 = 0.0;
    Tape t;
    const std::vector<int> labels{0, 3, 7, 5};
    const LossParts parts = total_loss(t, t.constant(Matrix2D(4, 8, 0.7)), labels, stack, c);
    EXPECT_NEAR(parts.total.scalar(), std::log(8.0), 1e-14);
    EXPECT_NEAR(std::log(8.0), 2.0794, 1e-4);
}

TEST(TotalLoss, DecomposesIntoIndependentComponents) {
    Rng rng(2);
    AdapterStack stack(2, 5);
    for (int t = 1; t <= 2; ++t) {
        stack.begin_task(t, 3, AdapterInit{}, 1);
        for (std::size_t l = 0; l < 2; ++l) {
            OAAdapter& a = stack.adapter(stack.num_tasks() - 1, l);
            a.w2.value = random_matrix(5, 3, rng);
            a.g.value = random_matrix(1, 3, rng);
            a.tau.value[0] = 0.2;
        }
        if (t == 1) stack.end_task();
    }
    const Matrix2D logits = random_matrix(6, 4, rng, -2, 2);
    const std::vector<int> labels{0, 1, 2, 3, 0, 1};
    TrainConfig c;
    c.lambda_orth = 5.0;
    c.lambda_l2 = 0.5;

    double orth = 0.0, l2 = 0.0;
    for (std::size_t l = 0; l < 2; ++l) {
        const OAAdapter& old = stack.adapter(0, l);
        const std::vector<double> gs = old.gamma();
        const OAAdapter& cur = stack.adapter(1, l);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < 5; ++k) dot += cur.w2.value(k, i) * gs[j] * old.w2.value(k, j);
                orth += dot * dot;
            }
        for (double g : cur.gamma()) l2 += g * g;
    }
    ASSERT_GT(orth, 0.0);
    ASSERT_GT(l2, 0.0);
    Tape t;
    const LossParts parts = total_loss(t, t.constant(logits), labels, stack, c);
    const double ce = manual_ce(logits, labels);
    EXPECT_NEAR(parts.task, ce, 1e-12);
    EXPECT_NEAR(parts.orth, orth, 1e-12 * std::max(1.0, orth));
    EXPECT_NEAR(parts.l2, l2, 1e-12);
    EXPECT_NEAR(parts.total.scalar(), ce + 5.0 * orth + 0.5 * l2, 1e-12 * std::max(1.0, orth));
    EXPECT_NEAR(parts.total.scalar(), parts.task + 5.0 * parts.orth + 0.5 * parts.l2, 1e-12);

    c.variant = Variant::inc_adapter;
    Tape t2;
    const LossParts inc = total_loss(t2, t2.constant(logits), labels, stack, c);
    EXPECT_NEAR(inc.orth, orth, 1e-12 * std::max(1.0, orth));
    EXPECT_NEAR(inc.total.scalar(), ce + 0.5 * l2, 1e-12);
}

TEST(TotalLoss, RejectsBadInputs) {
    AdapterStack stack(1, 4);
    TrainConfig c;
    Tape t;
    EXPECT_THROW(total_loss(t, t.constant(Matrix2D(2, 3)), std::vector<int>{0, 1}, stack, c), ProtocolError);
    stack.begin_task(1, 2, AdapterInit{}, 1);
    EXPECT_THROW(total_loss(t, t.constant(Matrix2D(2, 3)), std::vector<int>{0, 3}, stack, c), DataError);
    EXPECT_THROW(total_loss(t, t.constant(Matrix2D(0, 3)), std::vector<int>{}, stack, c), DataError);
}

TEST(ClampThresholds, RaisesTauToFloor) {
    AdapterStack stack(2, 4);
    stack.begin_task(1, 2, AdapterInit{}, 1);
    stack.adapter(0, 0).tau.value[0] = -0.3;
    stack.adapter(0, 1).tau.value[0] = 0.2;
    clamp_thresholds(stack);
    EXPECT_EQ(stack.adapter(0, 0).tau_value(), kTauFloor);
    EXPECT_EQ(stack.adapter(0, 1).tau_value(), 0.2);
}

TEST(TrainTask, ZeroEpochsOnlyFreezes) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(1));
    TrainConfig c = small_config();
    c.epochs = 0;
    AdapterStack stack(b.layers(), b.dim());
    stack.begin_task(1, c.r_max, c.adapter_init(), c.seed);
    std::vector<Matrix2D> before;
    for (Param* p : stack.open_params()) before.push_back(p->value);
    const TaskTrainReport report = train_task(b, stack, stream.tasks[0], c);
    EXPECT_EQ(report.steps, 0u);
    EXPECT_FALSE(stack.has_open_task());
    std::size_t i = 0;
    for (Param* p : stack.all_params()) {
        EXPECT_EQ(p->value, before[i++]);
        EXPECT_TRUE(p->frozen);
    }
}

TEST(TrainTask, LearnsSeparableTask) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    TrainConfig c = small_config();
    c.epochs = 30;
    c.r_max = 16;
    c.lambda_l2 = 0.0;
    AdapterStack stack(b.layers(), b.dim());
    stack.begin_task(2, c.r_max, c.adapter_init(), c.seed);
    const TaskTrainReport report = train_task(b, stack, stream.tasks[1], c);
    EXPECT_EQ(report.task_id, 2);
    EXPECT_EQ(report.steps, 30u * 10u);
    EXPECT_GE(accuracy(b, stack, stream.tasks[1].train), 0.95);
    ASSERT_EQ(report.r_eff_per_layer.size(), b.layers());
    for (std::size_t r : report.r_eff_per_layer) EXPECT_LE(r, c.r_max);
}

TEST(TrainTask, RequiresOpenTaskAndData) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(1));
    AdapterStack stack(b.layers(), b.dim());
    EXPECT_THROW(train_task(b, stack, stream.tasks[0], small_config()), ProtocolError);
    stack.begin_task(1, 4, AdapterInit{}, 1);
    TaskDataset empty = stream.tasks[0];
    empty.train = Split{};
    EXPECT_THROW(train_task(b, stack, empty, small_config()), DataError);
}

TEST(TrainTask, UpdatesOnlyTheOpenTask) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    const TrainConfig c = small_config();
    AdapterStack stack(b.layers(), b.dim());
    stack.begin_task(1, c.r_max, c.adapter_init(), c.seed);
    train_task(b, stack, stream.tasks[0], c);
    const std::string backbone_before = serialize_checkpoint(b, AdapterStack{});
    const std::string history_before = stack_bytes(stack, 1);
    stack.begin_task(2, c.r_max, c.adapter_init(), c.seed);
    const std::string open_before = serialize_adapter(stack.adapter(1, 0));
    train_task(b, stack, stream.tasks[1], c, [&](std::size_t) {
        EXPECT_EQ(stack_bytes(stack, 1), history_before);
    });
    EXPECT_EQ(serialize_checkpoint(b, AdapterStack{}), backbone_before);
    EXPECT_EQ(stack_bytes(stack, 1), history_before);
    EXPECT_NE(serialize_adapter(stack.adapter(1, 0)), open_before);
}

TEST(TrainTask, FixedThresholdKeepsTauBitExact) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    TrainConfig c = small_config();
    c.threshold_mode = ThresholdMode::fixed;
    for (double tau : {1e-3, 1e-4, 1e-5}) {
        c.tau_init = tau;
        AdapterStack stack(b.layers(), b.dim());
        for (int t = 1; t <= 2; ++t) {
            stack.begin_task(t, c.r_max, c.adapter_init(), c.seed);
            const TaskTrainReport report = train_task(b, stack, stream.tasks[t - 1], c);
            for (double v : report.tau_per_layer) EXPECT_EQ(v, tau);
        }
        for (std::size_t l = 0; l < b.layers(); ++l) EXPECT_EQ(stack.adapter(1, l).tau_value(), tau);
    }
}

TEST(TrainTask, OAdapterKeepsFullWidthThroughout) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    TrainConfig c = small_config();
    c.variant = Variant::o_adapter;
    AdapterStack stack(b.layers(), b.dim());
    for (int t = 1; t <= 2; ++t) {
        stack.begin_task(t, c.r_max, c.adapter_init(), c.seed);
        const std::size_t k = stack.num_tasks() - 1;
        EXPECT_TRUE(stack.adapter(k, 0).g.frozen);
        EXPECT_TRUE(stack.adapter(k, 0).tau.frozen);
        train_task(b, stack, stream.tasks[t - 1], c, [&](std::size_t) {
            for (std::size_t l = 0; l < b.layers(); ++l) {
                const MaskSnapshot m = snapshot_mask(stack.adapter(k, l));
                ASSERT_EQ(m.r_eff, c.r_max);
                for (double g : m.gamma) ASSERT_EQ(g, 1.0);
            }
        });
    }
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t l = 0; l < b.layers(); ++l) EXPECT_EQ(stack.basis(k, l).r_eff(), c.r_max);
}

TEST(TrainTask, IncAdapterReportsOrthLossWithoutApplyingIt) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    TrainConfig c = small_config();
    c.variant = Variant::inc_adapter;
    AdapterStack stack(b.layers(), b.dim());
    stack.begin_task(1, c.r_max, c.adapter_init(), c.seed);
    train_task(b, stack, stream.tasks[0], c);
    stack.begin_task(2, c.r_max, c.adapter_init(), c.seed);
    const TaskTrainReport report = train_task(b, stack, stream.tasks[1], c);
    EXPECT_GT(report.final_orth_loss, 0.0);
}

TEST(RunSequence, SingleTaskGivesOneByOneMatrix) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(1));
    TrainConfig c = small_config();
    c.eval_every = 5;
    const SequenceResult r = run_sequence(b, stream, c);
    EXPECT_EQ(r.matrix.size(), 1u);
    EXPECT_TRUE(r.matrix.has(0, 0));
    EXPECT_EQ(r.reports.size(), 1u);
    EXPECT_FALSE(r.curves.empty());
    EXPECT_FALSE(r.stack.has_open_task());
}

TEST(RunSequence, RepeatedIdenticalTaskIsNotForgotten) {
    Backbone b = small_backbone();
    StreamOptions o = small_stream(2);
    o.force_identity_rotation = true;
    const TaskStream stream = gen_task_stream(3, o);
    ASSERT_FALSE(stream.tasks[1].descriptor.rotated);
    TrainConfig c = small_config();
    c.r_max = 16;
    const SequenceResult r = run_sequence(b, stream, c);
    EXPECT_GE(r.matrix.at(0, 1), r.matrix.at(0, 0) - 0.02);
}

TEST(RunSequence, FillsEveryColumnAndFlagsPreTraining) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(3));
    TrainConfig c = small_config();
    c.eval_every = 10;
    const SequenceResult r = run_sequence(b, stream, c);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_TRUE(r.matrix.has(i, j));
    for (const CurvePoint& p : r.curves) {
        EXPECT_GE(p.accuracy, 0.0);
        EXPECT_LE(p.accuracy, 1.0);
    }
}

TEST(RunSequence, SameSeedIsDeterministic) {
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    const TrainConfig c = small_config();
    const SequenceResult a = run_sequence(b, stream, c);
    const SequenceResult again = run_sequence(b, stream, c);
    EXPECT_EQ(a.matrix, again.matrix);
    EXPECT_EQ(stack_bytes(a.stack, 2), stack_bytes(again.stack, 2));
}

TEST(RunSequence, RejectsUnfrozenBackboneAndEmptyStream) {
    Backbone b = small_backbone();
    EXPECT_THROW(run_sequence(b, TaskStream{}, small_config()), ConfigError);
    const TaskStream stream = gen_task_stream(3, small_stream(1));
    b.head.frozen = false;
    EXPECT_THROW(run_sequence(b, stream, small_config()), ProtocolError);
}

TEST(RunSequence, OverflowingLossRaisesNumericalError) {
    // Orthogonality loss of two 1e200-scale up-projections overflows to inf.
    Backbone b = small_backbone();
    const TaskStream stream = gen_task_stream(3, small_stream(2));
    TrainConfig c = small_config();
    c.w2_init_scale = 1e200;
    EXPECT_THROW(run_sequence(b, stream, c), NumericalError);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oacl/errors.hpp"
#include "oacl/experiment.hpp"

using namespace oacl;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "seed": 7,
  "seeds": [7, 8],
  "stream": {"tasks": 2, "classes": 4, "input_dim": 8, "n_train_per_class": 30, "n_val_per_class": 5,
             "n_test_per_class": 15},
  "backbone": {"dim": 12, "layers": 2, "pretrain_per_class": 80, "pretrain_val_per_class": 20},
  "train": {"r_max": 4, "epochs": 1, "eval_every": 5, "lr": 0.005}
})";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("oacl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void expect_config_error(const std::string& text, const std::string& needle) {
    try {
        parse_config(text);
        ADD_FAILURE() << "expected ConfigError mentioning " << needle;
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

} // namespace

TEST(Config, EmptyObjectKeepsDefaults) {
    const ExperimentConfig c = parse_config("{}");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.stream.tasks, 4u);
    EXPECT_EQ(c.train.r_max, 16u);
    EXPECT_EQ(c.backbone.dim, 64u);
    EXPECT_FALSE(c.strict_grid);
}

TEST(Config, ReadsNestedFields) {
    const ExperimentConfig c = parse_config(
        R"({"seed": 3, "order": [2, 1], "arms": ["oa_adapter", "oa_adapter/fixed"],
            "stream": {"tasks": 2, "shift": "rotation+relabel"},
            "train": {"variant": "inc_adapter", "lambda_l2": 0.5, "optimizer": "sgd_momentum"}})");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.order, (std::vector<int>{2, 1}));
    ASSERT_EQ(c.arms.size(), 2u);
    EXPECT_EQ(c.arms[1].threshold_mode, ThresholdMode::fixed);
    EXPECT_EQ(c.stream.shift, Shift::rotation_relabel);
    EXPECT_EQ(c.train.variant, Variant::inc_adapter);
    EXPECT_EQ(c.train.lambda_l2, 0.5);
    EXPECT_EQ(c.train.optimizer, OptimizerKind::sgd_momentum);
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
    expect_config_error(R"({"sed": 1})", "sed");
    expect_config_error(R"({"train": {"lambda_orht": 1}})", "train.lambda_orht");
    expect_config_error(R"({"stream": {"tasks": 2, "extra": true}})", "stream.extra");
}

TEST(Config, BadValuesNameTheField) {
    expect_config_error("{not json", "JSON");
    expect_config_error(R"({"train": {"lr": "fast"}})", "train.lr");
    expect_config_error(R"({"train": {"r_max": -2}})", "train.r_max");
    expect_config_error(R"({"train": {"lambda_orth": -1}})", "lambda_orth");
    expect_config_error(R"({"train": {"variant": "lora"}})", "train.variant");
    expect_config_error(R"({"stream": {"tasks": 3}, "order": [1, 1, 2]})", "order");
    expect_config_error(R"({"seeds": []})", "seeds");
    expect_config_error(R"({"strict_grid": true, "train": {"tau_init": 0.01}})", "tau_init");
    EXPECT_NO_THROW(parse_config(R"({"train": {"tau_init": 0.01}})"));
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    const ExperimentConfig c = parse_config(
        R"({"seed": 11, "order": [3, 1, 2], "stream": {"tasks": 3, "noise": 0.25},
            "arms": ["o_adapter", "inc_adapter"], "train": {"tau_init": 1e-5, "epochs": 2}})");
    const std::string text = config_to_json(c);
    EXPECT_EQ(config_to_json(parse_config(text)), text);
    const ExperimentConfig back = parse_config(text);
    EXPECT_EQ(back.order, c.order);
    EXPECT_EQ(back.train.tau_init, 1e-5);
    EXPECT_EQ(back.stream.noise, 0.25);
    EXPECT_EQ(back.arms, c.arms);
}

TEST(Arm, ParseAndName) {
    EXPECT_EQ(Arm::parse("oa_adapter").name(), "oa_adapter");
    EXPECT_EQ(Arm::parse("oa_adapter/fixed").name(), "oa_adapter/fixed");
    EXPECT_EQ(Arm::parse("o_adapter/dynamic").name(), "o_adapter");
    EXPECT_THROW(Arm::parse("x/fixed"), ConfigError);
    EXPECT_THROW(Arm::parse("oa_adapter/sometimes"), ConfigError);
}

TEST(Artifacts, AccuracyCsvRoundTrip) {
    AccuracyMatrix m(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) m.set(i, j, (1.0 + static_cast<double>(i * 3 + j)) / 11.0);
    const fs::path dir = scratch("acc_csv");
    write_accuracy_csv(dir / "a.csv", m);
    EXPECT_EQ(read_accuracy_csv(dir / "a.csv"), m);
    EXPECT_THROW(read_accuracy_csv(dir / "missing.csv"), DataError);
}

TEST(Artifacts, RunWritesEveryFileAndSummaryIsReproducible) {
    const ExperimentConfig c = parse_config(kSmall);
    const RunResult a = run_experiment(c, 7);
    const RunResult b = run_experiment(c, 7);
    EXPECT_EQ(summary_json(c, a), summary_json(c, b));
    EXPECT_NE(summary_json(c, a), summary_json(c, run_experiment(c, 8)));

    const fs::path d1 = scratch("run1"), d2 = scratch("run2");
    write_artifacts(d1, c, a);
    write_artifacts(d2, c, b);
    for (const char* f : {"config.json", "accuracy_matrix.csv", "curves.csv", "dims.csv", "overlaps.csv", "summary.json",
                          "timing.json", "model.oacl"}) {
        EXPECT_TRUE(fs::exists(d1 / f)) << f;
    }
    EXPECT_EQ(slurp(d1 / "summary.json"), slurp(d2 / "summary.json"));
    EXPECT_EQ(slurp(d1 / "model.oacl"), slurp(d2 / "model.oacl"));
    EXPECT_EQ(read_accuracy_csv(d1 / "accuracy_matrix.csv"), a.sequence.matrix);
    const ExperimentConfig snapshot = load_config(d1 / "config.json");
    EXPECT_EQ(snapshot.seed, 7u);
    EXPECT_EQ(config_to_json(snapshot), slurp(d1 / "config.json"));
    EXPECT_EQ(slurp(d1 / "dims.csv").substr(0, 21), "task,layer,r_eff,tau\n");
    EXPECT_EQ(slurp(d1 / "curves.csv").substr(0, 35), "step,trained_task,task_id,accuracy\n");
}

TEST(Artifacts, OrderIsRecorded) {
    ExperimentConfig c = parse_config(kSmall);
    c.order = {2, 1};
    const RunResult r = run_experiment(c, 7);
    EXPECT_EQ(r.stream.order, (std::vector<int>{2, 1}));
    EXPECT_NE(summary_json(c, r).find("\"order_id\": \"2-1\""), std::string::npos);
}

TEST(Commands, RunAndReport) {
    const fs::path dir = scratch("cmd_run");
    {
        std::ofstream(dir / "config.json") << kSmall;
    }
    CommandOptions opts;
    opts.config_path = dir / "config.json";
    opts.out = dir / "out";
    std::ostringstream log;
    ASSERT_EQ(cmd_run(opts, log), kExitOk) << log.str();

    std::ostringstream out, err;
    EXPECT_EQ(cmd_report({dir / "out"}, out, err), kExitOk) << err.str();
    EXPECT_NE(out.str().find("avg_final_accuracy"), std::string::npos);

    opts.out = dir / "out_seed";
    opts.seed = 8;
    ASSERT_EQ(cmd_run(opts, log), kExitOk);
    std::ostringstream diff;
    EXPECT_EQ(cmd_report({dir / "out", dir / "out_seed"}, diff, err), kExitOk) << err.str();
    EXPECT_NE(diff.str().find("avg_final_accuracy"), std::string::npos);

    fs::create_directories(dir / "empty");
    EXPECT_EQ(cmd_report({dir / "empty"}, out, err), kExitConfig);
    EXPECT_EQ(cmd_report({}, out, err), kExitConfig);
}

TEST(Commands, RunRejectsBadConfig) {
    const fs::path dir = scratch("cmd_bad");
    {
        std::ofstream(dir / "bad.json") << R"({"train": {"bogus": 1}})";
    }
    CommandOptions opts;
    opts.config_path = dir / "bad.json";
    std::ostringstream log;
    EXPECT_EQ(cmd_run(opts, log), kExitConfig);
    EXPECT_NE(log.str().find("train.bogus"), std::string::npos);
}

TEST(Commands, CompareWritesOneRowPerArm) {
    const fs::path dir = scratch("cmd_compare");
    {
        std::ofstream(dir / "config.json") << kSmall;
    }
    CommandOptions opts;
    opts.config_path = dir / "config.json";
    opts.out = dir / "out";
    opts.arms = {"oa_adapter", "inc_adapter"};
    std::ostringstream log;
    ASSERT_EQ(cmd_compare(opts, log), kExitOk) << log.str();
    std::istringstream csv(slurp(dir / "out" / "compare.csv"));
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(csv, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[1].rfind("oa_adapter,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("inc_adapter,", 0), 0u);
    EXPECT_TRUE(fs::exists(dir / "out" / "oa_adapter" / "seed_8" / "summary.json"));

    opts.arms = {"oa_adapter"};
    EXPECT_EQ(cmd_compare(opts, log), kExitConfig);
    opts.arms = {"oa_adapter", "oa_adapter/dynamic"};
    EXPECT_EQ(cmd_compare(opts, log), kExitConfig);
}

TEST(Aggregate, MeanAndSampleStd) {
    const std::vector<Arm> arms{Arm::parse("oa_adapter"), Arm::parse("inc_adapter")};
    std::vector<std::vector<RunResult>> runs(2);
    const double accs[2][3] = {{0.5, 0.7, 0.6}, {0.2, 0.2, 0.2}};
    for (std::size_t a = 0; a < 2; ++a)
        for (double acc : accs[a]) {
            RunResult r;
            r.avg_final_accuracy = acc;
            r.stream.order = {1};
            r.sequence.matrix = AccuracyMatrix(1);
            r.sequence.matrix.set(0, 0, acc);
            runs[a].push_back(r);
        }
    const auto rows = aggregate(arms, runs, {0, 1});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_NEAR(rows[0].acc_mean, 0.6, 1e-15);
    EXPECT_NEAR(rows[0].acc_std, 0.1, 1e-15);
    EXPECT_NEAR(rows[1].acc_std, 0.0, 1e-15);
    EXPECT_EQ(rows[1].failures, 1u);
    EXPECT_NEAR(rows[0].task1_final_mean, 0.6, 1e-15);
}

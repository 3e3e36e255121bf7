#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oacl/backbone.hpp"
#include "oacl/metrics.hpp"
#include "oacl/orthogonality.hpp"
#include "oacl/tasks.hpp"
#include "oacl/trainer.hpp"

namespace oacl {

/// One arm of a comparison: a variant plus a threshold mode.
struct Arm {
    Variant variant = Variant::oa_adapter;
    ThresholdMode threshold_mode = ThresholdMode::dynamic;

    /// "oa_adapter", "inc_adapter", "oa_adapter/fixed", ...
    static Arm parse(const std::string& text);
    std::string name() const;
    bool operator==(const Arm&) const = default;
};

struct ExperimentConfig {
    TrainConfig train;
    StreamOptions stream;
    BackboneShape backbone; ///< input_dim and classes follow the stream
    PretrainOptions pretrain;
    std::size_t pretrain_per_class = 500;
    std::size_t pretrain_val_per_class = 100;
    std::vector<int> order; ///< 1-based task permutation; empty keeps generation order
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<Arm> arms;  ///< compare arms
    std::filesystem::path output_dir = "runs/default";
    bool strict_grid = false;
};

/// Parses a JSON config. Every object level rejects unknown keys; missing
/// keys keep their defaults. Throws ConfigError with the offending field path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

struct RunResult {
    std::uint64_t seed = 0;
    Backbone backbone;
    TaskStream stream;
    SequenceResult sequence;
    BudgetReport budget;
    std::vector<OverlapEntry> overlaps;
    double avg_final_accuracy = 0.0;
    std::vector<double> forgetting;
    double mean_overlap = 0.0;
    double pretrain_wall_time = 0.0;
};

/// Pretrain, run the task sequence with `seed`, and compute all metrics.
RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed);

/// Writes config.json, accuracy_matrix.csv, curves.csv, dims.csv,
/// overlaps.csv, summary.json, timing.json and model.oacl into dir.
void write_artifacts(const std::filesystem::path& dir, const ExperimentConfig& config, const RunResult& run);
/// summary.json contents; contains no timing so reruns are byte-identical.
std::string summary_json(const ExperimentConfig& config, const RunResult& run);

/// Accuracy matrix round trip through accuracy_matrix.csv.
void write_accuracy_csv(const std::filesystem::path& path, const AccuracyMatrix& m);
AccuracyMatrix read_accuracy_csv(const std::filesystem::path& path);

/// Per-arm aggregate over seeds, one row of compare.csv.
struct CompareRow {
    Arm arm;
    std::size_t runs = 0;
    std::size_t failures = 0;
    double acc_mean = 0.0;
    double acc_std = 0.0; ///< sample standard deviation, 0 for a single run
    double task1_final_mean = 0.0;
    double budget_mean = 0.0;
    double params_saved_mean = 0.0;
    double overlap_mean = 0.0;
};

/// Exit codes shared by the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct CommandOptions {
    std::filesystem::path config_path;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> arms;
    std::vector<std::uint64_t> seeds;
};

/// Each command prints human-readable progress and errors to `log` and
/// returns an exit code instead of throwing.
int cmd_run(const CommandOptions& options, std::ostream& log);
int cmd_compare(const CommandOptions& options, std::ostream& log);
/// One directory prints a summary; two print side-by-side deltas
/// recomputed from the CSV artifacts.
int cmd_report(const std::vector<std::filesystem::path>& dirs, std::ostream& out, std::ostream& log);

/// Aggregates per-arm results; used by cmd_compare and the acceptance suite.
std::vector<CompareRow> aggregate(const std::vector<Arm>& arms, const std::vector<std::vector<RunResult>>& runs,
                                  const std::vector<std::size_t>& failures);
void write_compare_csv(const std::filesystem::path& path, const std::vector<CompareRow>& rows);

} // namespace oacl

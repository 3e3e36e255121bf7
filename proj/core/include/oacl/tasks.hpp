#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oacl/matrix.hpp"
#include "oacl/rng.hpp"

namespace oacl {

/// Labeled samples; row i of x pairs with y[i].
struct Split {
    Matrix2D x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
    bool empty() const { return y.empty(); }
    bool operator==(const Split&) const = default;
};

enum class Shift {
    rotation,         ///< fresh Haar rotation of the inputs
    rotation_relabel, ///< rotation plus a random permutation of class ids
};

Shift parse_shift(const std::string& text);
std::string to_string(Shift shift);

/// Gaussian clusters around unit-norm, mutually orthogonal class means.
struct BaseDistribution {
    Matrix2D means; ///< C × d_in
    double noise = 0.3;

    std::size_t classes() const { return means.rows(); }
    std::size_t input_dim() const { return means.cols(); }
};

BaseDistribution make_base_distribution(std::uint64_t seed, std::size_t classes, std::size_t input_dim,
                                        double noise = 0.3);

/// n_per_class samples of every class. Inputs are optionally rotated
/// (x ← Q·x) and labels optionally permuted (y ← π[y]).
Split sample_split(const BaseDistribution& dist, std::size_t n_per_class, Rng& rng,
                   const Matrix2D* rotation = nullptr, std::span<const int> label_permutation = {});

/// Samples from the base distribution of `seed`. Distinct `sample_stream`
/// values give independent draws from the same clusters.
Split gen_base(std::uint64_t seed, std::size_t classes, std::size_t input_dim, std::size_t n_per_class,
               std::uint64_t sample_stream = 0);

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with R's
/// diagonal made positive.
Matrix2D random_orthogonal(std::size_t n, Rng& rng);

struct TaskDescriptor {
    std::uint64_t rotation_seed = 0;
    bool rotated = false;
    std::vector<int> label_permutation;
    double noise = 0.3;
};

struct TaskDataset {
    int task_id = 0;
    Split train;
    Split val;
    Split test;
    TaskDescriptor descriptor;
    Matrix2D rotation; ///< d_in × d_in; identity for the base task
};

struct TaskStream {
    std::vector<TaskDataset> tasks;
    /// order[k] is the generation id of the k-th presented task.
    std::vector<int> order;
    std::string order_id;

    std::size_t size() const { return tasks.size(); }
};

struct StreamOptions {
    std::size_t tasks = 4;
    std::size_t classes = 8;
    std::size_t input_dim = 32;
    std::size_t n_train_per_class = 250;
    std::size_t n_val_per_class = 50;
    std::size_t n_test_per_class = 100;
    Shift shift = Shift::rotation;
    double noise = 0.3;
    /// Test hook: use Q_t = I for every task.
    bool force_identity_rotation = false;
};

/// Task 1 is the base distribution; task t > 1 rotates it by a fresh Haar
/// rotation and, for rotation_relabel, permutes the labels. Each task is a
/// function of (seed, task id) only.
TaskStream gen_task_stream(std::uint64_t seed, const StreamOptions& options);

/// Presents tasks in the given 1-based order. Throws ContractError unless
/// `permutation` is a bijection on [1..T].
TaskStream reorder(const TaskStream& stream, std::span<const int> permutation);

/// Header "x0,...,x{d-1},label", one sample per row.
void write_split_csv(const std::filesystem::path& path, const Split& split);
Split read_split_csv(const std::filesystem::path& path);

} // namespace oacl

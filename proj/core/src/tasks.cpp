#include "oacl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "oacl/errors.hpp"
#include "oacl/text_io.hpp"

namespace oacl {

Shift parse_shift(const std::string& text) {
    if (text == "rotation") return Shift::rotation;
    if (text == "rotation+relabel" || text == "rotation_relabel") return Shift::rotation_relabel;
    throw ConfigError("unknown shift '" + text + "' (expected rotation or rotation+relabel)");
}

std::string to_string(Shift shift) {
    return shift == Shift::rotation ? "rotation" : "rotation+relabel";
}

Matrix2D random_orthogonal(std::size_t n, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix2D a(n, n);
    for (double& v : a.data()) v = normal(rng);

    // Modified Gram-Schmidt on columns, two passes. Positive norms make R's
    // diagonal positive, which is the sign correction Haar sampling needs.
    Matrix2D q(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> v = a.column(j);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += q(i, k) * v[i];
                for (std::size_t i = 0; i < n; ++i) v[i] -= dot * q(i, k);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericalError("random_orthogonal: rank-deficient Gaussian draw");
        for (std::size_t i = 0; i < n; ++i) q(i, j) = v[i] / norm;
    }
    return q;
}

BaseDistribution make_base_distribution(std::uint64_t seed, std::size_t classes, std::size_t input_dim,
                                        double noise) {
    if (classes < 2) throw ConfigError("base distribution needs at least 2 classes");
    if (input_dim < classes) {
        throw ConfigError("cannot place " + std::to_string(classes) + " class means " +
                          "at >= 60 degrees apart in dimension " + std::to_string(input_dim));
    }
    Rng rng = make_rng(seed, "base-means");
    Matrix2D q = random_orthogonal(input_dim, rng);
    BaseDistribution dist;
    dist.noise = noise;
    dist.means = Matrix2D(classes, input_dim);
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < input_dim; ++j) dist.means(c, j) = q(j, c);
    return dist;
}

Split sample_split(const BaseDistribution& dist, std::size_t n_per_class, Rng& rng, const Matrix2D* rotation,
                   std::span<const int> label_permutation) {
    if (n_per_class == 0) throw DataError("sample_split: empty dataset requested (n = 0)");
    const std::size_t classes = dist.classes();
    const std::size_t d = dist.input_dim();
    if (!label_permutation.empty() && label_permutation.size() != classes) {
        throw DimensionError("sample_split: label permutation has wrong length");
    }
    std::normal_distribution<double> normal(0.0, dist.noise);
    Split s;
    s.x = Matrix2D(classes * n_per_class, d);
    s.y.resize(classes * n_per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const int label = label_permutation.empty() ? static_cast<int>(c) : label_permutation[c];
        for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
            for (std::size_t j = 0; j < d; ++j) s.x(row, j) = dist.means(c, j) + normal(rng);
            s.y[row] = label;
        }
    }
    if (rotation != nullptr) s.x = matmul_nt(s.x, *rotation);
    return s;
}

Split gen_base(std::uint64_t seed, std::size_t classes, std::size_t input_dim, std::size_t n_per_class,
               std::uint64_t sample_stream) {
    if (n_per_class == 0) throw DataError("gen_base: empty dataset requested (n = 0)");
    const BaseDistribution dist = make_base_distribution(seed, classes, input_dim);
    Rng rng = make_rng(seed, "base-samples", sample_stream);
    return sample_split(dist, n_per_class, rng);
}

TaskStream gen_task_stream(std::uint64_t seed, const StreamOptions& options) {
    if (options.tasks == 0) throw ConfigError("task stream needs at least one task");
    const BaseDistribution dist = make_base_distribution(seed, options.classes, options.input_dim, options.noise);

    TaskStream stream;
    for (std::size_t t = 1; t <= options.tasks; ++t) {
        TaskDataset task;
        task.task_id = static_cast<int>(t);
        task.descriptor.noise = options.noise;
        task.descriptor.rotation_seed = derive_seed(seed, "task-rotation", t);
        task.rotation = Matrix2D::identity(options.input_dim);

        std::vector<int> perm(options.classes);
        std::iota(perm.begin(), perm.end(), 0);
        if (t > 1) {
            Rng rot_rng(task.descriptor.rotation_seed);
            if (!options.force_identity_rotation) {
                task.rotation = random_orthogonal(options.input_dim, rot_rng);
                task.descriptor.rotated = true;
            }
            if (options.shift == Shift::rotation_relabel) {
                Rng perm_rng = make_rng(seed, "task-labels", t);
                std::shuffle(perm.begin(), perm.end(), perm_rng);
            }
        }
        task.descriptor.label_permutation = perm;

        Rng sample_rng = make_rng(seed, "task-samples", t);
        const Matrix2D* rot = task.descriptor.rotated ? &task.rotation : nullptr;
        task.train = sample_split(dist, options.n_train_per_class, sample_rng, rot, perm);
        task.val = sample_split(dist, options.n_val_per_class, sample_rng, rot, perm);
        task.test = sample_split(dist, options.n_test_per_class, sample_rng, rot, perm);
        stream.order.push_back(task.task_id);
        stream.tasks.push_back(std::move(task));
    }
    stream.order_id = "identity";
    return stream;
}

TaskStream reorder(const TaskStream& stream, std::span<const int> permutation) {
    const std::size_t n = stream.size();
    if (permutation.size() != n) {
        throw ContractError("reorder: permutation of length " + std::to_string(permutation.size()) + " for " +
                            std::to_string(n) + " tasks");
    }
    std::vector<bool> seen(n, false);
    for (int p : permutation) {
        if (p < 1 || static_cast<std::size_t>(p) > n || seen[static_cast<std::size_t>(p - 1)]) {
            throw ContractError("reorder: not a bijection on [1.." + std::to_string(n) + "]");
        }
        seen[static_cast<std::size_t>(p - 1)] = true;
    }
    TaskStream out;
    bool identity = true;
    for (std::size_t k = 0; k < n; ++k) {
        const auto src = static_cast<std::size_t>(permutation[k] - 1);
        out.tasks.push_back(stream.tasks[src]);
        out.order.push_back(stream.order[src]);
    }
    std::string id;
    for (std::size_t k = 0; k < n; ++k) {
        if (out.order[k] != static_cast<int>(k + 1)) identity = false;
        id += (k ? "-" : "") + std::to_string(out.order[k]);
    }
    out.order_id = identity ? "identity" : id;
    return out;
}

void write_split_csv(const std::filesystem::path& path, const Split& split) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t j = 0; j < split.x.cols(); ++j) out << 'x' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < split.size(); ++i) {
        for (double v : split.x.row(i)) out << text::format_double(v) << ',';
        out << split.y[i] << '\n';
    }
}

Split read_split_csv(const std::filesystem::path& path) {
    const text::CsvTable table = text::read_csv(path.string());
    if (table.header.empty() || table.header.back() != "label") {
        throw DataError(path.string() + ": last column must be 'label'");
    }
    const std::size_t d = table.header.size() - 1;
    Split s;
    s.x = Matrix2D(table.rows.size(), d);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) s.x(i, j) = text::parse_double(table.rows[i][j]);
        s.y.push_back(static_cast<int>(text::parse_int(table.rows[i][d])));
    }
    return s;
}

} // namespace oacl

#include "oacl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "oacl/checkpoint.hpp"
#include "oacl/errors.hpp"
#include "oacl/text_io.hpp"

namespace oacl {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

/// Reads fields of one JSON object and remembers which keys were consumed so
/// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "must be an object");
    }

    const json* find(const std::string& key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void number(const std::string& key, double& dst) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
            dst = v->get<double>();
        }
    }
    void count(const std::string& key, std::size_t& dst) {
        if (const json* v = find(key)) dst = as_count(*v, field(key));
    }
    void u64(const std::string& key, std::uint64_t& dst) {
        if (const json* v = find(key)) dst = as_count(*v, field(key));
    }
    void boolean(const std::string& key, bool& dst) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
            dst = v->get<bool>();
        }
    }
    void string(const std::string& key, std::string& dst) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(field(key) + " must be a string");
            dst = v->get<std::string>();
        }
    }
    const json* array(const std::string& key) {
        const json* v = find(key);
        if (v != nullptr && !v->is_array()) throw ConfigError(field(key) + " must be an array");
        return v;
    }
    /// Wraps parse functions so their errors carry the field path.
    template <typename Fn>
    void parsed(const std::string& key, Fn&& fn) {
        std::string text;
        string(key, text);
        if (text.empty() && find(key) == nullptr) return;
        try {
            fn(text);
        } catch (const ConfigError& e) {
            throw ConfigError(field(key) + ": " + e.what());
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError("unknown key '" + field(it.key()) + "'");
        }
    }

    static std::uint64_t as_count(const json& v, const std::string& name) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(name + " must be a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

private:
    std::string where() const { return path_.empty() ? "config " : path_ + " "; }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing artifact " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

} // namespace

Arm Arm::parse(const std::string& text) {
    Arm arm;
    const auto slash = text.find('/');
    arm.variant = parse_variant(text.substr(0, slash));
    if (slash != std::string::npos) arm.threshold_mode = parse_threshold_mode(text.substr(slash + 1));
    return arm;
}

std::string Arm::name() const {
    std::string n = to_string(variant);
    if (threshold_mode == ThresholdMode::fixed) n += "/fixed";
    return n;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig cfg;
    ObjectReader top(root, "");
    top.u64("seed", cfg.seed);
    if (const json* seeds = top.array("seeds")) {
        cfg.seeds.clear();
        for (const json& s : *seeds) cfg.seeds.push_back(ObjectReader::as_count(s, "seeds[]"));
    }
    std::string out_dir = cfg.output_dir.string();
    top.string("output_dir", out_dir);
    cfg.output_dir = out_dir;
    top.boolean("strict_grid", cfg.strict_grid);
    if (const json* order = top.array("order")) {
        for (const json& o : *order) cfg.order.push_back(static_cast<int>(ObjectReader::as_count(o, "order[]")));
    }
    if (const json* arms = top.array("arms")) {
        for (const json& a : *arms) {
            if (!a.is_string()) throw ConfigError("arms[] entries must be strings");
            try {
                cfg.arms.push_back(Arm::parse(a.get<std::string>()));
            } catch (const ConfigError& e) {
                throw ConfigError(std::string("arms: ") + e.what());
            }
        }
    }

    if (const json* s = top.find("stream")) {
        ObjectReader r(*s, "stream");
        r.count("tasks", cfg.stream.tasks);
        r.count("classes", cfg.stream.classes);
        r.count("input_dim", cfg.stream.input_dim);
        r.count("n_train_per_class", cfg.stream.n_train_per_class);
        r.count("n_val_per_class", cfg.stream.n_val_per_class);
        r.count("n_test_per_class", cfg.stream.n_test_per_class);
        r.parsed("shift", [&](const std::string& t) { cfg.stream.shift = parse_shift(t); });
        r.number("noise", cfg.stream.noise);
        r.boolean("identity_rotation", cfg.stream.force_identity_rotation);
        r.finish();
    }
    if (const json* b = top.find("backbone")) {
        ObjectReader r(*b, "backbone");
        r.count("dim", cfg.backbone.dim);
        r.count("layers", cfg.backbone.layers);
        r.count("pretrain_steps", cfg.pretrain.max_steps);
        r.count("pretrain_batch_size", cfg.pretrain.batch_size);
        r.number("pretrain_lr", cfg.pretrain.lr);
        r.count("pretrain_eval_every", cfg.pretrain.eval_every);
        r.number("pretrain_target", cfg.pretrain.target_accuracy);
        r.count("pretrain_per_class", cfg.pretrain_per_class);
        r.count("pretrain_val_per_class", cfg.pretrain_val_per_class);
        r.finish();
    }
    if (const json* t = top.find("train")) {
        ObjectReader r(*t, "train");
        TrainConfig& tc = cfg.train;
        r.parsed("variant", [&](const std::string& v) { tc.variant = parse_variant(v); });
        r.parsed("threshold_mode", [&](const std::string& v) { tc.threshold_mode = parse_threshold_mode(v); });
        r.number("tau_init", tc.tau_init);
        r.number("lambda_orth", tc.lambda_orth);
        r.number("lambda_l2", tc.lambda_l2);
        r.count("r_max", tc.r_max);
        r.parsed("optimizer", [&](const std::string& v) { tc.optimizer = parse_optimizer(v); });
        r.number("lr", tc.lr);
        r.count("batch_size", tc.batch_size);
        r.count("epochs", tc.epochs);
        r.number("g_init", tc.g_init);
        r.number("w2_init_scale", tc.w2_init_scale);
        r.count("eval_every", tc.eval_every);
        r.finish();
    }
    top.finish();

    cfg.backbone.input_dim = cfg.stream.input_dim;
    cfg.backbone.classes = cfg.stream.classes;
    cfg.train.seed = cfg.seed;

    if (cfg.stream.tasks == 0) throw ConfigError("stream.tasks must be >= 1");
    if (cfg.stream.classes < 2) throw ConfigError("stream.classes must be >= 2");
    if (cfg.stream.input_dim < cfg.stream.classes) throw ConfigError("stream.input_dim must be >= stream.classes");
    if (cfg.stream.n_train_per_class == 0 || cfg.stream.n_test_per_class == 0) {
        throw ConfigError("stream.n_train_per_class and stream.n_test_per_class must be >= 1");
    }
    if (!(cfg.stream.noise >= 0.0)) throw ConfigError("stream.noise must be >= 0");
    if (cfg.backbone.dim == 0) throw ConfigError("backbone.dim must be >= 1");
    if (cfg.backbone.layers == 0) throw ConfigError("backbone.layers must be >= 1");
    if (cfg.pretrain.batch_size == 0) throw ConfigError("backbone.pretrain_batch_size must be >= 1");
    if (!(cfg.pretrain.lr > 0.0)) throw ConfigError("backbone.pretrain_lr must be > 0");
    if (cfg.pretrain_per_class == 0 || cfg.pretrain_val_per_class == 0) {
        throw ConfigError("backbone.pretrain_per_class and backbone.pretrain_val_per_class must be >= 1");
    }
    if (!cfg.order.empty()) {
        std::vector<bool> seen(cfg.stream.tasks, false);
        if (cfg.order.size() != cfg.stream.tasks) throw ConfigError("order must list every task exactly once");
        for (int o : cfg.order) {
            if (o < 1 || static_cast<std::size_t>(o) > cfg.stream.tasks || seen[static_cast<std::size_t>(o - 1)]) {
                throw ConfigError("order must be a permutation of 1.." + std::to_string(cfg.stream.tasks));
            }
            seen[static_cast<std::size_t>(o - 1)] = true;
        }
    }
    if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
    try {
        cfg.train.validate(cfg.strict_grid);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    ojson j;
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir.string();
    j["strict_grid"] = c.strict_grid;
    j["order"] = c.order;
    std::vector<std::string> arms;
    for (const Arm& a : c.arms) arms.push_back(a.name());
    j["arms"] = arms;
    j["stream"] = {{"tasks", c.stream.tasks},
                   {"classes", c.stream.classes},
                   {"input_dim", c.stream.input_dim},
                   {"n_train_per_class", c.stream.n_train_per_class},
                   {"n_val_per_class", c.stream.n_val_per_class},
                   {"n_test_per_class", c.stream.n_test_per_class},
                   {"shift", to_string(c.stream.shift)},
                   {"noise", c.stream.noise},
                   {"identity_rotation", c.stream.force_identity_rotation}};
    j["backbone"] = {{"dim", c.backbone.dim},
                     {"layers", c.backbone.layers},
                     {"pretrain_steps", c.pretrain.max_steps},
                     {"pretrain_batch_size", c.pretrain.batch_size},
                     {"pretrain_lr", c.pretrain.lr},
                     {"pretrain_eval_every", c.pretrain.eval_every},
                     {"pretrain_target", c.pretrain.target_accuracy},
                     {"pretrain_per_class", c.pretrain_per_class},
                     {"pretrain_val_per_class", c.pretrain_val_per_class}};
    const TrainConfig& t = c.train;
    j["train"] = {{"variant", to_string(t.variant)},
                  {"threshold_mode", to_string(t.threshold_mode)},
                  {"tau_init", t.tau_init},
                  {"lambda_orth", t.lambda_orth},
                  {"lambda_l2", t.lambda_l2},
                  {"r_max", t.r_max},
                  {"optimizer", to_string(t.optimizer)},
                  {"lr", t.lr},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"g_init", t.g_init},
                  {"w2_init_scale", t.w2_init_scale},
                  {"eval_every", t.eval_every}};
    return j.dump(2) + "\n";
}

RunResult run_experiment(const ExperimentConfig& config, std::uint64_t seed) {
    RunResult run;
    run.seed = seed;
    TrainConfig train = config.train;
    train.seed = seed;

    run.stream = gen_task_stream(seed, config.stream);
    if (!config.order.empty()) run.stream = reorder(run.stream, config.order);

    const auto t0 = std::chrono::steady_clock::now();
    const BaseDistribution base =
        make_base_distribution(seed, config.stream.classes, config.stream.input_dim, config.stream.noise);
    Rng pre_rng = make_rng(seed, "pretrain-samples");
    const Split pre_train = sample_split(base, config.pretrain_per_class, pre_rng);
    const Split pre_val = sample_split(base, config.pretrain_val_per_class, pre_rng);
    run.backbone = build_and_pretrain(seed, config.backbone, pre_train, pre_val, config.pretrain);
    run.pretrain_wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    run.sequence = run_sequence(run.backbone, run.stream, train);
    run.budget = budget_report(run.sequence.stack);
    run.overlaps = overlap_table(run.sequence.stack);
    run.avg_final_accuracy = avg_final_accuracy(run.sequence.matrix);
    run.forgetting = forgetting_per_task(run.sequence.matrix);
    std::vector<double> ov;
    for (const OverlapEntry& e : run.overlaps) ov.push_back(e.overlap);
    run.mean_overlap = mean_of(ov);
    return run;
}

void write_accuracy_csv(const fs::path& path, const AccuracyMatrix& m) {
    std::ostringstream out;
    out << "i,j,accuracy,pre_training\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (!m.has(i, j)) continue;
            out << i + 1 << ',' << j + 1 << ',' << text::format_double(m.at(i, j)) << ','
                << (AccuracyMatrix::is_pre_training(i, j) ? 1 : 0) << '\n';
        }
    }
    write_text(path, out.str());
}

AccuracyMatrix read_accuracy_csv(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing artifact " + path.string());
    const text::CsvTable table = text::read_csv(path.string());
    const std::size_t ci = table.column("i");
    const std::size_t cj = table.column("j");
    const std::size_t ca = table.column("accuracy");
    long long n = 0;
    for (const auto& row : table.rows) n = std::max({n, text::parse_int(row[ci]), text::parse_int(row[cj])});
    AccuracyMatrix m(static_cast<std::size_t>(n));
    for (const auto& row : table.rows) {
        const long long i = text::parse_int(row[ci]);
        const long long j = text::parse_int(row[cj]);
        if (i < 1 || j < 1) throw DataError(path.string() + ": indices are 1-based");
        m.set(static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1), text::parse_double(row[ca]));
    }
    return m;
}

std::string summary_json(const ExperimentConfig& config, const RunResult& run) {
    ojson j;
    j["variant"] = to_string(config.train.variant);
    j["threshold_mode"] = to_string(config.train.threshold_mode);
    j["seed"] = run.seed;
    j["order_id"] = run.stream.order_id;
    j["tasks"] = run.stream.order;
    j["avg_final_accuracy"] = run.avg_final_accuracy;
    j["forgetting"] = run.forgetting;

    std::vector<double> final_column;
    const AccuracyMatrix& m = run.sequence.matrix;
    for (std::size_t i = 0; i < m.size(); ++i) final_column.push_back(m.at(i, m.size() - 1));
    j["final_accuracy_per_task"] = final_column;

    const BudgetReport& b = run.budget;
    j["budget"] = {{"r_max", b.r_max},
                   {"dim", b.dim},
                   {"avg_final_budget", b.avg_final_budget},
                   {"task_mean_r_eff", b.task_mean_r_eff()},
                   {"r_eff", b.r_eff},
                   {"active_params", b.active_params},
                   {"allocated_params", b.allocated_params},
                   {"total_active", b.total_active},
                   {"total_allocated", b.total_allocated},
                   {"params_saved", b.params_saved()}};

    ojson entries = ojson::array();
    for (const OverlapEntry& e : run.overlaps) {
        entries.push_back({{"task_t", e.task_t}, {"task_s", e.task_s}, {"layer", e.layer}, {"overlap", e.overlap}});
    }
    j["overlap"] = {{"mean", run.mean_overlap}, {"pairs", entries}};

    ojson reports = ojson::array();
    for (const TaskTrainReport& r : run.sequence.reports) {
        reports.push_back({{"task_id", r.task_id},
                           {"final_task_loss", r.final_task_loss},
                           {"final_orth_loss", r.final_orth_loss},
                           {"r_eff_per_layer", r.r_eff_per_layer},
                           {"tau_per_layer", r.tau_per_layer},
                           {"steps", r.steps}});
    }
    j["task_reports"] = reports;
    j["pretrain"] = {{"steps", run.backbone.pretrain_steps},
                     {"held_out_accuracy", run.backbone.pretrain_accuracy},
                     {"warning", run.backbone.pretrain_warning}};
    return j.dump(2) + "\n";
}

void write_artifacts(const fs::path& dir, const ExperimentConfig& config, const RunResult& run) {
    fs::create_directories(dir);
    ExperimentConfig snapshot = config;
    snapshot.seed = run.seed;
    snapshot.train.seed = run.seed;
    write_text(dir / "config.json", config_to_json(snapshot));
    write_accuracy_csv(dir / "accuracy_matrix.csv", run.sequence.matrix);

    std::ostringstream curves;
    curves << "step,trained_task,task_id,accuracy\n";
    for (const CurvePoint& p : run.sequence.curves) {
        curves << p.step << ',' << p.trained_task << ',' << p.eval_task << ',' << text::format_double(p.accuracy)
               << '\n';
    }
    write_text(dir / "curves.csv", curves.str());

    std::ostringstream dims;
    dims << "task,layer,r_eff,tau\n";
    for (const TaskTrainReport& r : run.sequence.reports) {
        for (std::size_t l = 0; l < r.r_eff_per_layer.size(); ++l) {
            dims << r.task_id << ',' << l << ',' << r.r_eff_per_layer[l] << ','
                 << text::format_double(r.tau_per_layer[l]) << '\n';
        }
    }
    write_text(dir / "dims.csv", dims.str());

    std::ostringstream ov;
    ov << "task_t,task_s,layer,overlap\n";
    for (const OverlapEntry& e : run.overlaps) {
        ov << e.task_t << ',' << e.task_s << ',' << e.layer << ',' << text::format_double(e.overlap) << '\n';
    }
    write_text(dir / "overlaps.csv", ov.str());

    write_text(dir / "summary.json", summary_json(snapshot, run));

    ojson timing;
    timing["pretrain_seconds"] = run.pretrain_wall_time;
    std::vector<double> per_task;
    double total = run.pretrain_wall_time;
    for (const TaskTrainReport& r : run.sequence.reports) {
        per_task.push_back(r.wall_time);
        total += r.wall_time;
    }
    timing["task_seconds"] = per_task;
    timing["total_seconds"] = total;
    write_text(dir / "timing.json", timing.dump(2) + "\n");

    save_checkpoint(dir / "model.oacl", run.backbone, run.sequence.stack);
}

std::vector<CompareRow> aggregate(const std::vector<Arm>& arms, const std::vector<std::vector<RunResult>>& runs,
                                  const std::vector<std::size_t>& failures) {
    std::vector<CompareRow> rows;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        CompareRow row;
        row.arm = arms[a];
        row.runs = runs[a].size();
        row.failures = a < failures.size() ? failures[a] : 0;
        std::vector<double> acc, task1, budget, saved, overlap;
        for (const RunResult& r : runs[a]) {
            acc.push_back(r.avg_final_accuracy);
            const AccuracyMatrix& m = r.sequence.matrix;
            for (std::size_t i = 0; i < r.stream.order.size(); ++i)
                if (r.stream.order[i] == 1) task1.push_back(m.at(i, m.size() - 1));
            budget.push_back(r.budget.avg_final_budget);
            saved.push_back(r.budget.params_saved());
            overlap.push_back(r.mean_overlap);
        }
        row.acc_mean = mean_of(acc);
        row.acc_std = sample_std(acc);
        row.task1_final_mean = mean_of(task1);
        row.budget_mean = mean_of(budget);
        row.params_saved_mean = mean_of(saved);
        row.overlap_mean = mean_of(overlap);
        rows.push_back(row);
    }
    return rows;
}

void write_compare_csv(const fs::path& path, const std::vector<CompareRow>& rows) {
    std::ostringstream out;
    out << "arm,variant,threshold_mode,runs,failures,avg_final_accuracy_mean,avg_final_accuracy_std,"
           "task1_final_accuracy_mean,avg_final_budget_mean,params_saved_mean,overlap_mean\n";
    for (const CompareRow& r : rows) {
        out << r.arm.name() << ',' << to_string(r.arm.variant) << ',' << to_string(r.arm.threshold_mode) << ','
            << r.runs << ',' << r.failures << ',' << text::format_double(r.acc_mean) << ','
            << text::format_double(r.acc_std) << ',' << text::format_double(r.task1_final_mean) << ','
            << text::format_double(r.budget_mean) << ',' << text::format_double(r.params_saved_mean) << ','
            << text::format_double(r.overlap_mean) << '\n';
    }
    write_text(path, out.str());
}

int cmd_run(const CommandOptions& options, std::ostream& log) {
    ExperimentConfig config;
    try {
        config = load_config(options.config_path);
        if (options.seed) config.seed = *options.seed;
        config.train.seed = config.seed;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    const fs::path out = options.out.value_or(config.output_dir);
    try {
        const RunResult run = run_experiment(config, config.seed);
        write_artifacts(out, config, run);
        log << "avg_final_accuracy " << fixed(run.avg_final_accuracy) << "  avg_final_budget "
            << fixed(run.budget.avg_final_budget, 2) << "  mean_overlap " << fixed(run.mean_overlap) << '\n'
            << "artifacts written to " << out.string() << '\n';
        return kExitOk;
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

int cmd_compare(const CommandOptions& options, std::ostream& log) {
    ExperimentConfig config;
    try {
        config = load_config(options.config_path);
        if (!options.arms.empty()) {
            config.arms.clear();
            for (const std::string& a : options.arms) config.arms.push_back(Arm::parse(a));
        }
        if (!options.seeds.empty()) config.seeds = options.seeds;
        if (config.arms.size() < 2) throw ConfigError("compare needs at least two arms (variants or threshold modes)");
        std::set<std::string> names;
        for (const Arm& a : config.arms)
            if (!names.insert(a.name()).second) throw ConfigError("duplicate arm '" + a.name() + "'");
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    const fs::path out = options.out.value_or(config.output_dir);
    std::vector<std::vector<RunResult>> runs(config.arms.size());
    std::vector<std::size_t> failures(config.arms.size(), 0);
    bool numerical = false;
    bool other = false;
    for (std::size_t a = 0; a < config.arms.size(); ++a) {
        ExperimentConfig arm_cfg = config;
        arm_cfg.train.variant = config.arms[a].variant;
        arm_cfg.train.threshold_mode = config.arms[a].threshold_mode;
        std::string dir_name = config.arms[a].name();
        std::replace(dir_name.begin(), dir_name.end(), '/', '_');
        for (std::uint64_t seed : config.seeds) {
            const fs::path dir = out / dir_name / ("seed_" + std::to_string(seed));
            try {
                RunResult run = run_experiment(arm_cfg, seed);
                write_artifacts(dir, arm_cfg, run);
                log << config.arms[a].name() << " seed " << seed << ": avg_final_accuracy "
                    << fixed(run.avg_final_accuracy) << '\n';
                runs[a].push_back(std::move(run));
            } catch (const NumericalError& e) {
                ++failures[a];
                numerical = true;
                log << config.arms[a].name() << " seed " << seed << " failed: " << e.what() << '\n';
            } catch (const Error& e) {
                ++failures[a];
                other = true;
                log << config.arms[a].name() << " seed " << seed << " failed: " << e.what() << '\n';
            }
        }
    }
    const std::vector<CompareRow> rows = aggregate(config.arms, runs, failures);
    fs::create_directories(out);
    write_compare_csv(out / "compare.csv", rows);
    for (const CompareRow& r : rows) {
        log << std::left << std::setw(20) << r.arm.name() << fixed(r.acc_mean) << " ± " << fixed(r.acc_std)
            << "  budget " << fixed(r.budget_mean, 2) << '\n';
    }
    if (numerical) return kExitNumerical;
    if (other) return kExitConfig;
    return kExitOk;
}

namespace {

struct ReportData {
    json summary;
    AccuracyMatrix matrix;
    std::vector<std::vector<double>> dims; ///< [task][layer]
    std::vector<int> dim_tasks;
};

ReportData load_report(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a run directory: " + dir.string());
    ReportData d;
    try {
        d.summary = json::parse(read_text(dir / "summary.json"));
    } catch (const json::parse_error& e) {
        throw DataError((dir / "summary.json").string() + " is not valid JSON: " + e.what());
    }
    d.matrix = read_accuracy_csv(dir / "accuracy_matrix.csv");
    if (!fs::exists(dir / "dims.csv")) throw DataError("missing artifact " + (dir / "dims.csv").string());
    const text::CsvTable dims = text::read_csv((dir / "dims.csv").string());
    const std::size_t ct = dims.column("task");
    const std::size_t cr = dims.column("r_eff");
    for (const auto& row : dims.rows) {
        const int task = static_cast<int>(text::parse_int(row[ct]));
        if (d.dim_tasks.empty() || d.dim_tasks.back() != task) {
            d.dim_tasks.push_back(task);
            d.dims.emplace_back();
        }
        d.dims.back().push_back(text::parse_double(row[cr]));
    }
    return d;
}

double mean_r_eff(const ReportData& d) {
    std::vector<double> all;
    for (const auto& row : d.dims) all.insert(all.end(), row.begin(), row.end());
    return mean_of(all);
}

double summary_number(const json& j, const char* a, const char* b = nullptr) {
    const json* v = j.contains(a) ? &j.at(a) : nullptr;
    if (v != nullptr && b != nullptr) v = v->contains(b) ? &v->at(b) : nullptr;
    if (v == nullptr || !v->is_number()) {
        throw DataError(std::string("summary.json lacks ") + a + (b ? std::string(".") + b : ""));
    }
    return v->get<double>();
}

} // namespace

int cmd_report(const std::vector<fs::path>& dirs, std::ostream& out, std::ostream& log) {
    if (dirs.empty() || dirs.size() > 2) {
        log << "error: report takes one run directory, or two to diff\n";
        return kExitConfig;
    }
    try {
        if (dirs.size() == 1) {
            const ReportData d = load_report(dirs[0]);
            out << "run: " << dirs[0].string() << '\n';
            out << "avg_final_accuracy: " << fixed(avg_final_accuracy(d.matrix)) << '\n';
            const std::vector<double> f = forgetting_per_task(d.matrix);
            out << "forgetting_per_task:";
            for (double v : f) out << ' ' << fixed(v);
            out << '\n';
            out << "avg_final_budget: " << fixed(summary_number(d.summary, "budget", "avg_final_budget"), 2) << '\n';
            out << "params_saved: " << fixed(100.0 * summary_number(d.summary, "budget", "params_saved"), 1)
                << "%\n";
            out << "mean_overlap: " << fixed(summary_number(d.summary, "overlap", "mean")) << '\n';
            out << "r_eff per task (layers):\n";
            for (std::size_t k = 0; k < d.dims.size(); ++k) {
                out << "  task " << d.dim_tasks[k] << ':';
                for (double r : d.dims[k]) out << ' ' << r;
                out << '\n';
            }
            out << "accuracy matrix (row: task, column: after training):\n";
            for (std::size_t i = 0; i < d.matrix.size(); ++i) {
                out << ' ';
                for (std::size_t j = 0; j < d.matrix.size(); ++j) {
                    const auto v = d.matrix.get(i, j);
                    out << ' ' << (v ? fixed(*v, 3) : std::string("  -  "))
                        << (AccuracyMatrix::is_pre_training(i, j) ? '*' : ' ');
                }
                out << '\n';
            }
            out << "  (* evaluated before the task was trained)\n";
            return kExitOk;
        }

        const ReportData a = load_report(dirs[0]);
        const ReportData b = load_report(dirs[1]);
        auto line = [&](const std::string& name, double x, double y, int digits) {
            out << std::left << std::setw(22) << name << std::right << std::setw(10) << fixed(x, digits)
                << std::setw(10) << fixed(y, digits) << std::setw(11) << (y - x >= 0 ? "+" : "")
                << fixed(y - x, digits) << '\n';
        };
        out << std::left << std::setw(22) << "metric" << std::right << std::setw(10) << "A" << std::setw(10) << "B"
            << std::setw(12) << "B - A" << '\n';
        out << "A: " << dirs[0].string() << "\nB: " << dirs[1].string() << '\n';
        line("avg_final_accuracy", avg_final_accuracy(a.matrix), avg_final_accuracy(b.matrix), 4);
        line("avg_final_budget", mean_r_eff(a), mean_r_eff(b), 2);
        const std::vector<double> fa = forgetting_per_task(a.matrix);
        const std::vector<double> fb = forgetting_per_task(b.matrix);
        line("mean_forgetting", mean_of(fa), mean_of(fb), 4);
        const std::size_t n = std::min(a.matrix.size(), b.matrix.size());
        for (std::size_t i = 0; i < n; ++i) {
            line("final_acc_task_" + std::to_string(i + 1), a.matrix.at(i, a.matrix.size() - 1),
                 b.matrix.at(i, b.matrix.size() - 1), 4);
        }
        return kExitOk;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const json::exception& e) {
        log << "error: malformed summary.json: " << e.what() << '\n';
        return kExitConfig;
    }
}

} // namespace oacl

#include "oacl/backbone.hpp"

#include <cmath>
#include <string>

#include "oacl/errors.hpp"
#include "oacl/metrics.hpp"
#include "oacl/optim.hpp"

namespace oacl {

namespace {

Matrix2D uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix2D m(rows, cols);
    for (double& v : m.data()) v = u(rng);
    return m;
}

void check_compatible(const Backbone& backbone, const AdapterStack& stack, const Matrix2D& x) {
    if (x.cols() != backbone.input_dim()) {
        throw DimensionError("forward: input has " + std::to_string(x.cols()) + " features, backbone expects " +
                             std::to_string(backbone.input_dim()));
    }
    if (stack.num_tasks() == 0) return;
    if (stack.layers() != backbone.layers() || stack.dim() != backbone.dim()) {
        throw DimensionError("forward: adapter stack is " + std::to_string(stack.layers()) + " layers of width " +
                             std::to_string(stack.dim()) + ", backbone is " + std::to_string(backbone.layers()) +
                             " layers of width " + std::to_string(backbone.dim()));
    }
}

} // namespace

Backbone Backbone::random(const BackboneShape& shape, Rng& rng) {
    if (shape.layers == 0) throw ConfigError("backbone needs at least one hidden layer");
    if (shape.dim == 0 || shape.input_dim == 0 || shape.classes < 2) {
        throw ConfigError("backbone dimensions must be positive and classes >= 2");
    }
    Backbone b;
    const double in_bound = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
    const double d_bound = 1.0 / std::sqrt(static_cast<double>(shape.dim));
    b.embed = Param(uniform_matrix(shape.dim, shape.input_dim, in_bound, rng), "backbone.embed");
    for (std::size_t l = 0; l < shape.layers; ++l) {
        b.hidden.emplace_back(uniform_matrix(shape.dim, shape.dim, d_bound, rng),
                              "backbone.hidden." + std::to_string(l));
    }
    b.head = Param(uniform_matrix(shape.classes, shape.dim, d_bound, rng), "backbone.head");
    return b;
}

BackboneShape Backbone::shape() const { return {input_dim(), dim(), layers(), classes()}; }

std::vector<Param*> Backbone::params() {
    std::vector<Param*> out{&embed};
    for (Param& h : hidden) out.push_back(&h);
    out.push_back(&head);
    return out;
}

void Backbone::freeze() {
    for (Param* p : params()) p->frozen = true;
}

bool Backbone::is_frozen() const {
    if (!embed.frozen || !head.frozen) return false;
    for (const Param& h : hidden)
        if (!h.frozen) return false;
    return true;
}

void AdapterStack::begin_task(int task_id, std::size_t r_max, const AdapterInit& init, std::uint64_t seed) {
    if (open_) {
        throw ProtocolError("begin_task(" + std::to_string(task_id) + ") while task " +
                            std::to_string(task_ids_.back()) + " is still open; call end_task first");
    }
    if (layers_ == 0 || dim_ == 0) throw ProtocolError("begin_task on a stack with no insertion points");
    if (r_max == 0) throw ConfigError("r_max must be >= 1");
    std::vector<OAAdapter> column;
    column.reserve(layers_);
    for (std::size_t l = 0; l < layers_; ++l) {
        Rng rng = make_rng(seed, "adapter-init", static_cast<std::uint64_t>(task_id) * 1000 + l);
        OAAdapter a = OAAdapter::initialized(dim_, r_max, init, rng);
        const std::string prefix = "task" + std::to_string(task_id) + ".layer" + std::to_string(l) + ".";
        a.w1.name = prefix + "w1";
        a.w2.name = prefix + "w2";
        a.g.name = prefix + "g";
        a.tau.name = prefix + "tau";
        column.push_back(std::move(a));
    }
    task_ids_.push_back(task_id);
    adapters_.push_back(std::move(column));
    bases_.emplace_back();
    open_ = true;
}

void AdapterStack::end_task() {
    if (!open_) throw ProtocolError("end_task with no open task");
    const std::size_t k = adapters_.size() - 1;
    std::vector<ActivatedBasis> column;
    for (OAAdapter& a : adapters_[k]) {
        a.freeze();
        column.push_back(activated_basis(a, task_ids_[k]));
    }
    bases_[k] = std::move(column);
    open_ = false;
}

void AdapterStack::push_task(int task_id, std::vector<OAAdapter> adapters) {
    if (open_) throw ProtocolError("push_task while a task is open");
    if (adapters.empty()) throw DimensionError("push_task: empty adapter column");
    if (num_tasks() == 0 && layers_ == 0) {
        layers_ = adapters.size();
        dim_ = adapters.front().dim();
    }
    if (adapters.size() != layers_) {
        throw DimensionError("push_task: " + std::to_string(adapters.size()) + " adapters for " +
                             std::to_string(layers_) + " insertion points");
    }
    for (const OAAdapter& a : adapters)
        if (a.dim() != dim_) throw DimensionError("push_task: adapter width does not match stack");

    const bool frozen = adapters.front().is_frozen();
    std::vector<ActivatedBasis> column;
    if (frozen) {
        for (const OAAdapter& a : adapters) column.push_back(activated_basis(a, task_id));
    }
    task_ids_.push_back(task_id);
    adapters_.push_back(std::move(adapters));
    bases_.push_back(std::move(column));
    open_ = !frozen;
}

const ActivatedBasis& AdapterStack::basis(std::size_t task_index, std::size_t layer) const {
    if (task_index >= bases_.size() || bases_[task_index].empty()) {
        throw ProtocolError("no activated basis for task index " + std::to_string(task_index) +
                            " (task not frozen)");
    }
    return bases_[task_index][layer];
}

std::vector<Param*> AdapterStack::open_params() {
    std::vector<Param*> out;
    if (!open_) return out;
    for (OAAdapter& a : adapters_.back())
        for (Param* p : a.params()) out.push_back(p);
    return out;
}

std::vector<Param*> AdapterStack::all_params() {
    std::vector<Param*> out;
    for (auto& column : adapters_)
        for (OAAdapter& a : column)
            for (Param* p : a.params()) out.push_back(p);
    return out;
}

Var forward(Tape& tape, Backbone& backbone, AdapterStack& stack, const Matrix2D& x) {
    check_compatible(backbone, stack, x);
    Var h = ad::tanh(ad::matmul_nt(tape.constant(x), tape.leaf(backbone.embed)));
    for (std::size_t l = 0; l < backbone.layers(); ++l) {
        const Var u = ad::matmul_nt(h, tape.leaf(backbone.hidden[l]));
        Var acc = u;
        for (std::size_t k = 0; k < stack.num_tasks(); ++k) acc = ad::add(acc, oa_residual(tape, stack.adapter(k, l), u));
        h = ad::tanh(acc);
    }
    return ad::matmul_nt(h, tape.leaf(backbone.head));
}

Matrix2D forward(const Backbone& backbone, const AdapterStack& stack, const Matrix2D& x) {
    check_compatible(backbone, stack, x);
    Matrix2D h = matmul_nt(x, backbone.embed.value);
    for (double& v : h.data()) v = std::tanh(v);
    for (std::size_t l = 0; l < backbone.layers(); ++l) {
        const Matrix2D u = matmul_nt(h, backbone.hidden[l].value);
        Matrix2D acc = u;
        for (std::size_t k = 0; k < stack.num_tasks(); ++k) add_inplace(acc, oa_residual(stack.adapter(k, l), u));
        for (double& v : acc.data()) v = std::tanh(v);
        h = std::move(acc);
    }
    return matmul_nt(h, backbone.head.value);
}

Backbone build_and_pretrain(std::uint64_t seed, const BackboneShape& shape, const Split& train,
                            const Split& held_out, const PretrainOptions& options) {
    if (train.size() == 0 || held_out.size() == 0) throw DataError("pretraining data is empty");
    if (train.x.cols() != shape.input_dim) {
        throw DimensionError("pretraining data has " + std::to_string(train.x.cols()) + " features, shape expects " +
                             std::to_string(shape.input_dim));
    }
    Rng init_rng = make_rng(seed, "backbone-init");
    Backbone backbone = Backbone::random(shape, init_rng);
    AdapterStack empty;

    if (options.max_steps == 0) {
        backbone.pretrain_warning = true;
        backbone.pretrain_accuracy = accuracy(forward(backbone, empty, held_out.x), held_out.y);
        backbone.freeze();
        return backbone;
    }

    Optimizer opt(OptimizerSettings{OptimizerKind::adam, options.lr});
    Rng batch_rng = make_rng(seed, "pretrain-batches");
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    const std::vector<Param*> params = backbone.params();
    const std::size_t eval_every = options.eval_every == 0 ? 1 : options.eval_every;

    Matrix2D xb(options.batch_size, train.x.cols());
    std::vector<int> yb(options.batch_size);
    double held_acc = 0.0;
    std::size_t step = 0;
    while (step < options.max_steps) {
        for (std::size_t i = 0; i < options.batch_size; ++i) {
            const std::size_t idx = pick(batch_rng);
            const auto src = train.x.row(idx);
            std::copy(src.begin(), src.end(), xb.row(i).begin());
            yb[i] = train.y[idx];
        }
        for (Param* p : params) p->zero_grad();
        Tape tape;
        const Var loss = ad::softmax_cross_entropy(forward(tape, backbone, empty, xb), yb);
        tape.backward(loss);
        opt.step(params);
        ++step;
        if (step % eval_every == 0 || step == options.max_steps) {
            held_acc = accuracy(forward(backbone, empty, held_out.x), held_out.y);
            if (held_acc >= options.target_accuracy) break;
        }
    }
    backbone.pretrain_steps = step;
    backbone.pretrain_accuracy = held_acc;
    if (held_acc < options.failure_accuracy) {
        throw PretrainingError("pretraining reached only " + std::to_string(held_acc) + " held-out accuracy after " +
                               std::to_string(step) + " steps (floor " + std::to_string(options.failure_accuracy) +
                               "); check the data generator and backbone shape");
    }
    backbone.freeze();
    return backbone;
}

} // namespace oacl

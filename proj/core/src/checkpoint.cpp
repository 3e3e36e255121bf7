#include "oacl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "oacl/errors.hpp"

namespace oacl {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "OACL1\n";
constexpr std::string_view kTrailer = "END\n";

class Writer {
public:
    void bytes(std::string_view s) { out_.append(s); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void i64(std::int64_t v) { raw(&v, sizeof v); }
    void matrix(const Matrix2D& m) {
        u64(m.rows());
        u64(m.cols());
        if (m.size() != 0) raw(m.data().data(), m.size() * sizeof(double));
    }
    void param(const Param& p) {
        matrix(p.value);
        u8(p.frozen ? 1 : 0);
    }
    std::string take() { return std::move(out_); }

private:
    void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    void expect(std::string_view s, const char* what) {
        if (in_.substr(pos_, s.size()) != s) throw DataError(std::string("checkpoint: bad ") + what);
        pos_ += s.size();
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        raw(&v, sizeof v);
        return v;
    }
    std::int64_t i64() {
        std::int64_t v = 0;
        raw(&v, sizeof v);
        return v;
    }
    Matrix2D matrix() {
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (rows > (1u << 20) || cols > (1u << 20)) throw DataError("checkpoint: implausible tensor shape");
        Matrix2D m(rows, cols);
        if (m.size() != 0) raw(m.data().data(), m.size() * sizeof(double));
        return m;
    }
    Param param(std::string name) {
        Param p(matrix(), std::move(name));
        p.frozen = u8() != 0;
        return p;
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw DataError("checkpoint: truncated file");
    }
    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

void write_adapter(Writer& w, const OAAdapter& a) {
    w.u8(a.gate_mode == GateMode::identity ? 1 : 0);
    w.param(a.w1);
    w.param(a.w2);
    w.param(a.g);
    w.param(a.tau);
}

OAAdapter read_adapter(Reader& r, const std::string& prefix) {
    OAAdapter a;
    a.gate_mode = r.u8() == 1 ? GateMode::identity : GateMode::soft_threshold;
    a.w1 = r.param(prefix + "w1");
    a.w2 = r.param(prefix + "w2");
    a.g = r.param(prefix + "g");
    a.tau = r.param(prefix + "tau");
    const std::size_t d = a.w2.value.rows();
    const std::size_t rm = a.w1.value.rows();
    if (a.w1.value.cols() != d || a.w2.value.cols() != rm || a.g.value.rows() != 1 || a.g.value.cols() != rm ||
        a.tau.value.size() != 1) {
        throw DataError("checkpoint: inconsistent adapter shapes for " + prefix);
    }
    return a;
}

} // namespace

std::string serialize_adapter(const OAAdapter& adapter) {
    Writer w;
    write_adapter(w, adapter);
    return w.take();
}

std::string serialize_checkpoint(const Backbone& backbone, const AdapterStack& stack) {
    Writer w;
    w.bytes(kMagic);
    w.u64(backbone.input_dim());
    w.u64(backbone.dim());
    w.u64(backbone.layers());
    w.u64(backbone.classes());
    w.param(backbone.embed);
    for (const Param& h : backbone.hidden) w.param(h);
    w.param(backbone.head);
    w.u8(backbone.pretrain_warning ? 1 : 0);

    w.u64(stack.num_tasks());
    for (std::size_t k = 0; k < stack.num_tasks(); ++k) {
        w.i64(stack.task_id(k));
        for (std::size_t l = 0; l < stack.layers(); ++l) write_adapter(w, stack.adapter(k, l));
    }
    w.bytes(kTrailer);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    r.expect(kMagic, "magic string (not an OACL1 checkpoint)");
    BackboneShape shape;
    shape.input_dim = r.u64();
    shape.dim = r.u64();
    shape.layers = r.u64();
    shape.classes = r.u64();
    if (shape.layers == 0 || shape.layers > 1024) throw DataError("checkpoint: implausible layer count");

    Checkpoint ck;
    ck.backbone.embed = r.param("backbone.embed");
    for (std::size_t l = 0; l < shape.layers; ++l) ck.backbone.hidden.push_back(r.param("backbone.hidden." + std::to_string(l)));
    ck.backbone.head = r.param("backbone.head");
    ck.backbone.pretrain_warning = r.u8() != 0;
    if (ck.backbone.shape().dim != shape.dim || ck.backbone.input_dim() != shape.input_dim ||
        ck.backbone.classes() != shape.classes) {
        throw DataError("checkpoint: backbone tensors disagree with the shape header");
    }

    ck.stack = AdapterStack(shape.layers, shape.dim);
    const std::uint64_t tasks = r.u64();
    for (std::uint64_t k = 0; k < tasks; ++k) {
        const auto task_id = static_cast<int>(r.i64());
        std::vector<OAAdapter> column;
        for (std::size_t l = 0; l < shape.layers; ++l) {
            column.push_back(read_adapter(r, "task" + std::to_string(task_id) + ".layer" + std::to_string(l) + "."));
        }
        ck.stack.push_task(task_id, std::move(column));
    }
    r.expect(kTrailer, "trailer");
    if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Backbone& backbone, const AdapterStack& stack) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(backbone, stack);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

} // namespace oacl

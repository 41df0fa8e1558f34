#include "phyc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace phyc {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

TensorData::TensorData(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
        fail(Errc::shape_mismatch, "tensor " + shape_str(shape) + " with " +
                                       std::to_string(data.size()) + " elements");
}

TensorData TensorData::zeros(Shape s) {
    int64_t n = numel(s);
    return TensorData(std::move(s), std::vector<float>(static_cast<size_t>(n), 0.0f));
}

TensorData TensorData::full(Shape s, float v) {
    int64_t n = numel(s);
    return TensorData(std::move(s), std::vector<float>(static_cast<size_t>(n), v));
}

TensorData TensorData::scalar(float v) { return TensorData({1}, {v}); }

bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void check_finite(const TensorData& t, const char* what) {
    if (!all_finite(t.data)) fail(Errc::non_finite, std::string(what) + " contains NaN/Inf");
}

const char* op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::divide: return "divide";
    case Op::scale: return "scale";
    case Op::add_scalar: return "add_scalar";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::tanh_: return "tanh";
    case Op::exp_: return "exp";
    case Op::log_: return "log";
    case Op::sqrt_: return "sqrt";
    case Op::sum_all: return "sum_all";
    case Op::broadcast_full: return "broadcast_full";
    case Op::sum_last: return "sum_last";
    case Op::broadcast_last: return "broadcast_last";
    case Op::sum_rows: return "sum_rows";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::reshape: return "reshape";
    case Op::slice: return "slice";
    case Op::pad_to: return "pad_to";
    case Op::concat: return "concat";
    case Op::embedding: return "embedding";
    case Op::embed_scatter: return "embed_scatter";
    case Op::patchify: return "patchify";
    case Op::unpatchify: return "unpatchify";
    case Op::detach: return "detach";
    }
    return "?";
}

const Shape& Var::shape() const { return g->node(id).shape; }
const std::vector<float>& Var::value() const { return g->node(id).val; }
bool Var::requires_grad() const { return g->node(id).requires_grad; }

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a != b)
        fail(Errc::shape_mismatch,
             std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

void require_same_graph(const std::vector<Var>& vs) {
    for (const Var& v : vs) {
        if (!v.valid()) fail(Errc::invalid_argument, "invalid tensor handle");
        if (v.g != vs[0].g) fail(Errc::invalid_argument, "tensors belong to different graphs");
    }
}

// Odometer over a target block: calls fn(src_flat, dst_flat) for every
// element of the block with shape `len` located at `off` inside `full`.
template <class F>
void walk_block(const Shape& full, const std::vector<int64_t>& off, const Shape& len, F&& fn) {
    size_t nd = full.size();
    std::vector<int64_t> stride(nd, 1);
    for (size_t i = nd; i-- > 1;) stride[i - 1] = stride[i] * full[i];
    std::vector<int64_t> idx(nd, 0);
    int64_t total = numel(len);
    int64_t dst = 0;
    for (int64_t c = 0; c < total; ++c, ++dst) {
        int64_t src = 0;
        for (size_t i = 0; i < nd; ++i) src += (off[i] + idx[i]) * stride[i];
        fn(src, dst);
        for (size_t i = nd; i-- > 0;) {
            if (++idx[i] < len[i]) break;
            idx[i] = 0;
        }
    }
}

} // namespace

Var Graph::emit(Op op, Shape shape, std::vector<float> val, std::vector<int32_t> inputs,
                std::vector<int64_t> iattrs, double sattr) {
    if (!all_finite(val))
        fail(Errc::non_finite, std::string(op_name(op)) + " produced non-finite values");
    Node n;
    n.op = op;
    n.shape = std::move(shape);
    n.val = std::move(val);
    n.inputs = std::move(inputs);
    n.iattrs = std::move(iattrs);
    n.sattr = sattr;
    n.requires_grad = false;
    if (op == Op::leaf) n.requires_grad = true;
    if (op != Op::detach && op != Op::constant)
        for (int32_t i : n.inputs)
            if (nodes_[static_cast<size_t>(i)].requires_grad) n.requires_grad = true;
    if (nodes_.size() >= static_cast<size_t>(INT32_MAX))
        fail(Errc::out_of_range, "graph node limit exceeded");
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Var Graph::leaf(const std::string& name, const TensorData& value) {
    check_finite(value, ("leaf " + name).c_str());
    if (leaves_.count(name)) fail(Errc::invalid_argument, "duplicate leaf name: " + name);
    Var v = emit(Op::leaf, value.shape, value.data, {});
    leaves_[name] = v.id;
    return v;
}

Var Graph::constant(const TensorData& value) {
    check_finite(value, "constant");
    return emit(Op::constant, value.shape, value.data, {});
}

Var Graph::constant_scalar(float v) { return constant(TensorData::scalar(v)); }

Var Graph::leaf_var(const std::string& name) const {
    auto it = leaves_.find(name);
    if (it == leaves_.end()) fail(Errc::unknown_name, "no leaf named " + name);
    return Var{const_cast<Graph*>(this), it->second};
}

bool Graph::has_leaf(const std::string& name) const { return leaves_.count(name) != 0; }

Var Graph::zeros_like_shape(const Shape& s) { return constant(TensorData::zeros(s)); }

Var Graph::add(Var a, Var b) {
    require_same_graph({a, b});
    const Node &na = node(a.id), &nb = node(b.id);
    require_same_shape(na.shape, nb.shape, "add");
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] + nb.val[i];
    return emit(Op::add, na.shape, std::move(out), {a.id, b.id});
}

Var Graph::sub(Var a, Var b) {
    require_same_graph({a, b});
    const Node &na = node(a.id), &nb = node(b.id);
    require_same_shape(na.shape, nb.shape, "sub");
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] - nb.val[i];
    return emit(Op::sub, na.shape, std::move(out), {a.id, b.id});
}

Var Graph::mul(Var a, Var b) {
    require_same_graph({a, b});
    const Node &na = node(a.id), &nb = node(b.id);
    require_same_shape(na.shape, nb.shape, "mul");
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] * nb.val[i];
    return emit(Op::mul, na.shape, std::move(out), {a.id, b.id});
}

Var Graph::divide(Var a, Var b) {
    require_same_graph({a, b});
    const Node &na = node(a.id), &nb = node(b.id);
    require_same_shape(na.shape, nb.shape, "divide");
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] / nb.val[i];
    return emit(Op::divide, na.shape, std::move(out), {a.id, b.id});
}

Var Graph::scale(Var a, double s) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    float fs = static_cast<float>(s);
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] * fs;
    return emit(Op::scale, na.shape, std::move(out), {a.id}, {}, s);
}

Var Graph::add_scalar(Var a, double s) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    float fs = static_cast<float>(s);
    for (size_t i = 0; i < out.size(); ++i) out[i] = na.val[i] + fs;
    return emit(Op::add_scalar, na.shape, std::move(out), {a.id}, {}, s);
}

Var Graph::matmul(Var a, Var b) {
    require_same_graph({a, b});
    const Node &na = node(a.id), &nb = node(b.id);
    if (na.shape.size() != 2 || nb.shape.size() != 2)
        fail(Errc::shape_mismatch, "matmul needs 2-D operands, got " + shape_str(na.shape) +
                                       " and " + shape_str(nb.shape));
    int64_t n = na.shape[0], k = na.shape[1], m = nb.shape[1];
    if (nb.shape[0] != k)
        fail(Errc::shape_mismatch,
             "matmul inner dims: " + shape_str(na.shape) + " x " + shape_str(nb.shape));
    std::vector<float> out(static_cast<size_t>(n * m), 0.0f);
    const float* A = na.val.data();
    const float* B = nb.val.data();
    float* C = out.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
            float aik = A[i * k + kk];
            if (aik == 0.0f) continue;
            const float* Brow = B + kk * m;
            float* Crow = C + i * m;
            for (int64_t j = 0; j < m; ++j) Crow[j] += aik * Brow[j];
        }
    return emit(Op::matmul, {n, m}, std::move(out), {a.id, b.id});
}

Var Graph::transpose(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (na.shape.size() != 2)
        fail(Errc::shape_mismatch, "transpose needs 2-D, got " + shape_str(na.shape));
    int64_t r = na.shape[0], c = na.shape[1];
    std::vector<float> out(na.val.size());
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j * r + i)] = na.val[static_cast<size_t>(i * c + j)];
    return emit(Op::transpose, {c, r}, std::move(out), {a.id});
}

Var Graph::tanh(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(na.val[i]);
    return emit(Op::tanh_, na.shape, std::move(out), {a.id});
}

Var Graph::exp(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(na.val[i]);
    return emit(Op::exp_, na.shape, std::move(out), {a.id});
}

Var Graph::log(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (na.val[i] <= 0.0f) fail(Errc::invalid_argument, "log of non-positive value");
        out[i] = std::log(na.val[i]);
    }
    return emit(Op::log_, na.shape, std::move(out), {a.id});
}

Var Graph::sqrt(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    std::vector<float> out(na.val.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (na.val[i] < 0.0f) fail(Errc::invalid_argument, "sqrt of negative value");
        out[i] = std::sqrt(na.val[i]);
    }
    return emit(Op::sqrt_, na.shape, std::move(out), {a.id});
}

Var Graph::sum_all(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    double acc = 0.0;
    for (float x : na.val) acc += static_cast<double>(x);
    return emit(Op::sum_all, {1}, {static_cast<float>(acc)}, {a.id});
}

Var Graph::broadcast_full(Var s, const Shape& to) {
    require_same_graph({s});
    const Node& ns = node(s.id);
    if (numel(ns.shape) != 1)
        fail(Errc::shape_mismatch, "broadcast_full source must be scalar");
    return emit(Op::broadcast_full, to,
                std::vector<float>(static_cast<size_t>(numel(to)), ns.val[0]), {s.id});
}

Var Graph::sum_last(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (na.shape.empty()) fail(Errc::shape_mismatch, "sum_last on 0-d tensor");
    int64_t n = na.shape.back();
    int64_t rows = numel(na.shape) / n;
    Shape out_shape = na.shape;
    out_shape.back() = 1;
    std::vector<float> out(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += static_cast<double>(na.val[static_cast<size_t>(r * n + j)]);
        out[static_cast<size_t>(r)] = static_cast<float>(acc);
    }
    return emit(Op::sum_last, std::move(out_shape), std::move(out), {a.id});
}

Var Graph::broadcast_last(Var a, int64_t n) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (na.shape.empty() || na.shape.back() != 1)
        fail(Errc::shape_mismatch, "broadcast_last needs trailing axis 1, got " + shape_str(na.shape));
    if (n < 1) fail(Errc::invalid_argument, "broadcast_last width must be >= 1");
    Shape out_shape = na.shape;
    out_shape.back() = n;
    int64_t rows = numel(na.shape);
    std::vector<float> out(static_cast<size_t>(rows * n));
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(r * n + j)] = na.val[static_cast<size_t>(r)];
    return emit(Op::broadcast_last, std::move(out_shape), std::move(out), {a.id}, {n});
}

Var Graph::sum_rows(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (na.shape.size() != 2) fail(Errc::shape_mismatch, "sum_rows needs 2-D, got " + shape_str(na.shape));
    int64_t r = na.shape[0], c = na.shape[1];
    std::vector<double> acc(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) acc[static_cast<size_t>(j)] += static_cast<double>(na.val[static_cast<size_t>(i * c + j)]);
    std::vector<float> out(static_cast<size_t>(c));
    for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j)] = static_cast<float>(acc[static_cast<size_t>(j)]);
    return emit(Op::sum_rows, {1, c}, std::move(out), {a.id});
}

Var Graph::broadcast_rows(Var a, int64_t rows) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (na.shape.size() != 2 || na.shape[0] != 1)
        fail(Errc::shape_mismatch, "broadcast_rows needs shape [1,c], got " + shape_str(na.shape));
    if (rows < 1) fail(Errc::invalid_argument, "broadcast_rows count must be >= 1");
    int64_t c = na.shape[1];
    std::vector<float> out(static_cast<size_t>(rows * c));
    for (int64_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * c, na.val.data(), static_cast<size_t>(c) * sizeof(float));
    return emit(Op::broadcast_rows, {rows, c}, std::move(out), {a.id}, {rows});
}

Var Graph::reshape(Var a, const Shape& to) {
    require_same_graph({a});
    const Node& na = node(a.id);
    if (numel(na.shape) != numel(to))
        fail(Errc::shape_mismatch, "reshape " + shape_str(na.shape) + " -> " + shape_str(to));
    return emit(Op::reshape, to, na.val, {a.id});
}

Var Graph::slice(Var a, const std::vector<int64_t>& start, const std::vector<int64_t>& len) {
    require_same_graph({a});
    const Node& na = node(a.id);
    size_t nd = na.shape.size();
    if (start.size() != nd || len.size() != nd)
        fail(Errc::shape_mismatch, "slice rank mismatch against " + shape_str(na.shape));
    for (size_t i = 0; i < nd; ++i)
        if (start[i] < 0 || len[i] < 1 || start[i] + len[i] > na.shape[i])
            fail(Errc::out_of_range, "slice window outside " + shape_str(na.shape));
    std::vector<float> out(static_cast<size_t>(numel(len)));
    walk_block(na.shape, start, len,
               [&](int64_t src, int64_t dst) { out[static_cast<size_t>(dst)] = na.val[static_cast<size_t>(src)]; });
    std::vector<int64_t> attrs = start;
    return emit(Op::slice, len, std::move(out), {a.id}, std::move(attrs));
}

Var Graph::pad_to(Var a, const Shape& to, const std::vector<int64_t>& offset) {
    require_same_graph({a});
    const Node& na = node(a.id);
    size_t nd = na.shape.size();
    if (to.size() != nd || offset.size() != nd)
        fail(Errc::shape_mismatch, "pad_to rank mismatch against " + shape_str(na.shape));
    for (size_t i = 0; i < nd; ++i)
        if (offset[i] < 0 || offset[i] + na.shape[i] > to[i])
            fail(Errc::out_of_range, "pad_to block outside " + shape_str(to));
    std::vector<float> out(static_cast<size_t>(numel(to)), 0.0f);
    walk_block(to, offset, na.shape,
               [&](int64_t dst, int64_t src) { out[static_cast<size_t>(dst)] = na.val[static_cast<size_t>(src)]; });
    std::vector<int64_t> attrs = offset;
    return emit(Op::pad_to, to, std::move(out), {a.id}, std::move(attrs));
}

Var Graph::concat(const std::vector<Var>& parts) {
    if (parts.empty()) fail(Errc::invalid_argument, "concat of zero tensors");
    require_same_graph(parts);
    const Shape& first = node(parts[0].id).shape;
    if (first.empty()) fail(Errc::shape_mismatch, "concat needs rank >= 1");
    int64_t rows = 0;
    for (const Var& p : parts) {
        const Shape& s = node(p.id).shape;
        if (s.size() != first.size()) fail(Errc::shape_mismatch, "concat rank mismatch");
        for (size_t i = 1; i < s.size(); ++i)
            if (s[i] != first[i]) fail(Errc::shape_mismatch, "concat trailing dims differ");
        rows += s[0];
    }
    Shape out_shape = first;
    out_shape[0] = rows;
    std::vector<float> out;
    out.reserve(static_cast<size_t>(numel(out_shape)));
    std::vector<int32_t> ids;
    for (const Var& p : parts) {
        const Node& np = node(p.id);
        out.insert(out.end(), np.val.begin(), np.val.end());
        ids.push_back(p.id);
    }
    return emit(Op::concat, std::move(out_shape), std::move(out), std::move(ids));
}

Var Graph::embedding(Var table, const std::vector<int64_t>& ids) {
    require_same_graph({table});
    const Node& nt = node(table.id);
    if (nt.shape.size() != 2) fail(Errc::shape_mismatch, "embedding table must be 2-D");
    int64_t V = nt.shape[0], d = nt.shape[1];
    std::vector<float> out(ids.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= V) fail(Errc::out_of_range, "embedding id " + std::to_string(ids[i]));
        std::memcpy(out.data() + i * static_cast<size_t>(d), nt.val.data() + ids[i] * d,
                    static_cast<size_t>(d) * sizeof(float));
    }
    return emit(Op::embedding, {static_cast<int64_t>(ids.size()), d}, std::move(out), {table.id}, ids);
}

Var Graph::embed_scatter(Var rows, const std::vector<int64_t>& ids, int64_t vocab) {
    require_same_graph({rows});
    const Node& nr = node(rows.id);
    if (nr.shape.size() != 2 || nr.shape[0] != static_cast<int64_t>(ids.size()))
        fail(Errc::shape_mismatch, "embed_scatter rows " + shape_str(nr.shape) + " vs " +
                                       std::to_string(ids.size()) + " ids");
    int64_t d = nr.shape[1];
    std::vector<float> out(static_cast<size_t>(vocab * d), 0.0f);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= vocab)
            fail(Errc::out_of_range, "embed_scatter id " + std::to_string(ids[i]));
        for (int64_t j = 0; j < d; ++j)
            out[static_cast<size_t>(ids[i] * d + j)] += nr.val[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
    }
    std::vector<int64_t> attrs = ids;
    return emit(Op::embed_scatter, {vocab, d}, std::move(out), {rows.id}, std::move(attrs));
}

Var Graph::patchify(Var img, int64_t patch) {
    require_same_graph({img});
    const Node& ni = node(img.id);
    if (ni.shape.size() != 2) fail(Errc::shape_mismatch, "patchify needs 2-D image");
    int64_t h = ni.shape[0], w = ni.shape[1];
    if (patch < 1 || h % patch || w % patch)
        fail(Errc::invalid_argument, "patch size " + std::to_string(patch) + " does not tile " + shape_str(ni.shape));
    int64_t gh = h / patch, gw = w / patch, T = gh * gw, P = patch * patch;
    std::vector<float> out(static_cast<size_t>(T * P));
    for (int64_t ty = 0; ty < gh; ++ty)
        for (int64_t tx = 0; tx < gw; ++tx) {
            int64_t t = ty * gw + tx;
            for (int64_t py = 0; py < patch; ++py)
                for (int64_t px = 0; px < patch; ++px)
                    out[static_cast<size_t>(t * P + py * patch + px)] =
                        ni.val[static_cast<size_t>((ty * patch + py) * w + tx * patch + px)];
        }
    return emit(Op::patchify, {T, P}, std::move(out), {img.id}, {patch, h, w});
}

Var Graph::unpatchify(Var tokens, int64_t h, int64_t w, int64_t patch) {
    require_same_graph({tokens});
    const Node& nt = node(tokens.id);
    if (patch < 1 || h % patch || w % patch)
        fail(Errc::invalid_argument, "patch size does not tile target image");
    int64_t gh = h / patch, gw = w / patch, T = gh * gw, P = patch * patch;
    if (nt.shape.size() != 2 || nt.shape[0] != T || nt.shape[1] != P)
        fail(Errc::shape_mismatch, "unpatchify tokens " + shape_str(nt.shape) + " for " +
                                       std::to_string(h) + "x" + std::to_string(w));
    std::vector<float> out(static_cast<size_t>(h * w));
    for (int64_t ty = 0; ty < gh; ++ty)
        for (int64_t tx = 0; tx < gw; ++tx) {
            int64_t t = ty * gw + tx;
            for (int64_t py = 0; py < patch; ++py)
                for (int64_t px = 0; px < patch; ++px)
                    out[static_cast<size_t>((ty * patch + py) * w + tx * patch + px)] =
                        nt.val[static_cast<size_t>(t * P + py * patch + px)];
        }
    return emit(Op::unpatchify, {h, w}, std::move(out), {tokens.id}, {patch, h, w});
}

Var Graph::detach(Var a) {
    require_same_graph({a});
    const Node& na = node(a.id);
    return emit(Op::detach, na.shape, na.val, {a.id});
}

// --- composites ------------------------------------------------------------

Var Graph::square(Var a) { return mul(a, a); }

Var Graph::mean_all(Var a) {
    int64_t n = numel(node(a.id).shape);
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var Graph::silu(Var a) {
    // x * sigmoid(x), with sigmoid(x) = 0.5*tanh(x/2) + 0.5 (no exp overflow)
    Var sig = add_scalar(scale(tanh(scale(a, 0.5)), 0.5), 0.5);
    return mul(a, sig);
}

Var Graph::softmax_last(Var a) {
    const Node& na = node(a.id);
    if (na.shape.empty()) fail(Errc::shape_mismatch, "softmax on 0-d tensor");
    int64_t n = na.shape.back();
    int64_t rows = numel(na.shape) / n;
    // Row max as a captured constant: softmax(x - c) == softmax(x) identically
    // for any fixed c, so gradients through this form stay exact.
    Shape mshape = na.shape;
    mshape.back() = 1;
    std::vector<float> mx(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        float m = na.val[static_cast<size_t>(r * n)];
        for (int64_t j = 1; j < n; ++j) m = std::max(m, na.val[static_cast<size_t>(r * n + j)]);
        mx[static_cast<size_t>(r)] = m;
    }
    Var m = constant(TensorData(mshape, std::move(mx)));
    Var e = exp(sub(a, broadcast_last(m, n)));
    Var s = sum_last(e);
    return divide(e, broadcast_last(s, n));
}

Var Graph::layer_norm_last(Var a, double eps) {
    const Node& na = node(a.id);
    if (na.shape.empty()) fail(Errc::shape_mismatch, "layer_norm on 0-d tensor");
    int64_t n = na.shape.back();
    Var mu = scale(sum_last(a), 1.0 / static_cast<double>(n));
    Var xc = sub(a, broadcast_last(mu, n));
    Var var = scale(sum_last(square(xc)), 1.0 / static_cast<double>(n));
    Var denom = sqrt(add_scalar(var, eps));
    return divide(xc, broadcast_last(denom, n));
}

Var Graph::mse(Var pred, Var target) { return mean_all(square(sub(pred, target))); }

// --- backward ---------------------------------------------------------------

std::map<std::string, Var> Graph::backward(Var output, const ParamStore& wrt) {
    if (!output.valid() || output.g != this) fail(Errc::invalid_argument, "output not on this graph");
    if (numel(node(output.id).shape) != 1)
        fail(Errc::invalid_argument, "backward needs a scalar output, got " + shape_str(node(output.id).shape));

    std::vector<int32_t> adj(static_cast<size_t>(output.id) + 1, -1);
    adj[static_cast<size_t>(output.id)] =
        constant(TensorData(node(output.id).shape, {1.0f})).id;

    auto accum = [&](int32_t target, Var contrib) {
        if (!nodes_[static_cast<size_t>(target)].requires_grad) return;
        int32_t& slot = adj[static_cast<size_t>(target)];
        slot = (slot < 0) ? contrib.id : add(Var{this, slot}, contrib).id;
    };

    for (int32_t id = output.id; id >= 0; --id) {
        if (adj[static_cast<size_t>(id)] < 0) continue;
        if (!nodes_[static_cast<size_t>(id)].requires_grad) continue;
        Var g{this, adj[static_cast<size_t>(id)]};
        Var out{this, id};
        // Copy the pieces used below: nodes_ may reallocate as vjps are emitted.
        Op op = nodes_[static_cast<size_t>(id)].op;
        std::vector<int32_t> in = nodes_[static_cast<size_t>(id)].inputs;
        std::vector<int64_t> iattrs = nodes_[static_cast<size_t>(id)].iattrs;
        double sattr = nodes_[static_cast<size_t>(id)].sattr;

        switch (op) {
        case Op::leaf:
        case Op::constant:
        case Op::detach:
            break;
        case Op::add:
            accum(in[0], g);
            accum(in[1], g);
            break;
        case Op::sub:
            accum(in[0], g);
            accum(in[1], scale(g, -1.0));
            break;
        case Op::mul:
            accum(in[0], mul(g, Var{this, in[1]}));
            accum(in[1], mul(g, Var{this, in[0]}));
            break;
        case Op::divide: {
            Var b{this, in[1]};
            accum(in[0], divide(g, b));
            accum(in[1], scale(divide(mul(g, out), b), -1.0));
            break;
        }
        case Op::scale:
            accum(in[0], scale(g, sattr));
            break;
        case Op::add_scalar:
            accum(in[0], g);
            break;
        case Op::matmul: {
            Var a{this, in[0]}, b{this, in[1]};
            accum(in[0], matmul(g, transpose(b)));
            accum(in[1], matmul(transpose(a), g));
            break;
        }
        case Op::transpose:
            accum(in[0], transpose(g));
            break;
        case Op::tanh_: {
            Var one_minus_y2 = add_scalar(scale(square(out), -1.0), 1.0);
            accum(in[0], mul(g, one_minus_y2));
            break;
        }
        case Op::exp_:
            accum(in[0], mul(g, out));
            break;
        case Op::log_:
            accum(in[0], divide(g, Var{this, in[0]}));
            break;
        case Op::sqrt_:
            accum(in[0], scale(divide(g, out), 0.5));
            break;
        case Op::sum_all:
            accum(in[0], broadcast_full(g, nodes_[static_cast<size_t>(in[0])].shape));
            break;
        case Op::broadcast_full:
            accum(in[0], reshape(sum_all(g), nodes_[static_cast<size_t>(in[0])].shape));
            break;
        case Op::sum_last:
            accum(in[0], broadcast_last(g, nodes_[static_cast<size_t>(in[0])].shape.back()));
            break;
        case Op::broadcast_last:
            accum(in[0], sum_last(g));
            break;
        case Op::sum_rows:
            accum(in[0], broadcast_rows(g, nodes_[static_cast<size_t>(in[0])].shape[0]));
            break;
        case Op::broadcast_rows:
            accum(in[0], sum_rows(g));
            break;
        case Op::reshape:
            accum(in[0], reshape(g, nodes_[static_cast<size_t>(in[0])].shape));
            break;
        case Op::slice:
            accum(in[0], pad_to(g, nodes_[static_cast<size_t>(in[0])].shape, iattrs));
            break;
        case Op::pad_to: {
            const Shape& src = nodes_[static_cast<size_t>(in[0])].shape;
            accum(in[0], slice(g, iattrs, src));
            break;
        }
        case Op::concat: {
            int64_t row = 0;
            for (int32_t part : in) {
                const Shape& ps = nodes_[static_cast<size_t>(part)].shape;
                std::vector<int64_t> start(ps.size(), 0), len(ps.begin(), ps.end());
                start[0] = row;
                accum(part, slice(g, start, len));
                row += ps[0];
            }
            break;
        }
        case Op::embedding: {
            int64_t V = nodes_[static_cast<size_t>(in[0])].shape[0];
            accum(in[0], embed_scatter(g, iattrs, V));
            break;
        }
        case Op::embed_scatter:
            accum(in[0], embedding(g, iattrs));
            break;
        case Op::patchify:
            accum(in[0], unpatchify(g, iattrs[1], iattrs[2], iattrs[0]));
            break;
        case Op::unpatchify:
            accum(in[0], patchify(g, iattrs[0]));
            break;
        }
    }

    std::map<std::string, Var> result;
    for (const auto& [name, value] : wrt) {
        auto it = leaves_.find(name);
        if (it != leaves_.end() && it->second <= output.id &&
            adj[static_cast<size_t>(it->second)] >= 0) {
            Var gv{this, adj[static_cast<size_t>(it->second)]};
            if (gv.shape() != value.shape)
                fail(Errc::shape_mismatch, "gradient shape for " + name);
            result.emplace(name, gv);
        } else {
            result.emplace(name, zeros_like_shape(value.shape));
        }
    }
    return result;
}

// --- ParamStore --------------------------------------------------------------

void ParamStore::set(const std::string& name, TensorData value) {
    check_finite(value, ("param " + name).c_str());
    entries_[name] = std::move(value);
}

const TensorData& ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail(Errc::unknown_name, "no parameter named " + name);
    return it->second;
}

TensorData& ParamStore::get_mut(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) fail(Errc::unknown_name, "no parameter named " + name);
    return it->second;
}

bool ParamStore::contains(const std::string& name) const { return entries_.count(name) != 0; }

void ParamStore::erase(const std::string& name) { entries_.erase(name); }

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

int64_t ParamStore::flat_size() const {
    int64_t n = 0;
    for (const auto& [k, v] : entries_) n += v.size();
    return n;
}

// --- free functions -----------------------------------------------------------

PrimKind prim_kind_from_name(const std::string& name) {
    static const std::map<std::string, PrimKind> table = {
        {"matmul", PrimKind::matmul},
        {"add", PrimKind::add},
        {"elementwise-multiply", PrimKind::elementwise_multiply},
        {"scalar-scale", PrimKind::scalar_scale},
        {"tanh", PrimKind::tanh},
        {"silu", PrimKind::silu},
        {"softmax-over-last-axis", PrimKind::softmax_last},
        {"layer-normalize", PrimKind::layer_normalize},
        {"mean", PrimKind::mean},
        {"sum", PrimKind::sum},
        {"square", PrimKind::square},
        {"sqrt", PrimKind::sqrt},
        {"concatenate", PrimKind::concatenate},
        {"reshape", PrimKind::reshape},
        {"slice", PrimKind::slice},
        {"embedding-lookup", PrimKind::embedding_lookup},
    };
    auto it = table.find(name);
    if (it == table.end()) fail(Errc::unsupported_primitive, "no primitive named " + name);
    return it->second;
}

Var apply_primitive(PrimKind kind, const std::vector<Var>& inputs, const PrimAttrs& attrs) {
    auto need = [&](size_t n) {
        if (inputs.size() != n)
            fail(Errc::invalid_argument, "primitive expects " + std::to_string(n) + " inputs, got " +
                                             std::to_string(inputs.size()));
        for (const Var& v : inputs)
            if (!v.valid()) fail(Errc::invalid_argument, "invalid tensor handle");
    };
    auto g = [&]() -> Graph& {
        if (inputs.empty()) fail(Errc::invalid_argument, "primitive needs at least one input");
        return *inputs[0].g;
    };
    switch (kind) {
    case PrimKind::matmul: need(2); return g().matmul(inputs[0], inputs[1]);
    case PrimKind::add: need(2); return g().add(inputs[0], inputs[1]);
    case PrimKind::elementwise_multiply: need(2); return g().mul(inputs[0], inputs[1]);
    case PrimKind::scalar_scale: need(1); return g().scale(inputs[0], attrs.scalar);
    case PrimKind::tanh: need(1); return g().tanh(inputs[0]);
    case PrimKind::silu: need(1); return g().silu(inputs[0]);
    case PrimKind::softmax_last: need(1); return g().softmax_last(inputs[0]);
    case PrimKind::layer_normalize: need(1); return g().layer_norm_last(inputs[0]);
    case PrimKind::mean: need(1); return g().mean_all(inputs[0]);
    case PrimKind::sum: need(1); return g().sum_all(inputs[0]);
    case PrimKind::square: need(1); return g().square(inputs[0]);
    case PrimKind::sqrt: need(1); return g().sqrt(inputs[0]);
    case PrimKind::concatenate:
        if (inputs.empty()) fail(Errc::invalid_argument, "concatenate needs inputs");
        return g().concat(inputs);
    case PrimKind::reshape: need(1); return g().reshape(inputs[0], attrs.shape);
    case PrimKind::slice: need(1); return g().slice(inputs[0], attrs.start, attrs.len);
    case PrimKind::embedding_lookup: need(1); return g().embedding(inputs[0], attrs.ids);
    }
    fail(Errc::unsupported_primitive, "unknown primitive kind");
}

std::vector<float> flatten_grads(const std::map<std::string, Var>& grads, const ParamStore& order) {
    if (grads.size() != order.count())
        fail(Errc::unknown_name, "gradient map has " + std::to_string(grads.size()) +
                                     " entries, store has " + std::to_string(order.count()));
    std::vector<float> out;
    out.reserve(static_cast<size_t>(order.flat_size()));
    for (const auto& [name, value] : order) {
        auto it = grads.find(name);
        if (it == grads.end()) fail(Errc::unknown_name, "gradient map missing " + name);
        const Var& v = it->second;
        if (v.shape() != value.shape) fail(Errc::shape_mismatch, "gradient shape for " + name);
        const auto& data = v.value();
        out.insert(out.end(), data.begin(), data.end());
    }
    return out;
}

std::vector<float> flatten_values(const ParamStore& store) {
    std::vector<float> out;
    out.reserve(static_cast<size_t>(store.flat_size()));
    for (const auto& [name, value] : store) out.insert(out.end(), value.data.begin(), value.data.end());
    return out;
}

void unflatten_into(const std::vector<float>& flat, ParamStore& store) {
    if (static_cast<int64_t>(flat.size()) != store.flat_size())
        fail(Errc::length_mismatch, "flat vector length " + std::to_string(flat.size()) +
                                        " vs store size " + std::to_string(store.flat_size()));
    size_t pos = 0;
    for (const std::string& name : store.names()) {
        TensorData& t = store.get_mut(name);
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
                  flat.begin() + static_cast<std::ptrdiff_t>(pos + t.data.size()), t.data.begin());
        pos += t.data.size();
    }
}

std::vector<float> hvp(const std::function<Var(Graph&)>& build_loss, const ParamStore& wrt,
                       const std::vector<float>& vec) {
    if (static_cast<int64_t>(vec.size()) != wrt.flat_size())
        fail(Errc::length_mismatch, "hvp vector length " + std::to_string(vec.size()) +
                                        " vs parameter count " + std::to_string(wrt.flat_size()));
    Graph g;
    for (const auto& [name, value] : wrt) g.leaf(name, value);
    Var loss = build_loss(g);
    auto grads = g.backward(loss, wrt);

    // <grad, v> as a graph scalar, then one more backward sweep.
    Var acc{};
    size_t pos = 0;
    for (const auto& [name, value] : wrt) {
        std::vector<float> chunk(vec.begin() + static_cast<std::ptrdiff_t>(pos),
                                 vec.begin() + static_cast<std::ptrdiff_t>(pos + value.data.size()));
        pos += value.data.size();
        Var vc = g.constant(TensorData(value.shape, std::move(chunk)));
        Var term = g.sum_all(g.mul(grads.at(name), vc));
        acc = acc.valid() ? g.add(acc, term) : term;
    }
    auto grads2 = g.backward(acc, wrt);
    return flatten_grads(grads2, wrt);
}

double dot_f64(const std::vector<float>& u, const std::vector<float>& v) {
    if (u.size() != v.size())
        fail(Errc::length_mismatch, "dot of lengths " + std::to_string(u.size()) + " and " +
                                        std::to_string(v.size()));
    double acc = 0.0;
    for (size_t i = 0; i < u.size(); ++i) acc += static_cast<double>(u[i]) * static_cast<double>(v[i]);
    return acc;
}

double norm_f64(const std::vector<float>& u) {
    double acc = 0.0;
    for (float x : u) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

double cosine_similarity(const std::vector<float>& u, const std::vector<float>& v, double eps_norm) {
    if (u.size() != v.size())
        fail(Errc::length_mismatch, "cosine of lengths " + std::to_string(u.size()) + " and " +
                                        std::to_string(v.size()));
    double nu = norm_f64(u), nv = norm_f64(v);
    if (nu < eps_norm || nv < eps_norm)
        fail(Errc::degenerate_input, "cosine of near-zero-norm vector (|u|=" + std::to_string(nu) +
                                         ", |v|=" + std::to_string(nv) + ")");
    double c = dot_f64(u, v) / (nu * nv);
    return std::clamp(c, -1.0, 1.0);
}

} // namespace phyc

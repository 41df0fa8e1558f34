#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "phyc/common.hpp"

namespace phyc {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Plain value: shape + row-major f32 payload. Finiteness is enforced at the
// points where values enter a graph, not on every copy.
struct TensorData {
    Shape shape;
    std::vector<float> data;

    TensorData() = default;
    TensorData(Shape s, std::vector<float> d);
    static TensorData zeros(Shape s);
    static TensorData full(Shape s, float v);
    static TensorData scalar(float v);

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    float& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    float at(int64_t i) const { return data[static_cast<size_t>(i)]; }
};

bool all_finite(const std::vector<float>& v);
void check_finite(const TensorData& t, const char* what);

enum class Op : uint8_t {
    leaf,      // named parameter
    constant,  // captured value, no gradient flows in
    add,
    sub,
    mul,
    divide,
    scale,       // x * attr
    add_scalar,  // x + attr
    matmul,      // 2-D only
    transpose,   // 2-D
    tanh_,
    exp_,
    log_,
    sqrt_,
    sum_all,         // -> scalar
    broadcast_full,  // scalar -> shape (adjoint of sum_all)
    sum_last,        // sum over last axis, keepdim (… × n -> … × 1)
    broadcast_last,  // … × 1 -> … × n (adjoint of sum_last)
    sum_rows,        // 2-D axis-0 reduce: (r × c) -> (1 × c)
    broadcast_rows,  // (1 × c) -> (r × c)
    reshape,
    slice,      // hyperrectangle [start, start+len) per axis
    pad_to,     // embed into larger shape at offset (adjoint of slice)
    concat,     // along axis 0
    embedding,  // table (V × d), ids attr -> (n × d)
    embed_scatter,  // rows (n × d), ids attr -> (V × d) scatter-add (adjoint of embedding)
    patchify,    // (H × W) -> (T × p·p), non-overlapping p × p patches row-major
    unpatchify,  // inverse
    detach,      // value passes, gradient stops
};

const char* op_name(Op op);

class ParamStore;

struct Node {
    Op op;
    Shape shape;
    std::vector<float> val;
    std::vector<int32_t> inputs;
    std::vector<int64_t> iattrs;  // op-specific integer attributes
    double sattr = 0.0;           // scalar attribute (scale factor, added constant)
    bool requires_grad = false;
};

class Graph;

// Cheap handle into a Graph; invalidated only if the graph dies.
struct Var {
    Graph* g = nullptr;
    int32_t id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Shape& shape() const;
    const std::vector<float>& value() const;
    bool requires_grad() const;
};

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Distinguishes graph instances even when one is destroyed and another
    // reuses its address (binder caches key on this).
    uint64_t serial() const { return serial_; }

    // --- node creation -------------------------------------------------
    Var leaf(const std::string& name, const TensorData& value);
    Var constant(const TensorData& value);
    Var constant_scalar(float v);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var divide(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var tanh(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sqrt(Var a);
    Var sum_all(Var a);
    Var broadcast_full(Var scalar, const Shape& to);
    Var sum_last(Var a);
    Var broadcast_last(Var a, int64_t n);
    Var sum_rows(Var a);
    Var broadcast_rows(Var a, int64_t rows);
    Var reshape(Var a, const Shape& to);
    Var slice(Var a, const std::vector<int64_t>& start, const std::vector<int64_t>& len);
    Var pad_to(Var a, const Shape& to, const std::vector<int64_t>& offset);
    Var concat(const std::vector<Var>& parts);
    Var embedding(Var table, const std::vector<int64_t>& ids);
    Var embed_scatter(Var rows, const std::vector<int64_t>& ids, int64_t vocab);
    Var patchify(Var img, int64_t patch);
    Var unpatchify(Var tokens, int64_t h, int64_t w, int64_t patch);
    Var detach(Var a);

    // --- composites (expressed in the primitives above) ------------------
    Var square(Var a);
    Var mean_all(Var a);
    Var silu(Var a);
    Var softmax_last(Var a);
    Var layer_norm_last(Var a, double eps = 1e-5);
    Var mse(Var pred, Var target);  // mean of squared difference, scalar

    // --- inspection ------------------------------------------------------
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
    int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }
    Var leaf_var(const std::string& name) const;  // unknown name -> error
    bool has_leaf(const std::string& name) const;

    // Reverse-mode sweep from scalar `output`. Returns an adjoint Var for
    // every name in `wrt` (zeros when unreachable or not a leaf here).
    // Adjoints are graph nodes, so a scalar built from them can be
    // backward()ed again.
    std::map<std::string, Var> backward(Var output, const ParamStore& wrt);

private:
    friend struct Var;
    Var emit(Op op, Shape shape, std::vector<float> val, std::vector<int32_t> inputs,
             std::vector<int64_t> iattrs = {}, double sattr = 0.0);
    Var zeros_like_shape(const Shape& s);

    static uint64_t next_serial() {
        static std::atomic<uint64_t> c{0};
        return c.fetch_add(1, std::memory_order_relaxed);
    }

    std::vector<Node> nodes_;
    std::map<std::string, int32_t> leaves_;
    uint64_t serial_ = next_serial();
};

// --- ParamStore ----------------------------------------------------------

// Named f32 tensors; map keeps lexicographic order, which fixes the
// flattening order everywhere (gradients, optimizer state, checkpoints).
class ParamStore {
public:
    void set(const std::string& name, TensorData value);  // insert or replace
    const TensorData& get(const std::string& name) const;
    TensorData& get_mut(const std::string& name);
    bool contains(const std::string& name) const;
    void erase(const std::string& name);
    std::vector<std::string> names() const;
    size_t count() const { return entries_.size(); }
    int64_t flat_size() const;

    std::map<std::string, TensorData>::const_iterator begin() const { return entries_.begin(); }
    std::map<std::string, TensorData>::const_iterator end() const { return entries_.end(); }

private:
    std::map<std::string, TensorData> entries_;
};

// --- free functions over graphs / stores -----------------------------------

enum class PrimKind : uint8_t {
    matmul,
    add,
    elementwise_multiply,
    scalar_scale,
    tanh,
    silu,
    softmax_last,
    layer_normalize,
    mean,
    sum,
    square,
    sqrt,
    concatenate,
    reshape,
    slice,
    embedding_lookup,
};

PrimKind prim_kind_from_name(const std::string& name);  // unsupported -> error

struct PrimAttrs {
    double scalar = 1.0;                // scalar_scale factor
    std::vector<int64_t> shape;         // reshape target
    std::vector<int64_t> start, len;    // slice window
    std::vector<int64_t> ids;           // embedding_lookup ids
};

Var apply_primitive(PrimKind kind, const std::vector<Var>& inputs, const PrimAttrs& attrs = {});

// Flatten a gradient map in the store's lexicographic order. The map must
// cover exactly the store's names.
std::vector<float> flatten_grads(const std::map<std::string, Var>& grads, const ParamStore& order);
std::vector<float> flatten_values(const ParamStore& store);
void unflatten_into(const std::vector<float>& flat, ParamStore& store);

// H·v via backward of <grad, v>. `builder` must rebuild the loss from leaves
// registered on the supplied graph (one leaf per store entry, same names).
std::vector<float> hvp(const std::function<Var(Graph&)>& build_loss, const ParamStore& wrt,
                       const std::vector<float>& vec);

double dot_f64(const std::vector<float>& u, const std::vector<float>& v);
double norm_f64(const std::vector<float>& u);
double cosine_similarity(const std::vector<float>& u, const std::vector<float>& v,
                         double eps_norm = 1e-12);

}  // namespace phyc

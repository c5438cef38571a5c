#ifndef ICFLOW_GRAPH_HPP
#define ICFLOW_GRAPH_HPP

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "icflow/tensor.hpp"

namespace icflow {

// Per-row rotation table for the rope op: cos/sin per (row, channel pair).
// Built by the token layer from position ids; the graph only rotates.
struct RopeTable {
    Index n_rows = 0;
    Index n_pairs = 0;  // head_dim / 2
    std::vector<double> cosv;  // n_rows * n_pairs
    std::vector<double> sinv;
};

// Handle into a Graph. Invalid until assigned.
struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode gradient tape over a closed op set. One graph per forward
// pass; ops append nodes, backward() runs the recorded adjoints in reverse.
// Every op checks its output for NaN/Inf and accumulates in a fixed index
// order, so results are deterministic on a single thread.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // leaves
    Value input(Tensor v);           // constant, no gradient
    Value param(Tensor v);           // differentiable leaf

    const Tensor& val(Value v) const { return node(v).value; }
    // gradient after backward(); exact zeros if the value was never touched
    Tensor grad(Value v) const;

    // elementwise, same shape
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value div(Value a, Value b);
    Value scale(Value a, double c);
    Value add_const(Value a, double c);
    Value gelu(Value a);
    Value esqrt(Value a);
    // out = x * s[0] with a learned scalar s (numel 1)
    Value mul_scalar(Value x, Value s);

    // broadcast a rank-1 vector v[d] across the rows of x[n, d]
    Value add_rowvec(Value x, Value v);
    Value mul_rowvec(Value x, Value v);

    // 2D linear algebra
    Value matmul(Value a, Value b);
    Value transpose(Value a);

    Value softmax_rows(Value x);
    Value layernorm_rows(Value x, double eps = 1e-5);

    // shape ops
    Value reshape(Value a, Shape new_shape);
    Value slice_rows(Value x, Index start, Index len);
    Value slice_cols(Value x, Index start, Index len);
    Value concat_rows(const std::vector<Value>& parts);
    Value concat_cols(const std::vector<Value>& parts);
    // bijective reindexing: out[i] = x[perm[i]]
    Value gather(Value x, std::shared_ptr<const std::vector<Index>> perm, Shape out_shape);

    // reductions to a scalar [1]
    Value sum_all(Value x);
    Value mean_all(Value x);

    // rotary rotation of x[n, head_dim] by a shared table
    Value rope(Value x, std::shared_ptr<const RopeTable> table);

    // scaled dot-product attention over the key axis, built from primitives:
    // q[nq, dh], k[nk, dh], v[nk, dv] -> [nq, dv]; optional additive mask[nq, nk]
    Value attention(Value q, Value k, Value v, std::optional<Value> mask = {});

    // treats root (numel 1) as the objective; fills gradients
    void backward(Value root);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<int> parents;
        std::function<void(Graph&, int)> backprop;  // id of this node
    };

    Node& node(Value v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    const Node& node(Value v) const { return nodes_[static_cast<std::size_t>(v.id)]; }
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

    Value make(Tensor value, std::vector<int> parents, std::function<void(Graph&, int)> backprop,
               const char* opname);
    Tensor& grad_buf(int id);  // lazily allocated accumulator

    std::vector<Node> nodes_;
};

// composition helpers
Value linear(Graph& g, Value x, Value w, Value b);          // x[n,din] w[din,dout] + b[dout]
Value layernorm(Graph& g, Value x, Value scale, Value shift, double eps = 1e-5);
Value mse(Graph& g, Value a, Value b);

}  // namespace icflow

#endif

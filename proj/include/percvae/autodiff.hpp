#pragma once

// Tape-based reverse-mode automatic differentiation over small dense tensors.
//
// A Graph records every operation applied to its Vars in creation order, so the
// reverse of the node list is a valid topological order for backpropagation.
// Parameters are bound by reference: their values are read in place and
// backward() accumulates into Tensor::grad.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "percvae/tensor.hpp"

namespace percvae::ad {

using Mask = std::vector<std::uint8_t>;

class Graph;

struct Var {
    Graph* graph = nullptr;
    int id = -1;

    bool valid() const noexcept { return graph != nullptr && id >= 0; }
    std::span<const double> value() const;
    const Shape& shape() const;
    std::int64_t size() const;
    double item() const;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int self)>;

    /// With `track == false` no backward closures are recorded (inference mode).
    explicit Graph(bool track = true) : track_(track) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Binds a trainable tensor. Gradients flow into `t.grad` on backward().
    Var param(Tensor& t);
    /// Binds a tensor as a read-only leaf.
    Var param(const Tensor& t);
    Var constant(Shape shape, std::vector<double> values);
    Var constant(std::vector<double> values);
    Var scalar(double v);

    void backward(Var loss);

    bool tracking() const noexcept { return track_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }

    std::span<const double> value(int id) const;
    const Shape& shape(int id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    /// Gradient buffer of a node, allocated on first use during backward().
    std::vector<double>& grad(int id);

    /// Adds an op result. `inputs` decides whether the node needs a gradient;
    /// `fn` is dropped when no input does or tracking is off.
    Var emit(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var emit(Shape shape, std::vector<double> value, std::span<const Var> inputs, BackwardFn fn);

private:
    struct Node {
        Shape shape;
        std::vector<double> owned;
        const double* external = nullptr;
        std::size_t length = 0;
        std::vector<double> grad;
        BackwardFn backward;
        Tensor* param = nullptr;
        bool requires_grad = false;
    };

    Var push(Node node);

    bool track_;
    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, int> bound_;
};

// Registered differentiable operations. Vectors are rank 1, matrices rank 2;
// "scalar" results have shape {1}.
Var matmul(Var a, Var b);                  // [m,k]x[k] -> [m]   or [m,k]x[k,n] -> [m,n]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                     // elementwise
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var concat(std::span<const Var> parts);    // rank-1 parts
Var concat(std::initializer_list<Var> parts);
Var slice(Var a, std::int64_t offset, std::int64_t length);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var masked_softmax(Var logits, const Mask& mask);
Var softmax(Var logits);
Var embedding(Var table, std::int64_t row);             // [V,d] -> [d]
Var gather(Var table, std::span<const std::int32_t> rows);  // [V,d] -> [n,d]
Var sum_rows(Var m);                                    // [n,d] -> [d]
Var stack(std::span<const Var> rows);                   // n x [d] -> [n,d]
Var transpose(Var m);
Var cross_entropy(Var probs, std::int64_t target);      // -log probs[target]
Var sum(Var a);
Var mean(Var a);
Var affine(Var w, Var x, Var b);                        // w x + b
/// Gated recurrent cell; w: [3H,in], u: [3H,H], b: [3H]. Gate order r, z, n.
Var gru_cell(Var x, Var h, Var w, Var u, Var b);

/// Plain masked softmax over values (no graph), same contract as the op.
std::vector<double> masked_softmax_values(std::span<const double> logits, const Mask& mask);

using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Max over all input elements of |analytic - central difference| / max(1, |central difference|).
double grad_check(const ScalarFn& fn, std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace percvae::ad

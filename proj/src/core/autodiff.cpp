#include "percvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "percvae/error.hpp"

namespace percvae::ad {

namespace {

constexpr double kTinyProb = 1e-300;

std::size_t usize(std::int64_t v) { return static_cast<std::size_t>(v); }

Graph& graph_of(Var a) {
    if (!a.valid()) fail(ErrorKind::contract, "operation on an unbound Var");
    return *a.graph;
}

void require_same_graph(Var a, Var b) {
    if (a.graph != b.graph) fail(ErrorKind::contract, "operands belong to different graphs");
}

void require_same_shape(Var a, Var b, const char* op) {
    require_same_graph(a, b);
    if (a.shape() != b.shape())
        fail(ErrorKind::shape, std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                                   shape_to_string(b.shape()));
}

void require_rank(Var a, std::size_t rank, const char* op) {
    if (a.shape().size() != rank)
        fail(ErrorKind::shape, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                   shape_to_string(a.shape()));
}

// Applies an elementwise unary map whose derivative is expressed through the
// input value x and output value y.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
    Graph& g = graph_of(a);
    auto x = a.value();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    const int ia = a.id;
    return g.emit(a.shape(), std::move(out), {a}, [ia, deriv](Graph& gr, int self) {
        auto xv = gr.value(ia);
        auto yv = gr.value(self);
        const auto& go = gr.grad(self);
        auto& ga = gr.grad(ia);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace

std::span<const double> Var::value() const { return graph_of(*this).value(id); }
const Shape& Var::shape() const { return graph_of(*this).shape(id); }
std::int64_t Var::size() const { return static_cast<std::int64_t>(value().size()); }
double Var::item() const {
    auto v = value();
    if (v.size() != 1) fail(ErrorKind::contract, "item() on non-scalar of shape " + shape_to_string(shape()));
    return v[0];
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Graph::param(Tensor& t) {
    if (auto it = bound_.find(&t); it != bound_.end()) return Var{this, it->second};
    Node n;
    n.shape = t.shape;
    n.external = t.data.data();
    n.length = t.data.size();
    n.requires_grad = track_ && t.requires_grad;
    n.param = n.requires_grad ? &t : nullptr;
    Var v = push(std::move(n));
    bound_.emplace(&t, v.id);
    return v;
}

Var Graph::param(const Tensor& t) {
    if (auto it = bound_.find(&t); it != bound_.end()) return Var{this, it->second};
    Node n;
    n.shape = t.shape;
    n.external = t.data.data();
    n.length = t.data.size();
    Var v = push(std::move(n));
    bound_.emplace(&t, v.id);
    return v;
}

Var Graph::constant(Shape shape, std::vector<double> values) {
    if (static_cast<std::int64_t>(values.size()) != shape_size(shape))
        fail(ErrorKind::shape, "constant: data length does not match shape " + shape_to_string(shape));
    Node n;
    n.shape = std::move(shape);
    n.length = values.size();
    n.owned = std::move(values);
    return push(std::move(n));
}

Var Graph::constant(std::vector<double> values) {
    const auto n = static_cast<std::int64_t>(values.size());
    return constant({n}, std::move(values));
}

Var Graph::scalar(double v) { return constant({1}, {v}); }

std::span<const double> Graph::value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.external) return {n.external, n.length};
    return {n.owned.data(), n.owned.size()};
}

std::vector<double>& Graph::grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad.assign(n.length, 0.0);
    return n.grad;
}

Var Graph::emit(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return emit(std::move(shape), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Graph::emit(Shape shape, std::vector<double> value, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.shape = std::move(shape);
    n.length = value.size();
    n.owned = std::move(value);
    if (track_) {
        for (const Var& in : inputs) {
            if (in.graph != this) fail(ErrorKind::contract, "operand from a different graph");
            if (nodes_[static_cast<std::size_t>(in.id)].requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
        if (n.requires_grad) n.backward = std::move(fn);
    }
    return push(std::move(n));
}

void Graph::backward(Var loss) {
    if (loss.graph != this) fail(ErrorKind::contract, "backward: loss from a different graph");
    if (value(loss.id).size() != 1) fail(ErrorKind::contract, "backward: loss must be scalar");
    if (!track_) fail(ErrorKind::contract, "backward: graph built without tracking");
    for (auto& n : nodes_) n.grad.clear();
    grad(loss.id)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty() || !n.backward) continue;
        n.backward(*this, id);
    }
    for (auto& n : nodes_) {
        if (!n.param || n.grad.empty()) continue;
        if (n.param->grad.size() != n.length) n.param->grad.assign(n.length, 0.0);
        for (std::size_t i = 0; i < n.length; ++i) n.param->grad[i] += n.grad[i];
    }
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a);
    require_same_graph(a, b);
    require_rank(a, 2, "matmul");
    const std::int64_t m = a.shape()[0], k = a.shape()[1];
    const bool vec = b.shape().size() == 1;
    if (b.shape()[0] != k)
        fail(ErrorKind::shape, "matmul: inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                                   shape_to_string(b.shape()));
    const std::int64_t n = vec ? 1 : b.shape()[1];
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> out(usize(m * n), 0.0);
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = av[usize(i * k + p)];
            for (std::int64_t j = 0; j < n; ++j) out[usize(i * n + j)] += aip * bv[usize(p * n + j)];
        }
    Shape shape = vec ? Shape{m} : Shape{m, n};
    const int ia = a.id, ib = b.id;
    return g.emit(std::move(shape), std::move(out), {a, b}, [ia, ib, m, k, n](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto av2 = gr.value(ia);
        auto bv2 = gr.value(ib);
        if (gr.requires_grad(ia)) {
            auto& ga = gr.grad(ia);
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::int64_t j = 0; j < n; ++j) s += go[usize(i * n + j)] * bv2[usize(p * n + j)];
                    ga[usize(i * k + p)] += s;
                }
        }
        if (gr.requires_grad(ib)) {
            auto& gb = gr.grad(ib);
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t p = 0; p < k; ++p) {
                    const double aip = av2[usize(i * k + p)];
                    for (std::int64_t j = 0; j < n; ++j) gb[usize(p * n + j)] += aip * go[usize(i * n + j)];
                }
        }
    });
}

Var affine(Var w, Var x, Var b) {
    Graph& g = graph_of(w);
    require_same_graph(w, x);
    require_same_graph(w, b);
    require_rank(w, 2, "affine");
    require_rank(x, 1, "affine");
    const std::int64_t m = w.shape()[0], k = w.shape()[1];
    if (x.size() != k || b.size() != m)
        fail(ErrorKind::shape, "affine: incompatible shapes " + shape_to_string(w.shape()) + ", " +
                                   shape_to_string(x.shape()) + ", " + shape_to_string(b.shape()));
    auto wv = w.value();
    auto xv = x.value();
    auto bv = b.value();
    std::vector<double> out(bv.begin(), bv.end());
    for (std::int64_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = wv.data() + i * k;
        for (std::int64_t p = 0; p < k; ++p) s += row[p] * xv[usize(p)];
        out[usize(i)] += s;
    }
    const int iw = w.id, ix = x.id, ib = b.id;
    return g.emit({m}, std::move(out), {w, x, b}, [iw, ix, ib, m, k](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto wv2 = gr.value(iw);
        auto xv2 = gr.value(ix);
        if (gr.requires_grad(iw)) {
            auto& gw = gr.grad(iw);
            for (std::int64_t i = 0; i < m; ++i) {
                const double gi = go[usize(i)];
                if (gi == 0.0) continue;
                double* row = gw.data() + i * k;
                for (std::int64_t p = 0; p < k; ++p) row[p] += gi * xv2[usize(p)];
            }
        }
        if (gr.requires_grad(ix)) {
            auto& gx = gr.grad(ix);
            for (std::int64_t i = 0; i < m; ++i) {
                const double gi = go[usize(i)];
                if (gi == 0.0) continue;
                const double* row = wv2.data() + i * k;
                for (std::int64_t p = 0; p < k; ++p) gx[usize(p)] += gi * row[p];
            }
        }
        if (gr.requires_grad(ib)) {
            auto& gb = gr.grad(ib);
            for (std::int64_t i = 0; i < m; ++i) gb[usize(i)] += go[usize(i)];
        }
    });
}

Var transpose(Var m) {
    Graph& g = graph_of(m);
    require_rank(m, 2, "transpose");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    auto v = m.value();
    std::vector<double> out(v.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[usize(j * r + i)] = v[usize(i * c + j)];
    const int im = m.id;
    return g.emit({c, r}, std::move(out), {m}, [im, r, c](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto& gm = gr.grad(im);
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) gm[usize(i * c + j)] += go[usize(j * r + i)];
    });
}

// ---------------------------------------------------------------- elementwise

Var add(Var a, Var b) {
    require_same_shape(a, b, "add");
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    const int ia = a.id, ib = b.id;
    return a.graph->emit(a.shape(), std::move(out), {a, b}, [ia, ib](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        for (int id : {ia, ib}) {
            if (!gr.requires_grad(id)) continue;
            auto& gi = gr.grad(id);
            for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
        }
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a, b, "sub");
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    const int ia = a.id, ib = b.id;
    return a.graph->emit(a.shape(), std::move(out), {a, b}, [ia, ib](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        if (gr.requires_grad(ia)) {
            auto& ga = gr.grad(ia);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (gr.requires_grad(ib)) {
            auto& gb = gr.grad(ib);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a, b, "mul");
    auto av = a.value();
    auto bv = b.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const int ia = a.id, ib = b.id;
    return a.graph->emit(a.shape(), std::move(out), {a, b}, [ia, ib](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto av2 = gr.value(ia);
        auto bv2 = gr.value(ib);
        if (gr.requires_grad(ia)) {
            auto& ga = gr.grad(ia);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv2[i];
        }
        if (gr.requires_grad(ib)) {
            auto& gb = gr.grad(ib);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av2[i];
        }
    });
}

Var scale(Var a, double c) {
    return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
    return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    for (double x : a.value())
        if (!(x > 0.0)) fail(ErrorKind::domain, "log of non-positive value");
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------- shape ops

Var concat(std::span<const Var> parts) {
    if (parts.empty()) fail(ErrorKind::shape, "concat: no parts");
    Graph& g = graph_of(parts.front());
    std::vector<double> out;
    std::vector<std::pair<int, std::size_t>> layout;
    for (const Var& p : parts) {
        require_same_graph(parts.front(), p);
        require_rank(p, 1, "concat");
        layout.emplace_back(p.id, out.size());
        auto v = p.value();
        out.insert(out.end(), v.begin(), v.end());
    }
    const auto n = static_cast<std::int64_t>(out.size());
    return g.emit({n}, std::move(out), parts, [layout](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        for (auto [id, off] : layout) {
            if (!gr.requires_grad(id)) continue;
            auto& gi = gr.grad(id);
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[off + i];
        }
    });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var a, std::int64_t offset, std::int64_t length) {
    Graph& g = graph_of(a);
    require_rank(a, 1, "slice");
    if (offset < 0 || length <= 0 || offset + length > a.size())
        fail(ErrorKind::shape, "slice out of range");
    auto v = a.value();
    std::vector<double> out(v.begin() + offset, v.begin() + offset + length);
    const int ia = a.id;
    return g.emit({length}, std::move(out), {a}, [ia, offset](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto& ga = gr.grad(ia);
        for (std::size_t i = 0; i < go.size(); ++i) ga[usize(offset) + i] += go[i];
    });
}

Var embedding(Var table, std::int64_t row) {
    Graph& g = graph_of(table);
    require_rank(table, 2, "embedding");
    const std::int64_t rows = table.shape()[0], d = table.shape()[1];
    if (row < 0 || row >= rows) fail(ErrorKind::shape, "embedding: row " + std::to_string(row) + " out of range");
    auto v = table.value();
    std::vector<double> out(v.begin() + row * d, v.begin() + (row + 1) * d);
    const int it = table.id;
    return g.emit({d}, std::move(out), {table}, [it, row, d](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto& gt = gr.grad(it);
        for (std::int64_t j = 0; j < d; ++j) gt[usize(row * d + j)] += go[usize(j)];
    });
}

Var gather(Var table, std::span<const std::int32_t> rows) {
    Graph& g = graph_of(table);
    require_rank(table, 2, "gather");
    if (rows.empty()) fail(ErrorKind::shape, "gather: empty index list");
    const std::int64_t n_rows = table.shape()[0], d = table.shape()[1];
    auto v = table.value();
    std::vector<double> out;
    out.reserve(rows.size() * usize(d));
    for (auto r : rows) {
        if (r < 0 || r >= n_rows) fail(ErrorKind::shape, "gather: row " + std::to_string(r) + " out of range");
        out.insert(out.end(), v.begin() + r * d, v.begin() + (r + 1) * d);
    }
    std::vector<std::int32_t> idx(rows.begin(), rows.end());
    const int it = table.id;
    const auto n = static_cast<std::int64_t>(rows.size());
    return g.emit({n, d}, std::move(out), {table}, [it, idx = std::move(idx), d](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto& gt = gr.grad(it);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::int64_t j = 0; j < d; ++j) gt[usize(idx[i] * d + j)] += go[i * usize(d) + usize(j)];
    });
}

Var sum_rows(Var m) {
    Graph& g = graph_of(m);
    require_rank(m, 2, "sum_rows");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    auto v = m.value();
    std::vector<double> out(usize(c), 0.0);
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[usize(j)] += v[usize(i * c + j)];
    const int im = m.id;
    return g.emit({c}, std::move(out), {m}, [im, r, c](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto& gm = gr.grad(im);
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) gm[usize(i * c + j)] += go[usize(j)];
    });
}

Var stack(std::span<const Var> rows) {
    if (rows.empty()) fail(ErrorKind::shape, "stack: no rows");
    Graph& g = graph_of(rows.front());
    const std::int64_t d = rows.front().size();
    std::vector<double> out;
    std::vector<int> ids;
    for (const Var& r : rows) {
        require_same_graph(rows.front(), r);
        require_rank(r, 1, "stack");
        if (r.size() != d) fail(ErrorKind::shape, "stack: rows of unequal length");
        auto v = r.value();
        out.insert(out.end(), v.begin(), v.end());
        ids.push_back(r.id);
    }
    const auto n = static_cast<std::int64_t>(rows.size());
    return g.emit({n, d}, std::move(out), rows, [ids, d](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!gr.requires_grad(ids[i])) continue;
            auto& gi = gr.grad(ids[i]);
            for (std::int64_t j = 0; j < d; ++j) gi[usize(j)] += go[i * usize(d) + usize(j)];
        }
    });
}

// ---------------------------------------------------------------- reductions, softmax, losses

Var sum(Var a) {
    Graph& g = graph_of(a);
    double s = 0.0;
    for (double x : a.value()) s += x;
    const int ia = a.id;
    return g.emit({1}, {s}, {a}, [ia](Graph& gr, int self) {
        const double go = gr.grad(self)[0];
        auto& ga = gr.grad(ia);
        for (auto& x : ga) x += go;
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

std::vector<double> masked_softmax_values(std::span<const double> logits, const Mask& mask) {
    if (logits.size() != mask.size())
        fail(ErrorKind::shape, "masked_softmax: logits length " + std::to_string(logits.size()) +
                                   " != mask length " + std::to_string(mask.size()));
    double peak = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) {
            peak = std::max(peak, logits[i]);
            any = true;
        }
    if (!any) fail(ErrorKind::invalid_support, "masked_softmax: mask selects no positions");
    std::vector<double> out(logits.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) {
            out[i] = std::exp(logits[i] - peak);
            total += out[i];
        }
    for (auto& v : out) v /= total;
    return out;
}

Var masked_softmax(Var logits, const Mask& mask) {
    Graph& g = graph_of(logits);
    require_rank(logits, 1, "masked_softmax");
    auto out = masked_softmax_values(logits.value(), mask);
    const int il = logits.id;
    return g.emit(logits.shape(), std::move(out), {logits}, [il](Graph& gr, int self) {
        const auto& go = gr.grad(self);
        auto y = gr.value(self);
        double dot = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) dot += go[i] * y[i];
        auto& gl = gr.grad(il);
        // Off-support positions have y == 0, so they receive no gradient.
        for (std::size_t i = 0; i < go.size(); ++i) gl[i] += y[i] * (go[i] - dot);
    });
}

Var softmax(Var logits) { return masked_softmax(logits, Mask(static_cast<std::size_t>(logits.size()), 1)); }

Var cross_entropy(Var probs, std::int64_t target) {
    Graph& g = graph_of(probs);
    require_rank(probs, 1, "cross_entropy");
    if (target < 0 || target >= probs.size()) fail(ErrorKind::shape, "cross_entropy: target out of range");
    const double p = std::max(probs.value()[usize(target)], kTinyProb);
    const int ip = probs.id;
    return g.emit({1}, {-std::log(p)}, {probs}, [ip, target](Graph& gr, int self) {
        const double go = gr.grad(self)[0];
        const double pv = std::max(gr.value(ip)[usize(target)], kTinyProb);
        gr.grad(ip)[usize(target)] -= go / pv;
    });
}

// ---------------------------------------------------------------- recurrent cell

Var gru_cell(Var x, Var h, Var w, Var u, Var b) {
    Graph& g = graph_of(x);
    for (Var v : {h, w, u, b}) require_same_graph(x, v);
    require_rank(x, 1, "gru_cell");
    require_rank(h, 1, "gru_cell");
    const std::int64_t hid = h.size(), in = x.size();
    if (w.shape() != Shape{3 * hid, in} || u.shape() != Shape{3 * hid, hid} || b.size() != 3 * hid)
        fail(ErrorKind::shape, "gru_cell: weight shapes inconsistent with input " + std::to_string(in) +
                                   " and hidden " + std::to_string(hid));
    auto xv = x.value();
    auto hv = h.value();
    auto wv = w.value();
    auto uv = u.value();
    auto bv = b.value();
    const std::size_t H = usize(hid), I = usize(in);
    std::vector<double> ax(3 * H, 0.0), uh(3 * H, 0.0);
    for (std::size_t i = 0; i < 3 * H; ++i) {
        double s = 0.0;
        for (std::size_t p = 0; p < I; ++p) s += wv[i * I + p] * xv[p];
        ax[i] = s + bv[i];
        double t = 0.0;
        for (std::size_t p = 0; p < H; ++p) t += uv[i * H + p] * hv[p];
        uh[i] = t;
    }
    std::vector<double> r(H), z(H), n(H), out(H);
    for (std::size_t i = 0; i < H; ++i) {
        r[i] = 1.0 / (1.0 + std::exp(-(ax[i] + uh[i])));
        z[i] = 1.0 / (1.0 + std::exp(-(ax[H + i] + uh[H + i])));
        n[i] = std::tanh(ax[2 * H + i] + r[i] * uh[2 * H + i]);
        out[i] = (1.0 - z[i]) * n[i] + z[i] * hv[i];
    }
    std::vector<double> un(uh.begin() + static_cast<std::ptrdiff_t>(2 * H), uh.end());
    const int ix = x.id, ih = h.id, iw = w.id, iu = u.id, ib = b.id;
    return g.emit({hid}, std::move(out), {x, h, w, u, b},
                  [=, r = std::move(r), z = std::move(z), n = std::move(n), un = std::move(un)](Graph& gr, int self) {
                      const auto& go = gr.grad(self);
                      auto xv2 = gr.value(ix);
                      auto hv2 = gr.value(ih);
                      auto wv2 = gr.value(iw);
                      auto uv2 = gr.value(iu);
                      std::vector<double> d_ax(3 * H), d_uh(3 * H), dh(H);
                      for (std::size_t i = 0; i < H; ++i) {
                          const double dn = go[i] * (1.0 - z[i]);
                          const double dz = go[i] * (hv2[i] - n[i]);
                          dh[i] = go[i] * z[i];
                          const double dn_pre = dn * (1.0 - n[i] * n[i]);
                          const double dr = dn_pre * un[i];
                          const double dz_pre = dz * z[i] * (1.0 - z[i]);
                          const double dr_pre = dr * r[i] * (1.0 - r[i]);
                          d_ax[i] = dr_pre;
                          d_ax[H + i] = dz_pre;
                          d_ax[2 * H + i] = dn_pre;
                          d_uh[i] = dr_pre;
                          d_uh[H + i] = dz_pre;
                          d_uh[2 * H + i] = dn_pre * r[i];
                      }
                      if (gr.requires_grad(iw)) {
                          auto& gw = gr.grad(iw);
                          for (std::size_t i = 0; i < 3 * H; ++i)
                              for (std::size_t p = 0; p < I; ++p) gw[i * I + p] += d_ax[i] * xv2[p];
                      }
                      if (gr.requires_grad(ib)) {
                          auto& gb = gr.grad(ib);
                          for (std::size_t i = 0; i < 3 * H; ++i) gb[i] += d_ax[i];
                      }
                      if (gr.requires_grad(ix)) {
                          auto& gx = gr.grad(ix);
                          for (std::size_t i = 0; i < 3 * H; ++i)
                              for (std::size_t p = 0; p < I; ++p) gx[p] += d_ax[i] * wv2[i * I + p];
                      }
                      if (gr.requires_grad(iu)) {
                          auto& gu = gr.grad(iu);
                          for (std::size_t i = 0; i < 3 * H; ++i)
                              for (std::size_t p = 0; p < H; ++p) gu[i * H + p] += d_uh[i] * hv2[p];
                      }
                      if (gr.requires_grad(ih)) {
                          auto& ghv = gr.grad(ih);
                          for (std::size_t p = 0; p < H; ++p) ghv[p] += dh[p];
                          for (std::size_t i = 0; i < 3 * H; ++i)
                              for (std::size_t p = 0; p < H; ++p) ghv[p] += d_uh[i] * uv2[i * H + p];
                      }
                  });
}

// ---------------------------------------------------------------- gradient check

double grad_check(const ScalarFn& fn, std::vector<Tensor>& inputs, double eps) {
    if (!(eps > 0.0)) fail(ErrorKind::contract, "grad_check: eps must be positive");
    std::vector<std::vector<double>> analytic;
    {
        Graph g(true);
        std::vector<Var> vars;
        for (auto& t : inputs) {
            t.requires_grad = true;
            t.zero_grad();
            vars.push_back(g.param(t));
        }
        Var out = fn(g, vars);
        if (out.size() != 1) fail(ErrorKind::contract, "grad_check: function output is not scalar");
        g.backward(out);
        for (auto& t : inputs) analytic.push_back(t.grad);
    }
    auto evaluate = [&]() {
        Graph g(false);
        std::vector<Var> vars;
        for (auto& t : inputs) vars.push_back(g.param(static_cast<const Tensor&>(t)));
        return fn(g, vars).item();
    };
    double worst = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& data = inputs[t].data;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double fp = evaluate();
            data[i] = saved - eps;
            const double fm = evaluate();
            data[i] = saved;
            const double fd = (fp - fm) / (2.0 * eps);
            const double err = std::abs(analytic[t][i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace percvae::ad

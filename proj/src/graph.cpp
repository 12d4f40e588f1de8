#include "advlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "advlab/kernels.hpp"

namespace advlab {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::kSlice: return "slice";
        case OpKind::kAffine: return "affine";
        case OpKind::kRelu: return "relu";
        case OpKind::kAdd: return "add";
        case OpKind::kSub: return "sub";
        case OpKind::kMul: return "mul";
        case OpKind::kScale: return "scale";
        case OpKind::kSum: return "sum";
        case OpKind::kSoftmaxXent: return "softmax_xent";
        case OpKind::kLogSoftmax: return "log_softmax";
        case OpKind::kKlDiv: return "kl_div";
        case OpKind::kL2Norm: return "l2_norm";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// construction

NodeId Graph::add_node(Shape shape, bool is_input, bool requires_grad,
                       std::string name) {
    Node n;
    n.value = Tensor(std::move(shape));
    n.value.requires_grad = requires_grad;
    n.is_input = is_input;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    producer_.push_back(-1);
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Graph::Node& Graph::at(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw ContractError("graph: node id " + std::to_string(id) +
                            " out of range");
    return nodes_[static_cast<size_t>(id)];
}

Graph::Node& Graph::at(NodeId id) {
    return const_cast<Node&>(static_cast<const Graph*>(this)->at(id));
}

NodeId Graph::input(const std::string& name, Shape shape, bool requires_grad) {
    if (inputs_.count(name))
        throw ContractError("graph: input '" + name + "' declared twice");
    NodeId id = add_node(std::move(shape), true, requires_grad, name);
    inputs_[name] = id;
    return id;
}

NodeId Graph::slice(NodeId flat, int64_t offset, Shape shape) {
    const Tensor& src = at(flat).value;
    const int64_t n = shape_numel(shape);
    if (offset < 0 || offset + n > src.size())
        throw ShapeError("slice: [" + std::to_string(offset) + "," +
                         std::to_string(offset + n) + ") exceeds source of " +
                         std::to_string(src.size()));
    NodeId out = add_node(std::move(shape), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kSlice, flat, -1, -1, out, 0.0, offset});
    return out;
}

NodeId Graph::affine(NodeId x, NodeId w, NodeId b) {
    const Shape& xs = at(x).value.shape();
    const Shape& ws = at(w).value.shape();
    const Shape& bs = at(b).value.shape();
    if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1)
        throw ShapeError("affine: want x[r,i], w[i,o], b[o]; got x" +
                         shape_str(xs) + " w" + shape_str(ws) + " b" +
                         shape_str(bs));
    if (xs[1] != ws[0] || ws[1] != bs[0])
        throw ShapeError("affine: inner dims disagree: x" + shape_str(xs) +
                         " w" + shape_str(ws) + " b" + shape_str(bs));
    NodeId out = add_node({xs[0], ws[1]}, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kAffine, x, w, b, out, 0.0, 0});
    return out;
}

NodeId Graph::relu(NodeId x) {
    NodeId out = add_node(at(x).value.shape(), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kRelu, x, -1, -1, out, 0.0, 0});
    return out;
}

static void check_same(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shapes differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

NodeId Graph::add(NodeId a, NodeId b) {
    check_same(at(a).value, at(b).value, "add");
    NodeId out = add_node(at(a).value.shape(), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kAdd, a, b, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::sub(NodeId a, NodeId b) {
    check_same(at(a).value, at(b).value, "sub");
    NodeId out = add_node(at(a).value.shape(), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kSub, a, b, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::mul(NodeId a, NodeId b) {
    check_same(at(a).value, at(b).value, "mul");
    NodeId out = add_node(at(a).value.shape(), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kMul, a, b, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::scale(NodeId a, double c) {
    NodeId out = add_node(at(a).value.shape(), false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kScale, a, -1, -1, out, c, 0});
    return out;
}

NodeId Graph::sum(NodeId a) {
    (void)at(a);
    NodeId out = add_node({1}, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kSum, a, -1, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::mean(NodeId a) {
    return scale(sum(a), 1.0 / static_cast<double>(at(a).value.size()));
}

NodeId Graph::softmax_xent(NodeId logits, NodeId labels) {
    const Shape& ls = at(logits).value.shape();
    const Shape& ys = at(labels).value.shape();
    if (ls.size() != 2 || ys.size() != 1 || ys[0] != ls[0])
        throw ShapeError("softmax_xent: want logits[r,c], labels[r]; got " +
                         shape_str(ls) + " and " + shape_str(ys));
    NodeId out = add_node({ls[0]}, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kSoftmaxXent, logits, labels, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::log_softmax(NodeId logits) {
    const Shape& ls = at(logits).value.shape();
    if (ls.size() != 2)
        throw ShapeError("log_softmax: want logits[r,c], got " + shape_str(ls));
    NodeId out = add_node(ls, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kLogSoftmax, logits, -1, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::kl_div(NodeId a_logits, NodeId b_logits) {
    const Shape& as = at(a_logits).value.shape();
    check_same(at(a_logits).value, at(b_logits).value, "kl_div");
    if (as.size() != 2)
        throw ShapeError("kl_div: want logits[r,c], got " + shape_str(as));
    NodeId out = add_node({as[0]}, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kKlDiv, a_logits, b_logits, -1, out, 0.0, 0});
    return out;
}

NodeId Graph::l2_norm(NodeId a) {
    (void)at(a);
    NodeId out = add_node({1}, false, true, {});
    producer_.back() = static_cast<int64_t>(ops_.size());
    ops_.push_back({OpKind::kL2Norm, a, -1, -1, out, 0.0, 0});
    return out;
}

// ---------------------------------------------------------------------------
// data movement

bool Graph::has_input(const std::string& name) const {
    return inputs_.count(name) > 0;
}

NodeId Graph::input_id(const std::string& name) const {
    auto it = inputs_.find(name);
    if (it == inputs_.end())
        throw ContractError("graph: no input named '" + name + "'");
    return it->second;
}

void Graph::bind(const std::string& name, const Tensor& t) {
    NodeId id = input_id(name);
    Node& n = at(id);
    if (!n.value.same_shape(t))
        throw ShapeError("bind '" + name + "': declared " +
                         shape_str(n.value.shape()) + ", got " +
                         shape_str(t.shape()));
    bind(name, t.data());
}

void Graph::bind(const std::string& name, std::span<const double> data) {
    NodeId id = input_id(name);
    Node& n = at(id);
    if (static_cast<int64_t>(data.size()) != n.value.size())
        throw ShapeError("bind '" + name + "': declared " +
                         std::to_string(n.value.size()) + " values, got " +
                         std::to_string(data.size()));
    for (double v : data)
        if (!std::isfinite(v))
            throw NumericError("bind '" + name + "': non-finite value", -1);
    std::memcpy(n.value.data().data(), data.data(), data.size() * 8);
    n.stamp = ++clock_;
}

// ---------------------------------------------------------------------------
// forward

int64_t Graph::producer_of(NodeId id) const {
    (void)at(id);
    return producer_[static_cast<size_t>(id)];
}

void Graph::run_op(int64_t index) {
    OpRec& op = ops_[static_cast<size_t>(index)];
    const Tensor& A = at(op.a).value;
    Tensor& out = at(op.out).value;
    double* o = out.data().data();
    const double* a = A.data().data();
    switch (op.kind) {
        case OpKind::kSlice:
            std::memcpy(o, a + op.offset, out.size() * 8);
            break;
        case OpKind::kAffine: {
            const Tensor& W = at(op.b).value;
            const Tensor& B = at(op.c).value;
            kernels::affine_forward(a, W.data().data(), B.data().data(), o,
                                    A.shape()[0], A.shape()[1], W.shape()[1]);
            break;
        }
        case OpKind::kRelu:
            kernels::relu_forward(a, o, out.size());
            break;
        case OpKind::kAdd:
            kernels::ew_add(a, at(op.b).value.data().data(), o, out.size());
            break;
        case OpKind::kSub:
            kernels::ew_sub(a, at(op.b).value.data().data(), o, out.size());
            break;
        case OpKind::kMul:
            kernels::ew_mul(a, at(op.b).value.data().data(), o, out.size());
            break;
        case OpKind::kScale:
            kernels::ew_scale(a, op.factor, o, out.size());
            break;
        case OpKind::kSum:
            o[0] = kernels::sum(A.data());
            break;
        case OpKind::kSoftmaxXent: {
            const Tensor& Y = at(op.b).value;
            const int64_t rows = A.shape()[0], cols = A.shape()[1];
            for (int64_t r = 0; r < rows; ++r) {
                double y = Y[r];
                if (y != std::floor(y) || y < 0 || y >= double(cols))
                    throw ContractError(
                        "softmax_xent: label " + std::to_string(y) +
                        " at row " + std::to_string(r) + " not in [0," +
                        std::to_string(cols) + ")");
            }
            kernels::softmax_xent_forward(a, Y.data().data(), o, rows, cols);
            break;
        }
        case OpKind::kLogSoftmax:
            kernels::log_softmax_forward(a, o, A.shape()[0], A.shape()[1]);
            break;
        case OpKind::kKlDiv:
            kernels::kl_forward(a, at(op.b).value.data().data(), o,
                                A.shape()[0], A.shape()[1]);
            break;
        case OpKind::kL2Norm:
            o[0] = kernels::l2_norm(A.data());
            break;
    }
    ++recomputes_;
    if (!out.all_finite())
        throw NumericError("op " + std::to_string(index) + " (" +
                               op_kind_name(op.kind) +
                               ") produced a non-finite value",
                           index);
}

void Graph::forward_to(int64_t last_op) {
    for (int64_t i = 0; i <= last_op; ++i) {
        const OpRec& op = ops_[static_cast<size_t>(i)];
        uint64_t newest = 0;
        for (NodeId in : {op.a, op.b, op.c}) {
            if (in < 0) continue;
            const Node& n = at(in);
            if (n.is_input && n.stamp == 0)
                throw ContractError("evaluate: input '" + n.name +
                                    "' not bound");
            newest = std::max(newest, n.stamp);
        }
        Node& out = at(op.out);
        if (newest > out.stamp) {
            run_op(i);
            out.stamp = newest;
        }
    }
}

const Tensor& Graph::evaluate(NodeId node) {
    const Node& n = at(node);
    if (n.is_input) {
        if (n.stamp == 0)
            throw ContractError("evaluate: input '" + n.name + "' not bound");
        return n.value;
    }
    forward_to(producer_of(node));
    return at(node).value;
}

// ---------------------------------------------------------------------------
// backward

bool Graph::wants_grad(NodeId id) const {
    const Node& n = at(id);
    return !(n.is_input && !n.value.requires_grad);
}

namespace {
double* grad_buf(Tensor& t) {
    if (!t.grad) t.grad.emplace(static_cast<size_t>(t.size()), 0.0);
    return t.grad->data();
}
}  // namespace

void Graph::backward(NodeId output) {
    const Tensor& out = evaluate(output);
    if (out.size() != 1)
        throw ContractError("backward: output has " +
                            std::to_string(out.size()) +
                            " elements, expected a scalar");
    for (Node& n : nodes_) {
        double* g = grad_buf(n.value);
        std::fill(g, g + n.value.size(), 0.0);
        n.grad_set = false;
    }
    Node& seed = at(output);
    (*seed.value.grad)[0] = 1.0;
    seed.grad_set = true;

    std::vector<double> tmp;
    auto touch = [&](NodeId id) -> double* {
        Node& n = at(id);
        n.grad_set = true;
        return grad_buf(n.value);
    };

    for (int64_t i = producer_of(output); i >= 0; --i) {
        const OpRec& op = ops_[static_cast<size_t>(i)];
        Node& on = at(op.out);
        if (!on.grad_set) continue;
        const double* dy = on.value.grad->data();
        const Tensor& A = at(op.a).value;
        const int64_t n = A.size();
        switch (op.kind) {
            case OpKind::kSlice:
                if (wants_grad(op.a)) {
                    double* da = touch(op.a) + op.offset;
                    const int64_t m = on.value.size();
                    for (int64_t j = 0; j < m; ++j) da[j] += dy[j];
                }
                break;
            case OpKind::kAffine: {
                const Tensor& W = at(op.b).value;
                const int64_t r = A.shape()[0], in = A.shape()[1],
                              o = W.shape()[1];
                if (wants_grad(op.a)) {  // dx = dy W^T
                    tmp.resize(static_cast<size_t>(r * in));
                    kernels::matmul_nt(dy, W.data().data(), tmp.data(), r, o,
                                       in);
                    double* da = touch(op.a);
                    kernels::ew_add(da, tmp.data(), da, r * in);
                }
                if (wants_grad(op.b)) {  // dW = x^T dy
                    tmp.resize(static_cast<size_t>(in * o));
                    kernels::matmul_tn(A.data().data(), dy, tmp.data(), in, r,
                                       o);
                    double* db = touch(op.b);
                    kernels::ew_add(db, tmp.data(), db, in * o);
                }
                if (wants_grad(op.c))
                    kernels::bias_backward(dy, touch(op.c), r, o);
                break;
            }
            case OpKind::kRelu:
                if (wants_grad(op.a))
                    kernels::relu_backward(A.data().data(), dy, touch(op.a),
                                           n);
                break;
            case OpKind::kAdd:
                if (wants_grad(op.a)) kernels::ew_axpy(dy, 1.0, touch(op.a), n);
                if (wants_grad(op.b)) kernels::ew_axpy(dy, 1.0, touch(op.b), n);
                break;
            case OpKind::kSub:
                if (wants_grad(op.a)) kernels::ew_axpy(dy, 1.0, touch(op.a), n);
                if (wants_grad(op.b))
                    kernels::ew_axpy(dy, -1.0, touch(op.b), n);
                break;
            case OpKind::kMul: {
                const Tensor& B = at(op.b).value;
                tmp.resize(static_cast<size_t>(n));
                if (wants_grad(op.a)) {
                    kernels::ew_mul(dy, B.data().data(), tmp.data(), n);
                    double* da = touch(op.a);
                    kernels::ew_add(da, tmp.data(), da, n);
                }
                if (wants_grad(op.b)) {
                    kernels::ew_mul(dy, A.data().data(), tmp.data(), n);
                    double* db = touch(op.b);
                    kernels::ew_add(db, tmp.data(), db, n);
                }
                break;
            }
            case OpKind::kScale:
                if (wants_grad(op.a))
                    kernels::ew_axpy(dy, op.factor, touch(op.a), n);
                break;
            case OpKind::kSum:
                if (wants_grad(op.a)) {
                    double* da = touch(op.a);
                    const double g = dy[0];
                    for (int64_t j = 0; j < n; ++j) da[j] += g;
                }
                break;
            case OpKind::kSoftmaxXent:
                if (wants_grad(op.a)) {
                    const Tensor& Y = at(op.b).value;
                    kernels::softmax_xent_backward(
                        A.data().data(), Y.data().data(), dy, touch(op.a),
                        A.shape()[0], A.shape()[1]);
                }
                break;
            case OpKind::kLogSoftmax:
                if (wants_grad(op.a))
                    kernels::log_softmax_backward(A.data().data(), dy,
                                                  touch(op.a), A.shape()[0],
                                                  A.shape()[1]);
                break;
            case OpKind::kKlDiv: {
                const Tensor& B = at(op.b).value;
                const bool ga = wants_grad(op.a), gb = wants_grad(op.b);
                if (!ga && !gb) break;
                tmp.assign(static_cast<size_t>(ga && gb ? 0 : n), 0.0);
                double* da = ga ? touch(op.a) : tmp.data();
                double* db = gb ? touch(op.b) : tmp.data();
                kernels::kl_backward(A.data().data(), B.data().data(),
                                     on.value.data().data(), dy, da, db,
                                     A.shape()[0], A.shape()[1]);
                break;
            }
            case OpKind::kL2Norm:
                if (wants_grad(op.a)) {
                    const double norm = on.value[0];
                    if (norm > 0.0)
                        kernels::ew_axpy(A.data().data(), dy[0] / norm,
                                         touch(op.a), n);
                }
                break;
        }
    }
}

std::vector<Tensor> Graph::gradient(NodeId output,
                                    std::span<const NodeId> wrt) {
    for (NodeId id : wrt)
        if (!at(id).value.requires_grad)
            throw ContractError("gradient: node " + std::to_string(id) +
                                " is detached (requires_grad is false)");
    backward(output);
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (NodeId id : wrt) {
        const Node& n = at(id);
        out.emplace_back(n.value.shape(), *n.value.grad);
    }
    return out;
}

const Tensor& Graph::value(NodeId node) const { return at(node).value; }

std::span<const double> Graph::grad(NodeId node) const {
    const Node& n = at(node);
    if (!n.value.grad)
        throw ContractError("grad: backward has not run over node " +
                            std::to_string(node));
    return *n.value.grad;
}

// ---------------------------------------------------------------------------
// finite differences

FdReport Graph::finite_diff_check(NodeId output, NodeId wrt, double h,
                                  double tol) {
    if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");
    const Node& wn = at(wrt);
    if (!wn.is_input || wn.stamp == 0)
        throw ContractError("finite_diff_check: wrt must be a bound input");
    const std::string name = wn.name;

    backward(output);  // also validates that output is scalar
    const std::vector<double> analytic = *wn.value.grad;
    const std::vector<double> base(wn.value.data().begin(),
                                   wn.value.data().end());

    // ReLU input nodes feeding the output, for kink detection.
    std::vector<NodeId> relu_in;
    for (int64_t i = 0; i <= producer_of(output); ++i)
        if (ops_[static_cast<size_t>(i)].kind == OpKind::kRelu)
            relu_in.push_back(ops_[static_cast<size_t>(i)].a);

    auto snapshot = [&](std::vector<double>& sink) {
        sink.clear();
        for (NodeId id : relu_in) {
            auto d = at(id).value.data();
            sink.insert(sink.end(), d.begin(), d.end());
        }
    };

    FdReport rep;
    std::vector<double> x(base), pre_p, pre_m;
    for (size_t i = 0; i < base.size(); ++i) {
        x[i] = base[i] + h;
        bind(name, x);
        const double fp = evaluate(output).item();
        snapshot(pre_p);

        x[i] = base[i] - h;
        bind(name, x);
        const double fm = evaluate(output).item();
        snapshot(pre_m);
        x[i] = base[i];

        bool kink = false;
        for (size_t j = 0; j < pre_p.size() && !kink; ++j) {
            const bool moved = pre_p[j] != pre_m[j];
            if ((pre_p[j] > 0.0) != (pre_m[j] > 0.0))
                kink = true;
            else if (moved && (std::abs(pre_p[j]) < 10 * h ||
                               std::abs(pre_m[j]) < 10 * h))
                kink = true;
        }
        if (kink) {
            ++rep.skipped;
            continue;
        }
        const double fd = (fp - fm) / (2 * h);
        const double denom =
            std::max({std::abs(fd), std::abs(analytic[i]), 1e-12});
        rep.max_rel_err =
            std::max(rep.max_rel_err, std::abs(fd - analytic[i]) / denom);
        ++rep.checked;
    }
    bind(name, base);
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace advlab

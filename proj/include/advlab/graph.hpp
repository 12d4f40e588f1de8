#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

using NodeId = int32_t;

// Primitive operations recorded on the tape.
enum class OpKind {
    kSlice,        // contiguous view of a flat vector, copied out
    kAffine,       // y[r,o] = b[o] + sum_i x[r,i] w[i,o]
    kRelu,         // elementwise max with zero
    kAdd,          // elementwise a + b
    kSub,          // elementwise a - b
    kMul,          // elementwise a * b
    kScale,        // c * a for a recorded constant c
    kSum,          // full reduction to a scalar, left-to-right
    kSoftmaxXent,  // per-row cross-entropy of logits against integer labels
    kLogSoftmax,   // row-wise log softmax
    kKlDiv,        // per-row KL(softmax(a) || softmax(b)), logits in
    kL2Norm,       // scalar l2 norm of the whole tensor
};

const char* op_kind_name(OpKind k);

// Result of comparing reverse-mode gradients against central differences.
struct FdReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    int64_t skipped = 0;  // coordinates excluded by the ReLU kink rule
    bool pass = false;
};

// A replayable straight-line program over tensors. Inputs are declared by
// name and rebound between evaluations; operations record in topological
// order by construction. Evaluation is incremental: an operation recomputes
// only when one of its inputs changed since its last run, so loops that
// rebind a single input (attack steps, perturbation steps) pay roughly one
// affected-subgraph forward per iteration.
class Graph {
  public:
    // --- construction -----------------------------------------------------
    NodeId input(const std::string& name, Shape shape,
                 bool requires_grad = true);
    NodeId slice(NodeId flat, int64_t offset, Shape shape);
    NodeId affine(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);  // recorded as scale(sum(a), 1/numel)
    NodeId softmax_xent(NodeId logits, NodeId labels);
    NodeId log_softmax(NodeId logits);
    NodeId kl_div(NodeId a_logits, NodeId b_logits);
    NodeId l2_norm(NodeId a);

    // --- data movement ----------------------------------------------------
    // Binding copies values into the graph and marks dependents stale.
    // Non-finite values are rejected up front (NumericError, index -1).
    void bind(const std::string& name, const Tensor& t);
    void bind(const std::string& name, std::span<const double> data);
    bool has_input(const std::string& name) const;
    NodeId input_id(const std::string& name) const;

    // --- execution ----------------------------------------------------------
    // Forward up to `node`; throws ContractError on unbound inputs,
    // ShapeError never (shapes are fixed at record time), NumericError with
    // the offending op index on non-finite results.
    const Tensor& evaluate(NodeId node);

    // Reverse pass from a scalar output; gradients land in each node's
    // tensor (value(n).grad). Output must be scalar (ContractError).
    void backward(NodeId output);

    // backward + copy-out for the requested nodes, which must have
    // requires_grad set (ContractError otherwise).
    std::vector<Tensor> gradient(NodeId output, std::span<const NodeId> wrt);

    // Central-difference audit of d(output)/d(wrt) where wrt is a bound
    // input. Coordinates whose +-h evaluations land on different sides of a
    // ReLU kink (or move an entry with |pre-activation| < 10h) are skipped.
    FdReport finite_diff_check(NodeId output, NodeId wrt, double h, double tol);

    // --- inspection ---------------------------------------------------------
    const Tensor& value(NodeId node) const;
    std::span<const double> grad(NodeId node) const;
    int64_t op_count() const { return static_cast<int64_t>(ops_.size()); }
    // Cumulative count of op executions, for asserting incrementality.
    int64_t recompute_count() const { return recomputes_; }

  private:
    struct Node {
        Tensor value;
        uint64_t stamp = 0;    // bumped when the value changes
        bool is_input = false;
        bool grad_set = false;  // backward wrote a contribution here
        std::string name;
    };
    struct OpRec {
        OpKind kind;
        NodeId a = -1, b = -1, c = -1;
        NodeId out = -1;
        double factor = 0.0;  // kScale
        int64_t offset = 0;   // kSlice
    };

    NodeId add_node(Shape shape, bool is_input, bool requires_grad,
                    std::string name);
    const Node& at(NodeId id) const;
    Node& at(NodeId id);
    void run_op(int64_t index);
    void forward_to(int64_t last_op);
    int64_t producer_of(NodeId id) const;  // -1 for inputs
    bool wants_grad(NodeId id) const;

    std::vector<Node> nodes_;
    std::vector<OpRec> ops_;
    std::vector<int64_t> producer_;  // node -> op index, -1 for inputs
    std::unordered_map<std::string, NodeId> inputs_;
    uint64_t clock_ = 0;
    int64_t recomputes_ = 0;
};

}  // namespace advlab

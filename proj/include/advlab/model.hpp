#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advlab/graph.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

// Architecture description. "logreg" is a single affine map; "mlp2" is
// affine-relu-affine-relu-affine with both hidden layers of width `hidden`.
struct ModelSpec {
    std::string arch = "mlp2";
    int64_t input_dim = 0;
    int64_t classes = 0;
    int64_t hidden = 64;

    void validate() const;  // throws ConfigError
    bool operator==(const ModelSpec&) const = default;
};

// A classifier whose parameters live in one flat vector: per layer, the
// row-major [in,out] weight block followed by the [out] bias block. Biases
// are part of the flat vector and therefore participate in the global
// weight norm and in weight perturbation.
class Model {
  public:
    explicit Model(ModelSpec spec);  // zero weights
    static Model init(ModelSpec spec, uint64_t seed);
    // Zero-weight shell carrying restored metadata; used by checkpoints.
    static Model restore(ModelSpec spec, uint64_t seed, int64_t step);

    const ModelSpec& spec() const { return spec_; }
    int64_t weight_count() const { return static_cast<int64_t>(w_.size()); }
    std::span<double> weights() { return w_; }
    std::span<const double> weights() const { return w_; }
    double weight_norm() const;

    uint64_t seed() const { return seed_; }
    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    struct Layer {
        int64_t in = 0, out = 0;
        int64_t w_off = 0, b_off = 0;
        bool relu_after = false;
    };
    const std::vector<Layer>& layers() const { return layers_; }

    // Record x -> logits on a graph. Declares inputs `x_name` ([batch,
    // input_dim]) and `w_name` (flat weight vector) on the graph and
    // returns the logits node ([batch, classes]). The caller binds values;
    // binding `w_name` to base weights gives f_w, to w+v gives f_{w+v}.
    NodeId build_forward(Graph& g, const std::string& x_name,
                         const std::string& w_name, int64_t batch) const;

    // Same, over existing nodes; lets several forwards share one weight
    // input (e.g. f(x) and f(x') in TRADES).
    NodeId build_forward(Graph& g, NodeId x, NodeId w) const;

    // Forward pass outside any graph, using the same kernels in the same
    // order (bitwise equal to the graph path). Optional flat weights stand
    // in for the stored ones.
    Tensor forward(const Tensor& x) const;
    Tensor forward(const Tensor& x, std::span<const double> w) const;

  private:
    void build_layout();

    ModelSpec spec_;
    std::vector<Layer> layers_;
    std::vector<double> w_;
    uint64_t seed_ = 0;
    int64_t step_ = 0;
};

// Additive weight perturbation w+v that never mutates the base model: the
// perturbed vector is materialized on demand, so detaching is a no-op on w.
class PerturbedView {
  public:
    explicit PerturbedView(Model& base)
        : base_(&base),
          v_(static_cast<size_t>(base.weight_count()), 0.0) {}

    Model& base() { return *base_; }
    const Model& base() const { return *base_; }

    std::span<double> v() { return v_; }
    std::span<const double> v() const { return v_; }
    void set_v(std::span<const double> v);
    void detach();  // v = 0
    double perturb_norm() const;

    // w + v, elementwise in index order.
    std::vector<double> materialized() const;

    Tensor forward(const Tensor& x) const;

  private:
    Model* base_;
    std::vector<double> v_;
};

// Versioned binary checkpoint: architecture, seed, step counter, flat
// weights. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace advlab

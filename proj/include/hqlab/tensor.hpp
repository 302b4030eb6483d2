#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hqlab {

/// Dense row-major tensor of 64-bit reals. `node` is the handle of the tape
/// node that produced it (-1 when the tensor is a constant from the tape's
/// point of view).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    int node = -1;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v);
    static Tensor vec(std::vector<double> d);

    int numel() const { return static_cast<int>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }
    double& at3(int c, int h, int w);
    double at3(int c, int h, int w) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
    bool all_finite() const;

    /// Metadata-only reshape; keeps data and tape node.
    Tensor reshaped(std::vector<int> s) const;
};

/// Gradient buffers indexed by tape node id. Entry i has the same element
/// count as node i's output; untouched entries are exact zeros.
using GradientSet = std::vector<std::vector<double>>;

/// Reverse-mode tape. Nodes are appended in execution order, so the node
/// list is already a topological order; backward() walks it once in reverse.
/// One forward/backward pair per tape instance (single writer).
class Tape {
  public:
    /// upstream: gradient of the loss w.r.t. this node's output.
    /// grads: accumulation buffers for every node; closures add into the
    /// entries of their parents.
    using BackwardFn = std::function<void(const double* upstream, GradientSet& grads)>;

    /// Registers a leaf (parameter or input) of the given element count.
    int leaf(int size);

    /// Marks t as a tracked leaf and returns its node id.
    int watch(Tensor& t);

    /// Records an operation node. All parents must already be on the tape;
    /// a forward reference would make the tape cyclic and throws.
    int record(int size, const std::vector<int>& parents, BackwardFn fn);

    /// Gradient of the scalar node `loss_node` w.r.t. every node on the
    /// tape. Deterministic: fixed reverse iteration, fixed accumulation
    /// order inside each closure.
    GradientSet backward(int loss_node) const;

    int node_count() const { return static_cast<int>(nodes_.size()); }
    int node_size(int id) const { return nodes_[static_cast<size_t>(id)].size; }

  private:
    struct Node {
        int size = 0;
        BackwardFn fn;  // empty for leaves
    };
    std::vector<Node> nodes_;
};

// ---- differentiable operations -------------------------------------------

/// Cross-correlation of input [C_in,H,W] with kernels [C_out,C_in,k,k] plus
/// per-output-channel bias. H' = floor((H+2*padding-k)/stride)+1.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride = 1, int padding = 0);

/// out[i] = sum_j W[i,j] * in[j] + b[i].
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(Tape& tape, const Tensor& x);

/// 2x2 non-overlapping max pool over [C,H,W]; H and W must be even.
/// Gradient routes to the argmax cell, ties broken by first index in
/// row-major window order.
Tensor max_pool2(Tape& tape, const Tensor& x);

/// -log softmax(logits)[label], max-subtracted for stability. Scalar output.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, int label);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double k);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh_op(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);
/// Scalar element selection out = x[index].
Tensor pick(Tape& tape, const Tensor& x, int index);

/// Plain (non-tape) softmax of a vector, max-subtracted.
std::vector<double> softmax(const std::vector<double>& logits);

// ---- optimizer -------------------------------------------------------------

enum class OptimKind { sgd, adam };

/// Optimizer state over an ordered parameter list. Adam moments are lazily
/// shaped on first step.
struct OptimState {
    OptimKind method = OptimKind::sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    int64_t step_count = 0;
    std::vector<std::vector<double>> m, v;
};

/// Extracts per-parameter gradients (aligned with `params`) from a node-id
/// indexed GradientSet. Parameters not on the tape get zero gradients.
std::vector<std::vector<double>> gather_grads(const GradientSet& grads,
                                              const std::vector<Tensor*>& params);

/// In-place parameter update. SGD: p -= lr*g. Adam: bias-corrected moments.
void optimizer_step(std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads,
                    OptimState& state);

}  // namespace hqlab

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "shapednet/errors.hpp"
#include "shapednet/rng.hpp"

namespace shapednet {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the dynamically built computation graph. Nodes only reference
// their inputs, so the graph is acyclic by construction and is released as
// soon as the last output Tensor goes out of scope.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Accumulates into inputs' grad buffers; null for leaves and no-grad nodes.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Global autodiff switch. Ops built while disabled record neither inputs nor
// backward functions (pure value computation).
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// N-dimensional array of 64-bit reals with an optional gradient buffer.
// Value-semantics handle onto a shared graph node; copying a Tensor aliases
// the same node.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor scalar(double v);
    // Leaf that participates in backward (a trainable parameter).
    static Tensor param(Shape shape, std::vector<double> data);

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }

    const std::vector<double>& values() const { return n_->value; }
    // Direct access for leaves (parameter updates, finite differences).
    // Mutating a non-leaf invalidates nothing but makes no sense; graphs are
    // rebuilt from leaves every step.
    std::vector<double>& mutable_values() { return n_->value; }

    double scalar_value() const;
    bool requires_grad() const { return n_->requires_grad; }

    // Gradient accumulated by the last backward(); valid for nodes with
    // requires_grad after backward has run.
    const std::vector<double>& grad() const { return n_->grad; }
    std::vector<double>& mutable_grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    void clear_grad() { n_->grad.assign(n_->value.size(), 0.0); }

    // Reverse-mode sweep from a scalar root. Visits each reachable node
    // exactly once in reverse topological order.
    void backward();

    std::shared_ptr<detail::Node> node() const { return n_; }

    bool same_node(const Tensor& other) const { return n_ == other.n_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
    std::shared_ptr<detail::Node> n_;

    friend Tensor make_op_node(Shape shape, std::vector<double> value,
                               std::vector<Tensor> inputs,
                               std::function<void(detail::Node&)> backward_fn);
};

// Internal op constructor; respects GradMode.
Tensor make_op_node(Shape shape, std::vector<double> value,
                    std::vector<Tensor> inputs,
                    std::function<void(detail::Node&)> backward_fn);

// ---------------------------------------------------------------------------
// Elementwise and reduction ops. All reductions accumulate sequentially in
// index order; repeated runs on identical inputs are bit-identical.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);          // same shape
Tensor mul(const Tensor& a, const Tensor& b);          // same shape
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor rsub_scalar(double c, const Tensor& a);         // c - a
Tensor square(const Tensor& a);
Tensor sqrt_op(const Tensor& a);                       // requires a >= 0
Tensor exp_op(const Tensor& a);
Tensor abs_op(const Tensor& a);                        // subgradient 0 at 0
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double alpha);
Tensor sum(const Tensor& a);                           // -> [1]
Tensor add_n(const std::vector<Tensor>& xs);           // left-to-right
Tensor gather_scalar(const Tensor& a, int64_t flat_index);  // -> [1]
// sum_i w[i] * a[i]^2 with constant weights; -> [1]
Tensor weighted_sumsq(const Tensor& a, const std::vector<double>& w);
Tensor stack_scalars(const std::vector<Tensor>& xs);   // k [1]-tensors -> [k]

// ---------------------------------------------------------------------------
// Structural / neural-network ops.
// ---------------------------------------------------------------------------

// input [C,H,W] or [N,C,H,W]; kernel [Co,Ci,kh,kw]; zero padding.
// Output spatial size floor((H + 2*pad - kh)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad);

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    void init(int channels) {
        running_mean.assign(static_cast<size_t>(channels), 0.0);
        running_var.assign(static_cast<size_t>(channels), 1.0);
    }
};

// Per-channel normalization. Training mode uses batch statistics over
// (batch and) spatial dims and updates `stats` in place by EMA with the given
// momentum; inference mode reads `stats`. input rank 3 [C,H,W] or 4 [N,C,H,W].
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps, bool train, BatchNormStats& stats,
                  double momentum);

// input + bias broadcast over one channel axis (axis 0 for rank 3, axis 1 for
// rank 4); bias rank 1 of length C. Used by the linear detection convs.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);
Tensor residual_add(const Tensor& a, const Tensor& b);  // alias of add + shape check
// Rank 3 [C,H,W] or rank 4 [N,C,H,W]; concatenates along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Rank 3 or 4; doubles the two trailing spatial dims.
Tensor upsample_nearest2x(const Tensor& input);
Tensor flatten(const Tensor& input);                    // -> [1,N], row-major
Tensor unflatten(const Tensor& flat, Shape shape);      // inverse view-copy
// x [1,N] dot w [1,N] + bias[0] -> [1,1]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);
// Inverted dropout; identity when train==false or rate==0.
Tensor dropout(const Tensor& input, double rate, bool train, Rng& rng);
Tensor select_image(const Tensor& batched, int n);      // [N,C,H,W] -> [C,H,W]
// [A*F,H,W] -> [H,W,A,F] (or batched [N,A*F,H,W] -> [N,H,W,A,F]); lays
// detection maps out per grid slot.
Tensor to_grid_layout(const Tensor& head, int anchors, int features);

}  // namespace shapednet

#include "shapednet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace shapednet {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("shape has non-positive dimension " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {
bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::from(Shape shape, std::vector<double> data) {
    int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size()))
        throw DimensionError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
    int64_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.n_->requires_grad = true;
    return t;
}

double Tensor::scalar_value() const {
    if (numel() != 1) throw DimensionError("scalar_value on tensor of " + std::to_string(numel()) + " elements");
    return n_->value[0];
}

void Tensor::backward() {
    if (numel() != 1) throw DimensionError("backward() requires a scalar root");
    // Iterative post-order DFS to get a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* node;
        size_t next_input;
    };
    std::vector<Frame> stack;
    stack.push_back({n_.get(), 0});
    visited.insert(n_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_input < f.node->inputs.size()) {
            detail::Node* in = f.node->inputs[f.next_input].get();
            ++f.next_input;
            if (visited.insert(in).second) stack.push_back({in, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    // order is children-before-parents; reverse iterate => root first.
    for (detail::Node* node : order) node->ensure_grad();
    std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
    n_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

Tensor make_op_node(Shape shape, std::vector<double> value,
                    std::vector<Tensor> inputs,
                    std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    if (GradMode::enabled()) {
        bool needs = false;
        for (const Tensor& t : inputs)
            if (t.defined() && t.requires_grad()) needs = true;
        if (needs) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (Tensor& t : inputs) node->inputs.push_back(t.node());
            node->backward_fn = std::move(backward_fn);
        }
    }
    Tensor out;
    out.n_ = std::move(node);
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// Common pattern: out[i] = f(a[i]), da[i] += g[i] * dfdx(a[i], out[i]).
Tensor unary_eltwise(const Tensor& a, const std::function<double(double)>& f,
                     const std::function<double(double, double)>& dfdx) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return make_op_node(a.shape(), std::move(out), {a}, [dfdx](detail::Node& n) {
        auto& in = *n.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < n.value.size(); ++i)
            in.grad[i] += n.grad[i] * dfdx(in.value[i], n.value[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& in = *n.inputs[static_cast<size_t>(k)];
            in.ensure_grad();
            for (size_t i = 0; i < n.value.size(); ++i) in.grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        ia.ensure_grad();
        ib.ensure_grad();
        for (size_t i = 0; i < n.value.size(); ++i) {
            ia.grad[i] += n.grad[i];
            ib.grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return make_op_node(a.shape(), std::move(out), {a, b}, [](detail::Node& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        ia.ensure_grad();
        ib.ensure_grad();
        for (size_t i = 0; i < n.value.size(); ++i) {
            ia.grad[i] += n.grad[i] * ib.value[i];
            ib.grad[i] += n.grad[i] * ia.value[i];
        }
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    return unary_eltwise(a, [c](double x) { return x + c; },
                         [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    return unary_eltwise(a, [c](double x) { return x * c; },
                         [c](double, double) { return c; });
}

Tensor rsub_scalar(double c, const Tensor& a) {
    return unary_eltwise(a, [c](double x) { return c - x; },
                         [](double, double) { return -1.0; });
}

Tensor square(const Tensor& a) {
    return unary_eltwise(a, [](double x) { return x * x; },
                         [](double x, double) { return 2.0 * x; });
}

Tensor sqrt_op(const Tensor& a) {
    for (double x : a.values())
        if (x < 0.0) throw DataError("sqrt_op: negative input");
    return unary_eltwise(a, [](double x) { return std::sqrt(x); },
                         [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor exp_op(const Tensor& a) {
    return unary_eltwise(a, [](double x) { return std::exp(x); },
                         [](double, double y) { return y; });
}

Tensor abs_op(const Tensor& a) {
    return unary_eltwise(a, [](double x) { return std::fabs(x); },
                         [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& a) {
    // 1/(1+e^-x), computed stably for large |x|
    return unary_eltwise(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& a, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0)
        throw ParameterError("leaky_relu: alpha must be in [0,1), got " + std::to_string(alpha));
    return unary_eltwise(a, [alpha](double x) { return x >= 0.0 ? x : alpha * x; },
                         [alpha](double x, double) { return x >= 0.0 ? 1.0 : alpha; });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.values()) s += x;  // sequential, index order
    return make_op_node({1}, {s}, {a}, [](detail::Node& n) {
        auto& in = *n.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < in.value.size(); ++i) in.grad[i] += n.grad[0];
    });
}

Tensor add_n(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw DimensionError("add_n: empty input list");
    for (const Tensor& t : xs) check_same_shape(xs[0], t, "add_n");
    std::vector<double> out(xs[0].values().size(), 0.0);
    for (const Tensor& t : xs) {
        const auto& v = t.values();
        for (size_t i = 0; i < v.size(); ++i) out[i] += v[i];
    }
    return make_op_node(xs[0].shape(), std::move(out), xs, [](detail::Node& n) {
        for (auto& inp : n.inputs) {
            inp->ensure_grad();
            for (size_t i = 0; i < n.value.size(); ++i) inp->grad[i] += n.grad[i];
        }
    });
}

Tensor gather_scalar(const Tensor& a, int64_t flat_index) {
    if (flat_index < 0 || flat_index >= a.numel())
        throw DimensionError("gather_scalar: index " + std::to_string(flat_index) +
                             " out of range for " + std::to_string(a.numel()) + " elements");
    size_t idx = static_cast<size_t>(flat_index);
    return make_op_node({1}, {a.values()[idx]}, {a}, [idx](detail::Node& n) {
        auto& in = *n.inputs[0];
        in.ensure_grad();
        in.grad[idx] += n.grad[0];
    });
}

Tensor weighted_sumsq(const Tensor& a, const std::vector<double>& w) {
    if (w.size() != a.values().size())
        throw DimensionError("weighted_sumsq: weight length mismatch");
    const auto& av = a.values();
    double s = 0.0;
    for (size_t i = 0; i < av.size(); ++i) s += w[i] * av[i] * av[i];
    return make_op_node({1}, {s}, {a}, [w](detail::Node& n) {
        auto& in = *n.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < in.value.size(); ++i)
            in.grad[i] += n.grad[0] * 2.0 * w[i] * in.value[i];
    });
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw DimensionError("stack_scalars: empty input list");
    std::vector<double> out;
    out.reserve(xs.size());
    for (const Tensor& t : xs) out.push_back(t.scalar_value());
    return make_op_node({static_cast<int>(xs.size())}, std::move(out), xs,
                        [](detail::Node& n) {
                            for (size_t i = 0; i < n.inputs.size(); ++i) {
                                n.inputs[i]->ensure_grad();
                                n.inputs[i]->grad[0] += n.grad[i];
                            }
                        });
}

}  // namespace shapednet

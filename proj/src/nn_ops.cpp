#include <cmath>

#include "shapednet/tensor.hpp"

namespace shapednet {

namespace {

// Normalize rank-3 [C,H,W] to a single-image batch view.
struct Chw {
    int n, c, h, w;
};

Chw as_batched(const Tensor& t, const char* op) {
    if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
    if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
    throw DimensionError(std::string(op) + ": expected rank 3 or 4, got " + shape_str(t.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    if (pad < 0) throw ParameterError("conv2d: pad must be >= 0");
    if (kernel.rank() != 4)
        throw DimensionError("conv2d: kernel must be rank 4, got " + shape_str(kernel.shape()));
    Chw in = as_batched(input, "conv2d");
    const int co = kernel.dim(0), ci = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (ci != in.c)
        throw DimensionError("conv2d: kernel expects " + std::to_string(ci) +
                             " input channels, input has " + std::to_string(in.c));
    if (in.h + 2 * pad < kh || in.w + 2 * pad < kw)
        throw DimensionError("conv2d: kernel larger than padded input");
    const int oh = (in.h + 2 * pad - kh) / stride + 1;
    const int ow = (in.w + 2 * pad - kw) / stride + 1;

    const auto& iv = input.values();
    const auto& kv = kernel.values();
    std::vector<double> out(static_cast<size_t>(in.n) * co * oh * ow);
    // Fixed accumulation order (ci, ky, kx) per output cell keeps reruns
    // bit-identical.
    const int n = in.n, ih = in.h, iw = in.w, icn = in.c;
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    const int y0 = oy * stride - pad, x0 = ox * stride - pad;
                    for (int c = 0; c < ci; ++c)
                        for (int ky = 0; ky < kh; ++ky) {
                            const int y = y0 + ky;
                            if (y < 0 || y >= ih) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int x = x0 + kx;
                                if (x < 0 || x >= iw) continue;
                                acc += iv[((static_cast<size_t>(b) * icn + c) * ih + y) * iw + x] *
                                       kv[((static_cast<size_t>(o) * ci + c) * kh + ky) * kw + kx];
                            }
                        }
                    out[((static_cast<size_t>(b) * co + o) * oh + oy) * ow + ox] = acc;
                }

    Shape out_shape = input.rank() == 3 ? Shape{co, oh, ow} : Shape{n, co, oh, ow};
    return make_op_node(
        std::move(out_shape), std::move(out), {input, kernel},
        [stride, pad, n, icn, ih, iw, co, ci, kh, kw, oh, ow](detail::Node& nd) {
            auto& nin = *nd.inputs[0];
            auto& nk = *nd.inputs[1];
            nin.ensure_grad();
            nk.ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int o = 0; o < co; ++o)
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox) {
                            const double g =
                                nd.grad[((static_cast<size_t>(b) * co + o) * oh + oy) * ow + ox];
                            if (g == 0.0) continue;
                            const int y0 = oy * stride - pad, x0 = ox * stride - pad;
                            for (int c = 0; c < ci; ++c)
                                for (int ky = 0; ky < kh; ++ky) {
                                    const int y = y0 + ky;
                                    if (y < 0 || y >= ih) continue;
                                    for (int kx = 0; kx < kw; ++kx) {
                                        const int x = x0 + kx;
                                        if (x < 0 || x >= iw) continue;
                                        const size_t ii =
                                            ((static_cast<size_t>(b) * icn + c) * ih + y) * iw + x;
                                        const size_t ki =
                                            ((static_cast<size_t>(o) * ci + c) * kh + ky) * kw + kx;
                                        nin.grad[ii] += g * nk.value[ki];
                                        nk.grad[ki] += g * nin.value[ii];
                                    }
                                }
                        }
        });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps, bool train, BatchNormStats& stats, double momentum) {
    if (eps <= 0.0) throw ParameterError("batch_norm: eps must be > 0");
    Chw in = as_batched(input, "batch_norm");
    const int C = in.c;
    if (gamma.numel() != C || beta.numel() != C)
        throw DimensionError("batch_norm: gamma/beta length must equal channel count " +
                             std::to_string(C));
    if (static_cast<int>(stats.running_mean.size()) != C ||
        static_cast<int>(stats.running_var.size()) != C)
        throw DimensionError("batch_norm: running stats not initialized for " +
                             std::to_string(C) + " channels");

    const auto& iv = input.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    const int n = in.n, H = in.h, W = in.w;
    const size_t plane = static_cast<size_t>(H) * W;
    const double m = static_cast<double>(n) * static_cast<double>(plane);

    std::vector<double> mean(static_cast<size_t>(C)), var(static_cast<size_t>(C));
    if (train) {
        // Batch statistics over batch+spatial dims, biased variance.
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int b = 0; b < n; ++b) {
                const double* p = iv.data() + (static_cast<size_t>(b) * C + c) * plane;
                for (size_t i = 0; i < plane; ++i) s += p[i];
            }
            mean[static_cast<size_t>(c)] = s / m;
            double sq = 0.0;
            for (int b = 0; b < n; ++b) {
                const double* p = iv.data() + (static_cast<size_t>(b) * C + c) * plane;
                for (size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean[static_cast<size_t>(c)];
                    sq += d * d;
                }
            }
            var[static_cast<size_t>(c)] = sq / m;
        }
        for (int c = 0; c < C; ++c) {
            stats.running_mean[static_cast<size_t>(c)] =
                (1.0 - momentum) * stats.running_mean[static_cast<size_t>(c)] +
                momentum * mean[static_cast<size_t>(c)];
            stats.running_var[static_cast<size_t>(c)] =
                (1.0 - momentum) * stats.running_var[static_cast<size_t>(c)] +
                momentum * var[static_cast<size_t>(c)];
        }
    } else {
        mean = stats.running_mean;
        var = stats.running_var;
    }

    std::vector<double> inv_std(static_cast<size_t>(C));
    for (int c = 0; c < C; ++c)
        inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);

    std::vector<double> out(iv.size());
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(b) * C + c) * plane;
            const double mu = mean[static_cast<size_t>(c)];
            const double is = inv_std[static_cast<size_t>(c)];
            const double ga = gv[static_cast<size_t>(c)], be = bv[static_cast<size_t>(c)];
            for (size_t i = 0; i < plane; ++i)
                out[base + i] = ga * (iv[base + i] - mu) * is + be;
        }

    return make_op_node(
        input.shape(), std::move(out), {input, gamma, beta},
        [train, n, C, plane, m, mean, inv_std](detail::Node& nd) {
            auto& nx = *nd.inputs[0];
            auto& ng = *nd.inputs[1];
            auto& nb = *nd.inputs[2];
            nx.ensure_grad();
            ng.ensure_grad();
            nb.ensure_grad();
            for (int c = 0; c < C; ++c) {
                const double mu = mean[static_cast<size_t>(c)];
                const double is = inv_std[static_cast<size_t>(c)];
                const double ga = ng.value[static_cast<size_t>(c)];
                // Per-channel reductions over the incoming gradient.
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int b = 0; b < n; ++b) {
                    const size_t base = (static_cast<size_t>(b) * C + c) * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        const double dy = nd.grad[base + i];
                        sum_dy += dy;
                        sum_dy_xhat += dy * (nx.value[base + i] - mu) * is;
                    }
                }
                ng.grad[static_cast<size_t>(c)] += sum_dy_xhat;
                nb.grad[static_cast<size_t>(c)] += sum_dy;
                if (train) {
                    // dL/dx = γ·is/m · (m·dy − Σdy − x̂·Σ(dy·x̂))
                    for (int b = 0; b < n; ++b) {
                        const size_t base = (static_cast<size_t>(b) * C + c) * plane;
                        for (size_t i = 0; i < plane; ++i) {
                            const double xhat = (nx.value[base + i] - mu) * is;
                            nx.grad[base + i] += ga * is / m *
                                                 (m * nd.grad[base + i] - sum_dy -
                                                  xhat * sum_dy_xhat);
                        }
                    }
                } else {
                    // Running stats are constants: plain affine transform.
                    for (int b = 0; b < n; ++b) {
                        const size_t base = (static_cast<size_t>(b) * C + c) * plane;
                        for (size_t i = 0; i < plane; ++i)
                            nx.grad[base + i] += nd.grad[base + i] * ga * is;
                    }
                }
            }
        });
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
    Chw in = as_batched(input, "add_channel_bias");
    if (bias.rank() != 1 || bias.dim(0) != in.c)
        throw DimensionError("add_channel_bias: bias must be rank 1 of length " +
                             std::to_string(in.c));
    const auto& iv = input.values();
    const auto& bv = bias.values();
    const size_t plane = static_cast<size_t>(in.h) * in.w;
    std::vector<double> out(iv.size());
    for (int b = 0; b < in.n; ++b)
        for (int c = 0; c < in.c; ++c) {
            const size_t base = (static_cast<size_t>(b) * in.c + c) * plane;
            for (size_t i = 0; i < plane; ++i) out[base + i] = iv[base + i] + bv[static_cast<size_t>(c)];
        }
    const int n = in.n, C = in.c;
    return make_op_node(input.shape(), std::move(out), {input, bias},
                        [n, C, plane](detail::Node& nd) {
                            auto& nin = *nd.inputs[0];
                            auto& nb = *nd.inputs[1];
                            nin.ensure_grad();
                            nb.ensure_grad();
                            for (int b = 0; b < n; ++b)
                                for (int c = 0; c < C; ++c) {
                                    const size_t base = (static_cast<size_t>(b) * C + c) * plane;
                                    for (size_t i = 0; i < plane; ++i) {
                                        nin.grad[base + i] += nd.grad[base + i];
                                        nb.grad[static_cast<size_t>(c)] += nd.grad[base + i];
                                    }
                                }
                        });
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("residual_add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    return add(a, b);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank())
        throw DimensionError("concat_channels: rank mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Chw ca = as_batched(a, "concat_channels");
    Chw cb = as_batched(b, "concat_channels");
    if (ca.n != cb.n || ca.h != cb.h || ca.w != cb.w)
        throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    const size_t plane = static_cast<size_t>(ca.h) * ca.w;
    const size_t asz = static_cast<size_t>(ca.c) * plane, bsz = static_cast<size_t>(cb.c) * plane;
    std::vector<double> out((asz + bsz) * static_cast<size_t>(ca.n));
    for (int n = 0; n < ca.n; ++n) {
        const size_t dst = static_cast<size_t>(n) * (asz + bsz);
        std::copy(a.values().begin() + static_cast<long>(n * asz),
                  a.values().begin() + static_cast<long>((n + 1) * asz),
                  out.begin() + static_cast<long>(dst));
        std::copy(b.values().begin() + static_cast<long>(n * bsz),
                  b.values().begin() + static_cast<long>((n + 1) * bsz),
                  out.begin() + static_cast<long>(dst + asz));
    }
    Shape out_shape = a.rank() == 3 ? Shape{ca.c + cb.c, ca.h, ca.w}
                                    : Shape{ca.n, ca.c + cb.c, ca.h, ca.w};
    const int nimg = ca.n;
    return make_op_node(std::move(out_shape), std::move(out), {a, b},
                        [nimg, asz, bsz](detail::Node& nd) {
                            auto& na = *nd.inputs[0];
                            auto& nb = *nd.inputs[1];
                            na.ensure_grad();
                            nb.ensure_grad();
                            for (int n = 0; n < nimg; ++n) {
                                const size_t src = static_cast<size_t>(n) * (asz + bsz);
                                for (size_t i = 0; i < asz; ++i)
                                    na.grad[static_cast<size_t>(n) * asz + i] += nd.grad[src + i];
                                for (size_t i = 0; i < bsz; ++i)
                                    nb.grad[static_cast<size_t>(n) * bsz + i] +=
                                        nd.grad[src + asz + i];
                            }
                        });
}

Tensor upsample_nearest2x(const Tensor& input) {
    Chw dims = as_batched(input, "upsample_nearest2x");
    // Replication is per trailing 2-D plane, so batch and channel axes fold
    // into one loop.
    const int c = dims.n * dims.c, h = dims.h, w = dims.w;
    const auto& iv = input.values();
    std::vector<double> out(static_cast<size_t>(c) * 4 * h * w);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x = 0; x < 2 * w; ++x)
                out[(static_cast<size_t>(ch) * 2 * h + y) * 2 * w + x] =
                    iv[(static_cast<size_t>(ch) * h + y / 2) * w + x / 2];
    Shape out_shape = input.rank() == 3 ? Shape{dims.c, 2 * h, 2 * w}
                                        : Shape{dims.n, dims.c, 2 * h, 2 * w};
    return make_op_node(std::move(out_shape), std::move(out), {input},
                        [c, h, w](detail::Node& nd) {
                            auto& in = *nd.inputs[0];
                            in.ensure_grad();
                            for (int ch = 0; ch < c; ++ch)
                                for (int y = 0; y < 2 * h; ++y)
                                    for (int x = 0; x < 2 * w; ++x)
                                        in.grad[(static_cast<size_t>(ch) * h + y / 2) * w + x / 2] +=
                                            nd.grad[(static_cast<size_t>(ch) * 2 * h + y) * 2 * w + x];
                        });
}

Tensor flatten(const Tensor& input) {
    const int n = static_cast<int>(input.numel());
    return make_op_node({1, n}, input.values(), {input}, [](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < nd.value.size(); ++i) in.grad[i] += nd.grad[i];
    });
}

Tensor unflatten(const Tensor& flat, Shape shape) {
    if (shape_numel(shape) != flat.numel())
        throw DimensionError("unflatten: cannot reshape " + std::to_string(flat.numel()) +
                             " elements into " + shape_str(shape));
    return make_op_node(std::move(shape), flat.values(), {flat}, [](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < nd.value.size(); ++i) in.grad[i] += nd.grad[i];
    });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || x.dim(0) != 1)
        throw DimensionError("dense: input must be [1,N], got " + shape_str(x.shape()));
    if (w.shape() != x.shape())
        throw DimensionError("dense: weight shape " + shape_str(w.shape()) +
                             " must match input " + shape_str(x.shape()));
    if (bias.numel() != 1) throw DimensionError("dense: bias must be a single value");
    const auto& xv = x.values();
    const auto& wv = w.values();
    double acc = 0.0;
    for (size_t i = 0; i < xv.size(); ++i) acc += xv[i] * wv[i];  // sequential dot
    acc += bias.values()[0];
    return make_op_node({1, 1}, {acc}, {x, w, bias}, [](detail::Node& nd) {
        auto& nx = *nd.inputs[0];
        auto& nw = *nd.inputs[1];
        auto& nb = *nd.inputs[2];
        nx.ensure_grad();
        nw.ensure_grad();
        nb.ensure_grad();
        const double g = nd.grad[0];
        for (size_t i = 0; i < nx.value.size(); ++i) {
            nx.grad[i] += g * nw.value[i];
            nw.grad[i] += g * nx.value[i];
        }
        nb.grad[0] += g;
    });
}

Tensor dropout(const Tensor& input, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ParameterError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!train || rate == 0.0) return input;
    const double scale = 1.0 / (1.0 - rate);
    const auto& iv = input.values();
    std::vector<double> mask(iv.size());
    for (size_t i = 0; i < iv.size(); ++i)
        mask[i] = rng.uniform() >= rate ? scale : 0.0;
    std::vector<double> out(iv.size());
    for (size_t i = 0; i < iv.size(); ++i) out[i] = iv[i] * mask[i];
    return make_op_node(input.shape(), std::move(out), {input}, [mask](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < nd.value.size(); ++i) in.grad[i] += nd.grad[i] * mask[i];
    });
}

Tensor select_image(const Tensor& batched, int n) {
    if (batched.rank() != 4)
        throw DimensionError("select_image: expected rank-4 input, got " +
                             shape_str(batched.shape()));
    if (n < 0 || n >= batched.dim(0))
        throw DimensionError("select_image: index " + std::to_string(n) + " out of range");
    const int c = batched.dim(1), h = batched.dim(2), w = batched.dim(3);
    const size_t sz = static_cast<size_t>(c) * h * w;
    const size_t off = static_cast<size_t>(n) * sz;
    std::vector<double> out(batched.values().begin() + static_cast<long>(off),
                            batched.values().begin() + static_cast<long>(off + sz));
    return make_op_node({c, h, w}, std::move(out), {batched}, [off](detail::Node& nd) {
        auto& in = *nd.inputs[0];
        in.ensure_grad();
        for (size_t i = 0; i < nd.value.size(); ++i) in.grad[off + i] += nd.grad[i];
    });
}

Tensor to_grid_layout(const Tensor& head, int anchors, int features) {
    Chw dims = as_batched(head, "to_grid_layout");
    if (dims.c != anchors * features)
        throw DimensionError("to_grid_layout: channels " + std::to_string(dims.c) +
                             " != anchors*features " + std::to_string(anchors * features));
    const int n = dims.n, h = dims.h, w = dims.w;
    const size_t img = static_cast<size_t>(dims.c) * h * w;
    const auto& iv = head.values();
    std::vector<double> out(iv.size());
    // out[b][y][x][a][f] = in[b][a*F+f][y][x]
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int a = 0; a < anchors; ++a)
                    for (int f = 0; f < features; ++f)
                        out[static_cast<size_t>(b) * img +
                            ((static_cast<size_t>(y) * w + x) * anchors + a) * features + f] =
                            iv[static_cast<size_t>(b) * img +
                               (static_cast<size_t>(a) * features + f) * h * w +
                               static_cast<size_t>(y) * w + x];
    Shape out_shape = head.rank() == 3 ? Shape{h, w, anchors, features}
                                       : Shape{n, h, w, anchors, features};
    return make_op_node(
        std::move(out_shape), std::move(out), {head},
        [n, img, anchors, features, h, w](detail::Node& nd) {
            auto& in = *nd.inputs[0];
            in.ensure_grad();
            for (int b = 0; b < n; ++b)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        for (int a = 0; a < anchors; ++a)
                            for (int f = 0; f < features; ++f)
                                in.grad[static_cast<size_t>(b) * img +
                                        (static_cast<size_t>(a) * features + f) * h * w +
                                        static_cast<size_t>(y) * w + x] +=
                                    nd.grad[static_cast<size_t>(b) * img +
                                            ((static_cast<size_t>(y) * w + x) * anchors + a) *
                                                features + f];
        });
}

}  // namespace shapednet
